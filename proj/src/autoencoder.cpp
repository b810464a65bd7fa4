#include "mvod/autoencoder.hpp"

#include <cmath>

#include "mvod/errors.hpp"

namespace mvod {

namespace {

LayerGrad zero_grad(const LayerParams& p) {
    return {Matrix(p.weight.rows, p.weight.cols), std::vector<double>(p.bias.size(), 0.0)};
}

// out = x * W + b, then ReLU unless the layer is the last of its half.
Matrix layer_forward(const LayerParams& p, const Matrix& x, bool relu, Matrix* preact) {
    if (x.cols != p.weight.rows)
        throw ContractViolation("layer_forward: input width mismatch");
    Matrix u = matmul(x, p.weight);
    for (std::size_t i = 0; i < u.rows; ++i)
        for (std::size_t j = 0; j < u.cols; ++j) u.at(i, j) += p.bias[j];
    if (preact) *preact = u;
    if (relu)
        for (double& v : u.data) v = v > 0.0 ? v : 0.0;
    return u;
}

} // namespace

Matrix forward_layers(const std::vector<LayerParams>& layers, const Matrix& x,
                      ForwardCache* cache) {
    if (layers.empty())
        throw ContractViolation("forward_layers: empty layer stack");
    if (cache) {
        cache->layer_inputs.clear();
        cache->preacts.clear();
    }
    Matrix h = x;
    for (std::size_t l = 0; l < layers.size(); ++l) {
        const bool relu = l + 1 < layers.size();
        Matrix preact;
        if (cache) cache->layer_inputs.push_back(h);
        h = layer_forward(layers[l], h, relu, cache ? &preact : nullptr);
        if (cache) cache->preacts.push_back(std::move(preact));
    }
    return h;
}

Matrix backprop_layers(const std::vector<LayerParams>& layers, const ForwardCache& cache,
                       Matrix d_out, std::vector<LayerGrad>& grads) {
    if (cache.layer_inputs.size() != layers.size())
        throw ContractViolation("backprop_layers: cache does not match layer stack");
    if (grads.size() != layers.size()) {
        grads.clear();
        for (const auto& p : layers) grads.push_back(zero_grad(p));
    }
    Matrix g = std::move(d_out);
    for (std::size_t li = layers.size(); li-- > 0;) {
        const bool relu = li + 1 < layers.size();
        if (relu) {
            const Matrix& u = cache.preacts[li];
            for (std::size_t i = 0; i < g.data.size(); ++i)
                if (u.data[i] <= 0.0) g.data[i] = 0.0;
        }
        const Matrix& in = cache.layer_inputs[li];
        LayerGrad& lg = grads[li];
        // dW += in^T * g ; db += column sums of g ; g_prev = g * W^T
        for (std::size_t r = 0; r < in.rows; ++r) {
            const double* xi = in.data.data() + r * in.cols;
            const double* gi = g.data.data() + r * g.cols;
            for (std::size_t k = 0; k < in.cols; ++k) {
                const double x = xi[k];
                if (x == 0.0) continue;
                double* wrow = lg.weight.data.data() + k * lg.weight.cols;
                for (std::size_t j = 0; j < g.cols; ++j) wrow[j] += x * gi[j];
            }
            for (std::size_t j = 0; j < g.cols; ++j) lg.bias[j] += gi[j];
        }
        Matrix g_prev(g.rows, layers[li].weight.rows);
        const Matrix& w = layers[li].weight;
        for (std::size_t r = 0; r < g.rows; ++r) {
            const double* gi = g.data.data() + r * g.cols;
            double* out = g_prev.data.data() + r * g_prev.cols;
            for (std::size_t k = 0; k < w.rows; ++k) out[k] = dot({w.data.data() + k * w.cols, w.cols}, {gi, g.cols});
        }
        g = std::move(g_prev);
    }
    return g;
}

Matrix encode(const AutoencoderStack& s, std::size_t view, const Matrix& x,
              ForwardCache* cache) {
    if (view >= s.n_views())
        throw ContractViolation("encode: view out of range");
    return forward_layers(s.views[view].encoder, x, cache);
}

Matrix decode(const AutoencoderStack& s, std::size_t view, const Matrix& z,
              ForwardCache* cache) {
    if (view >= s.n_views())
        throw ContractViolation("decode: view out of range");
    return forward_layers(s.views[view].decoder, z, cache);
}

AutoencoderStack init_params(const std::vector<std::vector<std::size_t>>& widths_per_view,
                             RngStream& rng) {
    if (widths_per_view.empty())
        throw ContractViolation("init_params: no views");
    AutoencoderStack s;
    const std::size_t latent = widths_per_view.front().back();
    for (const auto& widths : widths_per_view) {
        if (widths.size() < 2)
            throw ContractViolation("init_params: a view needs at least input and latent widths");
        if (widths.back() != latent)
            throw ContractViolation("init_params: latent width must be shared across views");
        ViewAutoencoder va;
        auto make_layer = [&rng](std::size_t fan_in, std::size_t fan_out) {
            LayerParams p;
            p.weight = Matrix(fan_in, fan_out);
            p.bias.assign(fan_out, 0.0);
            const double bound = std::sqrt(6.0 / double(fan_in + fan_out));
            for (double& w : p.weight.data) w = rng.uniform(-bound, bound);
            return p;
        };
        for (std::size_t l = 0; l + 1 < widths.size(); ++l)
            va.encoder.push_back(make_layer(widths[l], widths[l + 1]));
        for (std::size_t l = widths.size(); l-- > 1;)
            va.decoder.push_back(make_layer(widths[l], widths[l - 1]));
        s.views.push_back(std::move(va));
    }
    return s;
}

GradientSet GradientSet::zeros_like(const AutoencoderStack& s) {
    GradientSet g;
    for (const auto& view : s.views) {
        ViewGrad vg;
        for (const auto& p : view.encoder) vg.encoder.push_back(zero_grad(p));
        for (const auto& p : view.decoder) vg.decoder.push_back(zero_grad(p));
        g.views.push_back(std::move(vg));
    }
    return g;
}

bool GradientSet::finite() const {
    for (const auto& vg : views)
        for (const auto* half : {&vg.encoder, &vg.decoder})
            for (const auto& lg : *half)
                if (!all_finite(lg.weight) || !all_finite(std::span<const double>(lg.bias)))
                    return false;
    return true;
}

AdamState AdamState::init(const AutoencoderStack& s, double learning_rate) {
    AdamState st;
    st.learning_rate = learning_rate;
    for (const auto& view : s.views) {
        View v;
        auto make_slot = [](const LayerParams& p) {
            Slot slot;
            slot.m_w = Matrix(p.weight.rows, p.weight.cols);
            slot.v_w = Matrix(p.weight.rows, p.weight.cols);
            slot.m_b.assign(p.bias.size(), 0.0);
            slot.v_b.assign(p.bias.size(), 0.0);
            return slot;
        };
        for (const auto& p : view.encoder) v.encoder.push_back(make_slot(p));
        for (const auto& p : view.decoder) v.decoder.push_back(make_slot(p));
        st.views.push_back(std::move(v));
    }
    return st;
}

namespace {

void adam_update_tensor(std::span<double> param, std::span<const double> grad,
                        std::span<double> m, std::span<double> v, std::uint64_t step,
                        const AdamState& st) {
    const double bc1 = 1.0 - std::pow(st.beta1, double(step));
    const double bc2 = 1.0 - std::pow(st.beta2, double(step));
    for (std::size_t i = 0; i < param.size(); ++i) {
        m[i] = st.beta1 * m[i] + (1.0 - st.beta1) * grad[i];
        v[i] = st.beta2 * v[i] + (1.0 - st.beta2) * grad[i] * grad[i];
        const double mhat = m[i] / bc1;
        const double vhat = v[i] / bc2;
        param[i] -= st.learning_rate * mhat / (std::sqrt(vhat) + st.epsilon);
    }
}

} // namespace

void adam_step(AutoencoderStack& s, const GradientSet& g, AdamState& st) {
    if (g.views.size() != s.n_views() || st.views.size() != s.n_views())
        throw ContractViolation("adam_step: mismatched state");
    for (std::size_t v = 0; v < s.n_views(); ++v) {
        auto update_half = [&st](std::vector<LayerParams>& layers,
                                 const std::vector<LayerGrad>& grads,
                                 std::vector<AdamState::Slot>& slots) {
            for (std::size_t l = 0; l < layers.size(); ++l) {
                AdamState::Slot& slot = slots[l];
                ++slot.step;
                adam_update_tensor(layers[l].weight.data, grads[l].weight.data,
                                   slot.m_w.data, slot.v_w.data, slot.step, st);
                adam_update_tensor(layers[l].bias, grads[l].bias, slot.m_b, slot.v_b,
                                   slot.step, st);
            }
        };
        update_half(s.views[v].encoder, g.views[v].encoder, st.views[v].encoder);
        update_half(s.views[v].decoder, g.views[v].decoder, st.views[v].decoder);
    }
}

} // namespace mvod
