#pragma once

#include <cstdint>
#include <vector>

#include "mvod/matrix.hpp"
#include "mvod/rng.hpp"

namespace mvod {

struct LayerParams {
    Matrix weight;            // fan_in x fan_out
    std::vector<double> bias; // fan_out
};

// One view's encoder/decoder pair. Hidden layers use ReLU; the final layer of
// both halves is linear. Decoder widths mirror the encoder's in reverse.
struct ViewAutoencoder {
    std::vector<LayerParams> encoder;
    std::vector<LayerParams> decoder;
};

struct AutoencoderStack {
    std::vector<ViewAutoencoder> views;

    std::size_t n_views() const { return views.size(); }
    std::size_t input_dim(std::size_t v) const { return views[v].encoder.front().weight.rows; }
    std::size_t latent_dim() const { return views.front().encoder.back().weight.cols; }
};

struct LayerGrad {
    Matrix weight;
    std::vector<double> bias;
};

struct ViewGrad {
    std::vector<LayerGrad> encoder;
    std::vector<LayerGrad> decoder;
};

struct GradientSet {
    std::vector<ViewGrad> views;
    static GradientSet zeros_like(const AutoencoderStack& s);
    bool finite() const;
};

// Intermediates retained by a forward pass for backprop: the input to every
// layer and each layer's pre-activation.
struct ForwardCache {
    std::vector<Matrix> layer_inputs;
    std::vector<Matrix> preacts;
};

Matrix forward_layers(const std::vector<LayerParams>& layers, const Matrix& x,
                      ForwardCache* cache);

// Gradient of the loss with respect to the layers' input, given d(loss)/d(output).
// Parameter gradients are accumulated into grads.
Matrix backprop_layers(const std::vector<LayerParams>& layers, const ForwardCache& cache,
                       Matrix d_out, std::vector<LayerGrad>& grads);

Matrix encode(const AutoencoderStack& s, std::size_t view, const Matrix& x,
              ForwardCache* cache = nullptr);
Matrix decode(const AutoencoderStack& s, std::size_t view, const Matrix& z,
              ForwardCache* cache = nullptr);

// widths_per_view[v] = {input_dim, hidden..., latent}; at least two entries.
// Weights are Xavier-uniform (+-sqrt(6/(fan_in+fan_out))), biases zero. Draw
// order is fixed: views in order, encoder then decoder, weights row-major.
AutoencoderStack init_params(const std::vector<std::vector<std::size_t>>& widths_per_view,
                             RngStream& rng);

struct AdamState {
    struct Slot {
        Matrix m_w, v_w;
        std::vector<double> m_b, v_b;
        std::uint64_t step = 0;
    };
    struct View {
        std::vector<Slot> encoder;
        std::vector<Slot> decoder;
    };
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    double learning_rate = 1e-3;
    std::vector<View> views;

    static AdamState init(const AutoencoderStack& s, double learning_rate);
};

// Standard Adam update with bias correction; a zero gradient leaves
// zero-moment parameters unchanged while still advancing the step counter.
void adam_step(AutoencoderStack& s, const GradientSet& g, AdamState& st);

} // namespace mvod
