#include "mvod/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "mvod/knn.hpp"
#include "mvod/objective.hpp"

namespace mvod {

namespace {

struct Fixture {
    MultiViewDataset data;
    AutoencoderStack stack;
    std::vector<NeighborIndex> index;
    MemoryBank bank{1, 1};
    BatchSpec spec;
};

Fixture make_fixture(std::uint64_t seed) {
    RngStream rng(seed);
    Fixture f;

    const std::size_t n = 6;
    const std::vector<std::size_t> dims = {4, 5};
    for (std::size_t d : dims) {
        Matrix x(n, d);
        for (double& v : x.data) v = rng.uniform();
        f.data.views.push_back(std::move(x));
    }
    f.data.presence.assign(2, std::vector<std::uint8_t>(n, 1));

    RngStream init_rng = rng.fork("init");
    f.stack = init_params({{dims[0], 5, 3}, {dims[1], 5, 3}}, init_rng);

    // Zero-init biases leave fully-dead hidden rows exactly on the ReLU kink,
    // where central differences disagree with every subgradient. Jittered
    // biases keep all preactivations away from zero.
    RngStream bias_rng = rng.fork("bias");
    for (ViewAutoencoder& view : f.stack.views)
        for (auto* half : {&view.encoder, &view.decoder})
            for (LayerParams& layer : *half)
                for (double& b : layer.bias) b = 0.2 * bias_rng.uniform() - 0.1;

    std::vector<std::size_t> all(n);
    for (std::size_t i = 0; i < n; ++i) all[i] = i;
    for (std::size_t v = 0; v < 2; ++v)
        f.index.push_back(build_knn(f.data.views[v], all, 3, NeighborSpace::InputFeatures));

    // A few latent snapshots so the bank term participates.
    f.bank = MemoryBank(6, 2);
    const Matrix z1 = encode(f.stack, 0, f.data.views[0]);
    const Matrix z2 = encode(f.stack, 1, f.data.views[1]);
    bank_push(f.bank, {&z1, &z2}, {0, 2, 5}, {0, 2, 5}, 0, 0);

    BatchSpec& s = f.spec;
    s.anchors = all;
    s.oa_anchors = all;
    s.na_anchors = all;
    s.koleo_rows = {all, all};
    RngStream pick_rng = rng.fork("rank");
    s.rank_choices = {sample_rank_choices(f.index[0], all, 2, 3, pick_rng),
                      sample_rank_choices(f.index[1], all, 2, 3, pick_rng)};
    s.tau = 0.5;
    s.na_tau = 1.0;
    return f;
}

double rel_err(double a, double b) {
    return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-3});
}

// Walk every parameter tensor in the same order for the analytic set and the
// finite-difference loop.
template <typename Fn>
void for_each_param(AutoencoderStack& stack, Fn&& fn) {
    for (std::size_t v = 0; v < stack.n_views(); ++v) {
        for (auto* half : {&stack.views[v].encoder, &stack.views[v].decoder}) {
            for (std::size_t l = 0; l < half->size(); ++l) {
                LayerParams& p = (*half)[l];
                for (std::size_t i = 0; i < p.weight.data.size(); ++i)
                    fn(v, half == &stack.views[v].decoder, l, true, i, p.weight.data[i]);
                for (std::size_t i = 0; i < p.bias.size(); ++i)
                    fn(v, half == &stack.views[v].decoder, l, false, i, p.bias[i]);
            }
        }
    }
}

double check_case(Fixture& f, const BatchSpec& spec, double step, double* worst) {
    GradientSet grads;
    objective_eval(f.stack, f.data, spec, &grads);

    double max_err = 0.0;
    for_each_param(f.stack, [&](std::size_t v, bool dec, std::size_t l, bool is_w,
                                std::size_t i, double& value) {
        const ViewGrad& vg = grads.views[v];
        const LayerGrad& lg = dec ? vg.decoder[l] : vg.encoder[l];
        const double analytic = is_w ? lg.weight.data[i] : lg.bias[i];
        const double saved = value;
        value = saved + step;
        const double f_plus = objective_eval(f.stack, f.data, spec, nullptr).total;
        value = saved - step;
        const double f_minus = objective_eval(f.stack, f.data, spec, nullptr).total;
        value = saved;
        const double numeric = (f_plus - f_minus) / (2.0 * step);
        max_err = std::max(max_err, rel_err(analytic, numeric));
    });
    if (worst) *worst = max_err;
    return max_err;
}

BatchSpec isolate(const BatchSpec& base, TermFlags flags, RankSign sign) {
    BatchSpec s = base;
    s.flags = flags;
    s.rank_sign = sign;
    s.lambda1 = 1.0;
    s.lambda2 = 1.0;
    s.mu = 1.0;
    return s;
}

} // namespace

GradCheckReport run_gradient_checks(std::size_t n_seeds, double step, double tolerance) {
    GradCheckReport report;
    for (std::size_t s = 0; s < n_seeds; ++s) {
        const std::uint64_t seed = 101 + 17 * s;
        Fixture f = make_fixture(seed);
        // The spec's pointers must target the fixture's final address, so
        // they are wired here rather than inside make_fixture.
        f.spec.index = &f.index;
        f.spec.bank = &f.bank;

        struct Case {
            const char* name;
            TermFlags flags;
            RankSign sign;
        };
        const Case cases[] = {
            {"reconstruction", {true, false, false, false, false}, RankSign::Printed},
            {"outlier_aware_contrastive", {false, true, false, false, false},
             RankSign::Printed},
            {"neighbor_alignment", {false, false, true, false, false}, RankSign::Printed},
            {"koleo", {false, false, false, true, false}, RankSign::Printed},
            {"rank_printed", {false, false, false, false, true}, RankSign::Printed},
            {"rank_triplet", {false, false, false, false, true}, RankSign::Triplet},
        };
        for (const Case& c : cases) {
            GradCheckCase out;
            out.term = c.name;
            out.seed = seed;
            check_case(f, isolate(f.spec, c.flags, c.sign), step, &out.max_rel_err);
            out.pass = out.max_rel_err <= tolerance;
            report.all_pass &= out.pass;
            report.cases.push_back(std::move(out));
        }

        // Weighted total with distinct weights so cross-term bookkeeping shows.
        BatchSpec total = f.spec;
        total.lambda1 = 0.8;
        total.lambda2 = 1.3;
        total.mu = 0.07;
        GradCheckCase out;
        out.term = "weighted_total";
        out.seed = seed;
        check_case(f, total, step, &out.max_rel_err);
        out.pass = out.max_rel_err <= tolerance;
        report.all_pass &= out.pass;
        report.cases.push_back(std::move(out));
    }
    return report;
}

} // namespace mvod
