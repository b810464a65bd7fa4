#include "mvod/objective.hpp"

#include <algorithm>
#include <cmath>

#include "mvod/errors.hpp"

namespace mvod {

namespace {

// Per-view working set: the union of rows any loss term touches, encoded
// fresh when observed and copied from the epoch's imputed constants otherwise.
struct ViewWork {
    std::vector<std::size_t> ids;       // ascending absolute ids
    std::vector<std::int64_t> local;    // absolute id -> local row, -1 outside
    std::vector<std::uint8_t> live;     // local row carries gradients
    std::vector<std::size_t> live_rows; // local rows in encode order
    Matrix z;
    Matrix dz;
    ForwardCache cache;
};

void require(bool ok, const char* message) {
    if (!ok) throw ContractViolation(message);
}

void check_term_finite(double value, const std::vector<ViewWork>& work, bool with_grads,
                       const char* term) {
    if (!std::isfinite(value))
        throw NumericError(std::string("non-finite loss in ") + term);
    if (!with_grads) return;
    for (const ViewWork& w : work)
        if (!all_finite(w.dz))
            throw NumericError(std::string("non-finite gradient in ") + term);
}

} // namespace

LossBreakdown objective_eval(const AutoencoderStack& stack, const MultiViewDataset& data,
                             const BatchSpec& spec, GradientSet* grads) {
    const std::size_t n_views = data.n_views();
    require(stack.n_views() == n_views, "objective_eval: stack/view mismatch");
    require(!spec.anchors.empty(), "objective_eval: empty batch");
    require(spec.koleo_rows.empty() || spec.koleo_rows.size() == n_views,
            "objective_eval: koleo rows per view");
    require(spec.rank_choices.empty() || spec.rank_choices.size() == n_views,
            "objective_eval: rank choices per view");
    if (!spec.na_anchors.empty() && spec.flags.na)
        require(spec.index && spec.index->size() == n_views,
                "objective_eval: neighbor index required for alignment");

    const std::size_t latent = stack.latent_dim();
    const std::size_t n_all = data.n();
    const bool with_grads = grads != nullptr;
    if (with_grads) *grads = GradientSet::zeros_like(stack);

    // Collect the rows each view must provide.
    std::vector<std::vector<std::size_t>> needed(n_views);
    for (std::size_t v = 0; v < n_views; ++v) {
        if (spec.flags.ar)
            for (std::size_t i : spec.anchors)
                if (data.present(v, i)) needed[v].push_back(i);
        if (spec.flags.oa)
            for (std::size_t i : spec.oa_anchors) needed[v].push_back(i);
        if (spec.flags.na)
            for (std::size_t i : spec.na_anchors) {
                require((*spec.index)[v].has_list(i),
                        "objective_eval: alignment anchor lacks a neighbor list");
                const auto& list = (*spec.index)[v].lists[i];
                needed[v].insert(needed[v].end(), list.begin(), list.end());
            }
        if (spec.flags.koleo && !spec.koleo_rows.empty())
            needed[v].insert(needed[v].end(), spec.koleo_rows[v].begin(),
                             spec.koleo_rows[v].end());
        if (spec.flags.rank && !spec.rank_choices.empty()) {
            const RankChoices& rc = spec.rank_choices[v];
            needed[v].insert(needed[v].end(), rc.anchor.begin(), rc.anchor.end());
            needed[v].insert(needed[v].end(), rc.positive.begin(), rc.positive.end());
            needed[v].insert(needed[v].end(), rc.negative.begin(), rc.negative.end());
        }
    }

    std::vector<ViewWork> work(n_views);
    for (std::size_t v = 0; v < n_views; ++v) {
        ViewWork& w = work[v];
        w.ids = std::move(needed[v]);
        std::sort(w.ids.begin(), w.ids.end());
        w.ids.erase(std::unique(w.ids.begin(), w.ids.end()), w.ids.end());
        w.local.assign(n_all, -1);
        w.live.assign(w.ids.size(), 0);
        w.z = Matrix(w.ids.size(), latent);
        w.dz = Matrix(w.ids.size(), latent);

        std::size_t n_live = 0;
        for (std::size_t r = 0; r < w.ids.size(); ++r) {
            const std::size_t id = w.ids[r];
            require(id < n_all, "objective_eval: instance id out of range");
            w.local[id] = std::int64_t(r);
            if (data.present(v, id)) {
                w.live[r] = 1;
                w.live_rows.push_back(r);
                ++n_live;
            } else {
                require(spec.constants && spec.constants->available(v, id),
                        "objective_eval: loss would read a missing latent");
                std::copy_n(spec.constants->z[v].row(id).data(), latent,
                            w.z.row(r).data());
            }
        }
        if (n_live > 0) {
            Matrix x(n_live, data.views[v].cols);
            for (std::size_t r = 0; r < n_live; ++r)
                std::copy_n(data.views[v].row(w.ids[w.live_rows[r]]).data(), x.cols,
                            x.row(r).data());
            const Matrix z_live = encode(stack, v, x, with_grads ? &w.cache : nullptr);
            for (std::size_t r = 0; r < n_live; ++r)
                std::copy_n(z_live.row(r).data(), latent, w.z.row(w.live_rows[r]).data());
        }
    }

    auto local_row = [&work](std::size_t v, std::size_t id, const char* who) {
        const std::int64_t r = work[v].local[id];
        require(r >= 0, who);
        return static_cast<std::size_t>(r);
    };

    double l_ar = 0.0, l_oa = 0.0, l_na = 0.0, l_koleo = 0.0, l_rank = 0.0;
    LossBreakdown breakdown;

    // Reconstruction on present anchor rows.
    if (spec.flags.ar) {
        for (std::size_t v = 0; v < n_views; ++v) {
            std::vector<std::size_t> rows;
            for (std::size_t i : spec.anchors)
                if (data.present(v, i)) rows.push_back(i);
            if (rows.empty()) continue;
            Matrix zb(rows.size(), latent);
            for (std::size_t r = 0; r < rows.size(); ++r)
                std::copy_n(work[v].z.row(local_row(v, rows[r], "ar row")).data(), latent,
                            zb.row(r).data());
            ForwardCache dec_cache;
            const Matrix xhat =
                decode(stack, v, zb, with_grads ? &dec_cache : nullptr);
            Matrix d_xhat;
            if (with_grads) d_xhat = Matrix(rows.size(), xhat.cols);
            for (std::size_t r = 0; r < rows.size(); ++r) {
                const auto x = data.views[v].row(rows[r]);
                const auto xh = xhat.row(r);
                l_ar += 0.5 * squared_distance(x, xh);
                if (with_grads) {
                    auto g = d_xhat.row(r);
                    for (std::size_t j = 0; j < x.size(); ++j) g[j] = xh[j] - x[j];
                }
            }
            if (with_grads) {
                const Matrix d_zb = backprop_layers(stack.views[v].decoder, dec_cache,
                                                    std::move(d_xhat),
                                                    grads->views[v].decoder);
                for (std::size_t r = 0; r < rows.size(); ++r)
                    axpy(1.0, d_zb.row(r), work[v].dz.row(local_row(v, rows[r], "ar row")));
            }
        }
        check_term_finite(l_ar, work, with_grads, "reconstruction");
    }

    const std::size_t n_pairs = n_views * (n_views - 1) / 2;
    const double pair_norm = n_pairs > 0 ? 1.0 / double(n_pairs) : 0.0;

    // Outlier-aware contrastive term over anchors with latents in every view.
    if (spec.flags.oa && !spec.oa_anchors.empty()) {
        breakdown.per_instance_contrastive.assign(spec.oa_anchors.size(), 0.0);
        for (std::size_t a = 0; a < n_views; ++a) {
            for (std::size_t b = a + 1; b < n_views; ++b) {
                const std::size_t na = spec.oa_anchors.size();
                Matrix za(na, latent), zb(na, latent);
                Matrix dza, dzb;
                if (with_grads) {
                    dza = Matrix(na, latent);
                    dzb = Matrix(na, latent);
                }
                for (std::size_t r = 0; r < na; ++r) {
                    const std::size_t i = spec.oa_anchors[r];
                    std::copy_n(work[a].z.row(local_row(a, i, "oa row")).data(), latent,
                                za.row(r).data());
                    std::copy_n(work[b].z.row(local_row(b, i, "oa row")).data(), latent,
                                zb.row(r).data());
                }
                const ContrastiveOut out = outlier_aware_contrastive(
                    za, zb, spec.bank, a, b, spec.tau, spec.lambda1 * pair_norm,
                    with_grads ? &dza : nullptr, with_grads ? &dzb : nullptr);
                l_oa += out.loss * pair_norm;
                for (std::size_t r = 0; r < na; ++r)
                    breakdown.per_instance_contrastive[r] +=
                        out.per_instance[r] * pair_norm;
                if (with_grads) {
                    for (std::size_t r = 0; r < na; ++r) {
                        const std::size_t i = spec.oa_anchors[r];
                        axpy(1.0, dza.row(r), work[a].dz.row(local_row(a, i, "oa row")));
                        axpy(1.0, dzb.row(r), work[b].dz.row(local_row(b, i, "oa row")));
                    }
                }
            }
        }
        check_term_finite(l_oa, work, with_grads, "outlier-aware contrastive");
    }

    // Neighbor alignment: rank-t neighbor rows per view, averaged over ranks.
    if (spec.flags.na && !spec.na_anchors.empty()) {
        const std::size_t k = (*spec.index)[0].k;
        for (std::size_t v = 1; v < n_views; ++v)
            require((*spec.index)[v].k == k, "objective_eval: neighbor list depths differ");
        const std::size_t na = spec.na_anchors.size();
        for (std::size_t a = 0; a < n_views; ++a) {
            for (std::size_t b = a + 1; b < n_views; ++b) {
                const double scale = spec.lambda2 * pair_norm / double(k);
                for (std::size_t t = 0; t < k; ++t) {
                    Matrix za(na, latent), zb(na, latent);
                    Matrix dza, dzb;
                    if (with_grads) {
                        dza = Matrix(na, latent);
                        dzb = Matrix(na, latent);
                    }
                    for (std::size_t r = 0; r < na; ++r) {
                        const std::size_t i = spec.na_anchors[r];
                        const std::size_t ia = (*spec.index)[a].lists[i][t];
                        const std::size_t ib = (*spec.index)[b].lists[i][t];
                        std::copy_n(work[a].z.row(local_row(a, ia, "na row")).data(),
                                    latent, za.row(r).data());
                        std::copy_n(work[b].z.row(local_row(b, ib, "na row")).data(),
                                    latent, zb.row(r).data());
                    }
                    const ContrastiveOut out = contrastive_pair_loss(
                        za, zb, {}, {}, spec.na_tau, scale,
                        with_grads ? &dza : nullptr, with_grads ? &dzb : nullptr);
                    l_na += out.loss * pair_norm / double(k);
                    if (with_grads) {
                        for (std::size_t r = 0; r < na; ++r) {
                            const std::size_t i = spec.na_anchors[r];
                            const std::size_t ia = (*spec.index)[a].lists[i][t];
                            const std::size_t ib = (*spec.index)[b].lists[i][t];
                            axpy(1.0, dza.row(r),
                                 work[a].dz.row(local_row(a, ia, "na row")));
                            axpy(1.0, dzb.row(r),
                                 work[b].dz.row(local_row(b, ib, "na row")));
                        }
                    }
                }
            }
        }
        check_term_finite(l_na, work, with_grads, "neighbor alignment");
    }

    // Spreading terms per view.
    if (spec.flags.koleo && !spec.koleo_rows.empty()) {
        for (std::size_t v = 0; v < n_views; ++v) {
            if (spec.koleo_rows[v].size() < 2) continue;
            std::vector<std::size_t> rows;
            rows.reserve(spec.koleo_rows[v].size());
            for (std::size_t i : spec.koleo_rows[v])
                rows.push_back(local_row(v, i, "koleo row"));
            l_koleo += koleo_loss_view(work[v].z, rows, spec.mu,
                                       with_grads ? &work[v].dz : nullptr);
        }
        check_term_finite(l_koleo, work, with_grads, "koleo spreading");
    }

    if (spec.flags.rank && !spec.rank_choices.empty()) {
        for (std::size_t v = 0; v < n_views; ++v) {
            const RankChoices& rc = spec.rank_choices[v];
            if (rc.anchor.empty()) continue;
            RankChoices local_rc;
            for (std::size_t t = 0; t < rc.anchor.size(); ++t) {
                local_rc.anchor.push_back(local_row(v, rc.anchor[t], "rank row"));
                local_rc.positive.push_back(local_row(v, rc.positive[t], "rank row"));
                local_rc.negative.push_back(local_row(v, rc.negative[t], "rank row"));
            }
            l_rank += rank_loss_view(work[v].z, local_rc, spec.rank_sign, spec.mu,
                                     with_grads ? &work[v].dz : nullptr);
        }
        check_term_finite(l_rank, work, with_grads, "rank spreading");
    }

    // Backprop the accumulated latent gradients through each encoder. Rows
    // copied from constants are dropped here by construction.
    if (with_grads) {
        for (std::size_t v = 0; v < n_views; ++v) {
            ViewWork& w = work[v];
            if (w.live_rows.empty()) continue;
            Matrix d_live(w.live_rows.size(), latent);
            for (std::size_t r = 0; r < w.live_rows.size(); ++r)
                std::copy_n(w.dz.row(w.live_rows[r]).data(), latent, d_live.row(r).data());
            backprop_layers(stack.views[v].encoder, w.cache, std::move(d_live),
                            grads->views[v].encoder);
        }
        if (!grads->finite())
            throw NumericError("non-finite gradient after encoder backprop");
    }

    const double mu = spec.mu;
    LossBreakdown combined = combine_losses(l_ar, l_oa, l_na, l_koleo, l_rank,
                                            spec.lambda1, spec.lambda2, mu);
    combined.per_instance_contrastive = std::move(breakdown.per_instance_contrastive);
    return combined;
}

} // namespace mvod
