#include "mvod/losses.hpp"

#include <algorithm>
#include <cmath>

#include "mvod/errors.hpp"

namespace mvod {

MemoryBank::MemoryBank(std::size_t capacity, std::size_t n_views)
    : capacity_(capacity), n_views_(n_views) {
    if (capacity == 0)
        throw ContractViolation("MemoryBank: capacity must be positive");
    if (n_views == 0)
        throw ContractViolation("MemoryBank: need at least one view");
}

void MemoryBank::push(Entry e) {
    if (e.latents.size() != n_views_)
        throw ContractViolation("MemoryBank::push: wrong view count");
    entries_.push_back(std::move(e));
    while (entries_.size() > capacity_) entries_.pop_front();
}

std::vector<std::size_t> select_potential_outliers(const Matrix& z1, const Matrix& z2,
                                                   double eta) {
    if (z1.rows == 0)
        throw ContractViolation("select_potential_outliers: empty batch");
    if (!z1.same_shape(z2))
        throw ContractViolation("select_potential_outliers: shape mismatch");
    if (!(eta > 0.0 && eta < 1.0))
        throw ContractViolation("select_potential_outliers: eta outside (0,1)");
    const std::size_t n = z1.rows;
    const std::size_t count = static_cast<std::size_t>(std::ceil(eta * double(n)));
    std::vector<std::pair<double, std::size_t>> order(n);
    for (std::size_t i = 0; i < n; ++i)
        order[i] = {row_cosine(z1.row(i), z2.row(i)), i};
    std::sort(order.begin(), order.end());
    std::vector<std::size_t> out(count);
    for (std::size_t i = 0; i < count; ++i) out[i] = order[i].second;
    return out;
}

void bank_push(MemoryBank& bank, const std::vector<const Matrix*>& z_per_view,
               const std::vector<std::size_t>& selected_rows,
               const std::vector<std::size_t>& instance_ids, std::size_t epoch,
               std::size_t batch) {
    if (z_per_view.size() != bank.n_views())
        throw ContractViolation("bank_push: view count mismatch");
    if (selected_rows.size() != instance_ids.size())
        throw ContractViolation("bank_push: ids not parallel to rows");
    for (std::size_t j = 0; j < selected_rows.size(); ++j) {
        MemoryBank::Entry e;
        e.epoch = epoch;
        e.batch = batch;
        e.instance = instance_ids[j];
        e.latents.reserve(z_per_view.size());
        for (const Matrix* z : z_per_view) {
            const auto r = z->row(selected_rows[j]);
            e.latents.emplace_back(r.begin(), r.end());
        }
        bank.push(std::move(e));
    }
}

namespace {

struct NormalizedRows {
    Matrix hat;                 // rows scaled by 1/max(norm, clamp)
    std::vector<double> norm;   // clamped norms
    std::vector<std::uint8_t> live; // 1 when the true norm exceeds the clamp
};

NormalizedRows normalize_rows(const Matrix& z) {
    NormalizedRows out;
    out.hat = Matrix(z.rows, z.cols);
    out.norm.resize(z.rows);
    out.live.resize(z.rows);
    for (std::size_t i = 0; i < z.rows; ++i) {
        const double n = norm2(z.row(i));
        out.live[i] = n > kNormClamp;
        out.norm[i] = std::max(n, kNormClamp);
        const double inv = 1.0 / out.norm[i];
        const auto src = z.row(i);
        auto dst = out.hat.row(i);
        for (std::size_t j = 0; j < z.cols; ++j) dst[j] = src[j] * inv;
    }
    return out;
}

} // namespace

ContrastiveOut contrastive_pair_loss(const Matrix& z1, const Matrix& z2,
                                     const std::vector<const double*>& bank1,
                                     const std::vector<const double*>& bank2,
                                     double tau, double grad_scale, Matrix* dz1,
                                     Matrix* dz2) {
    if (!z1.same_shape(z2))
        throw ContractViolation("contrastive_pair_loss: latent shapes disagree");
    if (z1.rows == 0)
        throw ContractViolation("contrastive_pair_loss: empty batch");
    if (!(tau > 0.0))
        throw ContractViolation("contrastive_pair_loss: tau must be positive");
    if (bank1.size() != bank2.size())
        throw ContractViolation("contrastive_pair_loss: bank views not pushed pairwise");
    if ((dz1 && !dz1->same_shape(z1)) || (dz2 && !dz2->same_shape(z2)))
        throw ContractViolation("contrastive_pair_loss: gradient shape mismatch");

    const std::size_t n = z1.rows;
    const std::size_t d = z1.cols;
    const std::size_t nb = bank1.size();
    const std::size_t n_terms = 2 * n + 2 * nb;

    const NormalizedRows a1 = normalize_rows(z1);
    const NormalizedRows a2 = normalize_rows(z2);
    Matrix bank_hat(2 * nb, d);
    for (std::size_t t = 0; t < nb; ++t) {
        for (std::size_t which = 0; which < 2; ++which) {
            const double* src = which == 0 ? bank1[t] : bank2[t];
            const std::span<const double> row{src, d};
            const double nn = std::max(norm2(row), kNormClamp);
            auto dst = bank_hat.row(which * nb + t);
            for (std::size_t j = 0; j < d; ++j) dst[j] = row[j] / nn;
        }
    }

    ContrastiveOut out;
    out.per_instance.assign(n, 0.0);
    std::vector<double> sims(n_terms), scaled(n_terms), expv(n_terms), wsum(d);

    for (std::size_t m = 0; m < 2; ++m) {
        const NormalizedRows& anchors = m == 0 ? a1 : a2;
        Matrix* dza = m == 0 ? dz1 : dz2;
        for (std::size_t i = 0; i < n; ++i) {
            const auto ahat = anchors.hat.row(i);
            for (std::size_t j = 0; j < n; ++j) sims[j] = dot(ahat, a1.hat.row(j));
            for (std::size_t j = 0; j < n; ++j) sims[n + j] = dot(ahat, a2.hat.row(j));
            for (std::size_t t = 0; t < 2 * nb; ++t)
                sims[2 * n + t] = dot(ahat, bank_hat.row(t));
            const double inv_tau = 1.0 / tau;
            for (std::size_t t = 0; t < n_terms; ++t) scaled[t] = sims[t] * inv_tau;
            // Inline logsumexp so the gradient loop can reuse the
            // exponentials; exp calls dominate this kernel otherwise.
            double smax = scaled[0];
            for (std::size_t t = 1; t < n_terms; ++t) smax = std::max(smax, scaled[t]);
            double esum = 0.0;
            for (std::size_t t = 0; t < n_terms; ++t) {
                expv[t] = std::exp(scaled[t] - smax);
                esum += expv[t];
            }
            const double log_d = smax + std::log(esum);
            const std::size_t pos_index = m == 0 ? n + i : i;
            const std::size_t self_index = m == 0 ? i : n + i;
            const double ell = -0.5 * (sims[pos_index] * inv_tau - log_d);
            out.per_instance[i] += ell;

            if (!dz1 && !dz2) continue;

            std::fill(wsum.begin(), wsum.end(), 0.0);
            const double inv_esum = 1.0 / esum;
            double csum = 0.0;
            for (std::size_t t = 0; t < n_terms; ++t) {
                if (t == self_index) continue; // cos(z,z) is constant
                double c = 0.5 * expv[t] * inv_esum * inv_tau;
                if (t == pos_index) c -= 0.5 * inv_tau;
                c *= grad_scale;
                if (c == 0.0) continue;
                const bool in_pool = t < 2 * n;
                const auto that = in_pool
                                      ? (t < n ? a1.hat.row(t) : a2.hat.row(t - n))
                                      : bank_hat.row(t - 2 * n);
                axpy(c, that, wsum);
                csum += c * sims[t];
                if (in_pool) {
                    const std::size_t which = t < n ? 0 : 1;
                    const std::size_t j = t < n ? t : t - n;
                    Matrix* dzt = which == 0 ? dz1 : dz2;
                    if (!dzt) continue;
                    const NormalizedRows& tgt = which == 0 ? a1 : a2;
                    const double inv_nb = 1.0 / tgt.norm[j];
                    axpy(c * inv_nb, ahat, dzt->row(j));
                    if (tgt.live[j])
                        axpy(-c * sims[t] * inv_nb, that, dzt->row(j));
                }
            }
            if (dza) {
                const double inv_na = 1.0 / anchors.norm[i];
                axpy(inv_na, wsum, dza->row(i));
                if (anchors.live[i]) axpy(-csum * inv_na, ahat, dza->row(i));
            }
        }
    }
    for (double v : out.per_instance) out.loss += v;
    return out;
}

ContrastiveOut outlier_aware_contrastive(const Matrix& z1, const Matrix& z2,
                                         const MemoryBank* bank, std::size_t bank_view1,
                                         std::size_t bank_view2, double tau,
                                         double grad_scale, Matrix* dz1, Matrix* dz2) {
    std::vector<const double*> b1, b2;
    if (bank && !bank->empty()) {
        if (bank_view1 >= bank->n_views() || bank_view2 >= bank->n_views())
            throw ContractViolation("outlier_aware_contrastive: bank view out of range");
        b1.reserve(bank->size());
        b2.reserve(bank->size());
        for (std::size_t t = 0; t < bank->size(); ++t) {
            const auto& e = bank->entry(t);
            if (e.latents[bank_view1].size() != z1.cols)
                throw ContractViolation("outlier_aware_contrastive: bank latent width");
            b1.push_back(e.latents[bank_view1].data());
            b2.push_back(e.latents[bank_view2].data());
        }
    }
    return contrastive_pair_loss(z1, z2, b1, b2, tau, grad_scale, dz1, dz2);
}

double neighbor_alignment_loss(const Matrix& z1, const Matrix& z2,
                               const NeighborIndex& n1, const NeighborIndex& n2,
                               const std::vector<std::size_t>& anchors, double tau,
                               double grad_scale, Matrix* dz1, Matrix* dz2) {
    if (n1.k != n2.k || n1.k == 0)
        throw ContractViolation("neighbor_alignment_loss: index k mismatch");
    if (anchors.empty()) return 0.0;
    for (std::size_t a : anchors)
        if (!n1.has_list(a) || !n2.has_list(a))
            throw ContractViolation("neighbor_alignment_loss: anchor lacks neighbor lists");
    const std::size_t k = n1.k;
    const std::size_t na = anchors.size();
    const std::size_t d = z1.cols;

    double loss = 0.0;
    Matrix at(na, d), bt(na, d), dat, dbt;
    for (std::size_t t = 0; t < k; ++t) {
        for (std::size_t a = 0; a < na; ++a) {
            const std::size_t r1 = n1.lists[anchors[a]][t];
            const std::size_t r2 = n2.lists[anchors[a]][t];
            std::copy_n(z1.row(r1).data(), d, at.row(a).data());
            std::copy_n(z2.row(r2).data(), d, bt.row(a).data());
        }
        const bool want_grads = dz1 || dz2;
        if (want_grads) {
            dat = Matrix(na, d);
            dbt = Matrix(na, d);
        }
        const ContrastiveOut r = contrastive_pair_loss(
            at, bt, {}, {}, tau, grad_scale / double(k), want_grads ? &dat : nullptr,
            want_grads ? &dbt : nullptr);
        loss += r.loss / double(k);
        if (want_grads) {
            for (std::size_t a = 0; a < na; ++a) {
                if (dz1) axpy(1.0, dat.row(a), dz1->row(n1.lists[anchors[a]][t]));
                if (dz2) axpy(1.0, dbt.row(a), dz2->row(n2.lists[anchors[a]][t]));
            }
        }
    }
    return loss;
}

double koleo_loss_view(const Matrix& z, const std::vector<std::size_t>& rows,
                       double grad_scale, Matrix* dz) {
    if (rows.size() < 2)
        throw ContractViolation("koleo_loss_view: need at least two rows");
    if (dz && !dz->same_shape(z))
        throw ContractViolation("koleo_loss_view: gradient shape mismatch");
    double loss = 0.0;
    for (std::size_t p = 0; p < rows.size(); ++p) {
        const std::size_t i = rows[p];
        double best_sq = 0.0;
        std::size_t best_j = 0;
        bool first = true;
        for (std::size_t q = 0; q < rows.size(); ++q) {
            if (q == p) continue;
            const std::size_t j = rows[q];
            const double sq = squared_distance(z.row(i), z.row(j));
            if (first || sq < best_sq || (sq == best_sq && j < best_j)) {
                best_sq = sq;
                best_j = j;
                first = false;
            }
        }
        const double delta = std::sqrt(best_sq);
        loss += -0.5 * std::log(std::max(delta, kKoleoClamp));
        if (dz && delta > kKoleoClamp) {
            // d(-0.5 log delta)/dz_i = -0.5 (z_i - z_j*) / delta^2
            const double w = grad_scale * (-0.5) / best_sq;
            const auto zi = z.row(i);
            const auto zj = z.row(best_j);
            auto gi = dz->row(i);
            auto gj = dz->row(best_j);
            for (std::size_t c = 0; c < z.cols; ++c) {
                const double diff = w * (zi[c] - zj[c]);
                gi[c] += diff;
                gj[c] -= diff;
            }
        }
    }
    return loss;
}

RankChoices sample_rank_choices(const NeighborIndex& index,
                                const std::vector<std::size_t>& anchors,
                                std::size_t k_pos, std::size_t k_neg, RngStream& rng) {
    if (k_pos == 0 || k_neg == 0 || k_pos > index.k || k_neg > index.k)
        throw ContractViolation("sample_rank_choices: k_pos/k_neg outside the index lists");
    RankChoices c;
    c.anchor.reserve(anchors.size());
    for (std::size_t a : anchors) {
        if (!index.has_list(a))
            throw ContractViolation("sample_rank_choices: anchor lacks a neighbor list");
        const auto& list = index.lists[a];
        c.anchor.push_back(a);
        c.positive.push_back(list[rng.uniform_index(k_pos)]);
        c.negative.push_back(list[k_neg - 1]);
    }
    return c;
}

double rank_loss_view(const Matrix& z, const RankChoices& choices, RankSign sign,
                      double grad_scale, Matrix* dz) {
    if (choices.anchor.size() != choices.positive.size() ||
        choices.anchor.size() != choices.negative.size())
        throw ContractViolation("rank_loss_view: choice arrays not parallel");
    if (dz && !dz->same_shape(z))
        throw ContractViolation("rank_loss_view: gradient shape mismatch");
    const double sgn = sign == RankSign::Printed ? -0.5 : 0.5;
    double loss = 0.0;
    for (std::size_t t = 0; t < choices.anchor.size(); ++t) {
        const std::size_t i = choices.anchor[t];
        const std::size_t p = choices.positive[t];
        const std::size_t q = choices.negative[t];
        const double dpos = std::sqrt(squared_distance(z.row(i), z.row(p)));
        const double dneg = std::sqrt(squared_distance(z.row(i), z.row(q)));
        const double h = dpos - dneg;
        if (h <= 0.0) continue;
        loss += sgn * h;
        if (!dz) continue;
        const double w = grad_scale * sgn;
        if (dpos > 0.0) {
            const double c = w / dpos;
            for (std::size_t k = 0; k < z.cols; ++k) {
                const double diff = c * (z.at(i, k) - z.at(p, k));
                dz->at(i, k) += diff;
                dz->at(p, k) -= diff;
            }
        }
        if (dneg > 0.0) {
            const double c = w / dneg;
            for (std::size_t k = 0; k < z.cols; ++k) {
                const double diff = c * (z.at(i, k) - z.at(q, k));
                dz->at(i, k) -= diff;
                dz->at(q, k) += diff;
            }
        }
    }
    return loss;
}

double rank_loss(const Matrix& z, const NeighborIndex& index,
                 const std::vector<std::size_t>& anchors, std::size_t k_pos,
                 std::size_t k_neg, RankSign sign, RngStream& rng) {
    const RankChoices c = sample_rank_choices(index, anchors, k_pos, k_neg, rng);
    return rank_loss_view(z, c, sign);
}

double mu_at(std::size_t epoch, const MuSchedule& sched) {
    if (sched.mu1 < 0.0 || sched.mu2 < sched.mu1)
        throw ContractViolation("mu_at: need 0 <= mu1 <= mu2");
    if (sched.warm_epochs > sched.total_epochs)
        throw ContractViolation("mu_at: warm phase longer than the schedule");
    if (epoch >= sched.total_epochs) return sched.mu2;
    if (epoch <= sched.warm_epochs)
        return sched.warm_epochs == 0
                   ? sched.mu1
                   : sched.mu1 * double(epoch) / double(sched.warm_epochs);
    return sched.mu1 + (sched.mu2 - sched.mu1) * double(epoch - sched.warm_epochs) /
                           double(sched.total_epochs - sched.warm_epochs);
}

LossBreakdown combine_losses(double l_ar, double l_oa, double l_na, double l_koleo,
                             double l_rank, double lambda1, double lambda2, double mu) {
    LossBreakdown b;
    b.l_ar = l_ar;
    b.l_oa = l_oa;
    b.l_na = l_na;
    b.l_koleo = l_koleo;
    b.l_rank = l_rank;
    b.l_sr = l_koleo + l_rank;
    b.mu = mu;
    b.total = l_ar + lambda1 * l_oa + lambda2 * l_na + mu * b.l_sr;
    return b;
}

double reconstruction_loss(const std::vector<const Matrix*>& views,
                           const std::vector<const Matrix*>& recons,
                           const std::vector<std::vector<std::uint8_t>>& present) {
    if (views.size() != recons.size() || views.size() != present.size())
        throw ContractViolation("reconstruction_loss: per-view arrays not parallel");
    double loss = 0.0;
    for (std::size_t v = 0; v < views.size(); ++v) {
        const Matrix& x = *views[v];
        const Matrix& r = *recons[v];
        if (!x.same_shape(r) || present[v].size() != x.rows)
            throw ContractViolation("reconstruction_loss: shape mismatch");
        for (std::size_t i = 0; i < x.rows; ++i) {
            if (!present[v][i]) continue;
            loss += 0.5 * squared_distance(x.row(i), r.row(i));
        }
    }
    return loss;
}

} // namespace mvod
