#pragma once

#include <cstddef>
#include <deque>
#include <vector>

#include "mvod/knn.hpp"
#include "mvod/matrix.hpp"
#include "mvod/rng.hpp"

namespace mvod {

// Floor applied to nearest-neighbor distances inside the KoLeo logarithm.
inline constexpr double kKoleoClamp = 1e-9;

// FIFO store of latent snapshots of suspected cross-view-inconsistent
// instances. Entries carry one latent per view, pushed together, evicted
// together, plus their origin for diagnostics. Entry 0 is the oldest.
class MemoryBank {
public:
    struct Entry {
        std::vector<std::vector<double>> latents; // one vector per view
        std::size_t epoch = 0;
        std::size_t batch = 0;
        std::size_t instance = 0;
    };

    MemoryBank(std::size_t capacity, std::size_t n_views);

    std::size_t capacity() const { return capacity_; }
    std::size_t n_views() const { return n_views_; }
    std::size_t size() const { return entries_.size(); }
    bool empty() const { return entries_.empty(); }

    void push(Entry e);
    const Entry& entry(std::size_t t) const { return entries_[t]; }

private:
    std::size_t capacity_;
    std::size_t n_views_;
    std::deque<Entry> entries_;
};

// Rows of the batch with the smallest cross-view cosine similarity
// s(z_i^(1), z_i^(2)); ceil(eta * rows) of them, ties by ascending index.
// The result is ordered by (similarity, index) ascending.
std::vector<std::size_t> select_potential_outliers(const Matrix& z1, const Matrix& z2,
                                                   double eta);

// Snapshot the selected rows into the bank, one entry per row, in the order
// given. z_per_view[v]->row(r) supplies the view-v latent of local row r.
void bank_push(MemoryBank& bank, const std::vector<const Matrix*>& z_per_view,
               const std::vector<std::size_t>& selected_rows,
               const std::vector<std::size_t>& instance_ids, std::size_t epoch,
               std::size_t batch);

struct ContrastiveOut {
    double loss = 0.0;
    std::vector<double> per_instance; // i-th summand, both anchor directions
};

// Symmetric two-view contrastive loss over row-aligned latents:
//   -(1/2) sum_m sum_i [ s(z_i^m, z_i^m')/tau - log D_i^m ]
// where D_i^m sums exp(s/tau) over every row of both matrices (the self term
// included) plus the optional bank rows. Denominators use logsumexp. When
// gradient outputs are given, grad_scale times the gradients are added into
// them; bank rows and the self similarity contribute no gradient of their own.
ContrastiveOut contrastive_pair_loss(const Matrix& z1, const Matrix& z2,
                                     const std::vector<const double*>& bank1,
                                     const std::vector<const double*>& bank2,
                                     double tau, double grad_scale = 1.0,
                                     Matrix* dz1 = nullptr, Matrix* dz2 = nullptr);

// The training form: contrastive_pair_loss with the bank's entries for the
// two given views appended to the denominator pool.
ContrastiveOut outlier_aware_contrastive(const Matrix& z1, const Matrix& z2,
                                         const MemoryBank* bank, std::size_t bank_view1,
                                         std::size_t bank_view2, double tau,
                                         double grad_scale = 1.0, Matrix* dz1 = nullptr,
                                         Matrix* dz2 = nullptr);

// Alignment of neighborhood structure across views: for each neighbor rank
// t in 1..k, the contrastive loss above is evaluated on the matrices of t-th
// neighbors (anchor i's t-th neighbor in view 1 vs in view 2), bank-free, and
// the ranks are averaged. tau of 1 reproduces the temperature-free form.
double neighbor_alignment_loss(const Matrix& z1, const Matrix& z2,
                               const NeighborIndex& n1, const NeighborIndex& n2,
                               const std::vector<std::size_t>& anchors, double tau = 1.0,
                               double grad_scale = 1.0, Matrix* dz1 = nullptr,
                               Matrix* dz2 = nullptr);

// One view's differential-entropy spreading term:
//   -(1/2) sum_{i in rows} log(max(delta_i, 1e-9)),
// delta_i the distance to i's nearest other row (ties to the lowest index).
// Distances at or below the clamp contribute a constant and no gradient.
double koleo_loss_view(const Matrix& z, const std::vector<std::size_t>& rows,
                       double grad_scale = 1.0, Matrix* dz = nullptr);

enum class RankSign {
    Printed, // -(1/2) sum max(0, d_pos - d_neg): rewards separation violations
    Triplet  // +(1/2) sum max(0, d_pos - d_neg): penalizes them
};

// Frozen positive/negative picks for the rank term, parallel arrays of row ids.
struct RankChoices {
    std::vector<std::size_t> anchor;
    std::vector<std::size_t> positive;
    std::vector<std::size_t> negative;
};

// positive: uniform among the k_pos nearest neighbors; negative: the k_neg-th
// neighbor. Anchors must have lists of length >= k_neg in the index.
RankChoices sample_rank_choices(const NeighborIndex& index,
                                const std::vector<std::size_t>& anchors,
                                std::size_t k_pos, std::size_t k_neg, RngStream& rng);

// Hinge on distance ordering for one view under frozen choices. The boundary
// and zero-distance cases take the zero subgradient.
double rank_loss_view(const Matrix& z, const RankChoices& choices, RankSign sign,
                      double grad_scale = 1.0, Matrix* dz = nullptr);

// Convenience form: sample choices, then evaluate.
double rank_loss(const Matrix& z, const NeighborIndex& index,
                 const std::vector<std::size_t>& anchors, std::size_t k_pos,
                 std::size_t k_neg, RankSign sign, RngStream& rng);

struct MuSchedule {
    double mu1 = 0.0;
    double mu2 = 0.0;
    std::size_t warm_epochs = 100;
    std::size_t total_epochs = 200;
};

// Piecewise-linear weight: 0 at epoch 0, mu1 at warm_epochs, mu2 at
// total_epochs, clamped to mu2 beyond.
double mu_at(std::size_t epoch, const MuSchedule& sched);

struct LossBreakdown {
    double l_ar = 0.0;
    double l_oa = 0.0;
    double l_na = 0.0;
    double l_koleo = 0.0;
    double l_rank = 0.0;
    double l_sr = 0.0;
    double mu = 0.0;
    double total = 0.0;
    std::vector<double> per_instance_contrastive; // aligned with the oa anchor list
};

// total = l_ar + lambda1 * l_oa + lambda2 * l_na + mu * (l_koleo + l_rank)
LossBreakdown combine_losses(double l_ar, double l_oa, double l_na, double l_koleo,
                             double l_rank, double lambda1, double lambda2, double mu);

// 1/2 sum over views of squared residuals on present rows only.
double reconstruction_loss(const std::vector<const Matrix*>& views,
                           const std::vector<const Matrix*>& recons,
                           const std::vector<std::vector<std::uint8_t>>& present);

} // namespace mvod
