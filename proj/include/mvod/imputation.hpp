#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "mvod/knn.hpp"
#include "mvod/matrix.hpp"

namespace mvod {

enum class LatentStatus : std::uint8_t { Missing, Observed, Imputed };

// Per-view latent matrices over the full dataset with per-entry provenance.
// Missing rows are all-zero placeholders and must never be read by losses.
struct LatentViews {
    std::vector<Matrix> z;                            // per view, n_all x latent
    std::vector<std::vector<LatentStatus>> status;    // [view][instance]
    std::vector<std::vector<std::int64_t>> first_imputed_epoch; // -1 = never

    static LatentViews create(std::size_t n_views, std::size_t n_all,
                              std::size_t latent_dim);

    std::size_t n_views() const { return z.size(); }
    std::size_t n_all() const { return status.empty() ? 0 : status.front().size(); }
    bool complete(std::size_t i) const;
    bool available(std::size_t v, std::size_t i) const {
        return status[v][i] != LatentStatus::Missing;
    }
};

// Estimate instance i's latent in target_view by averaging, over every source
// view where i is observed, the mean of the view-target latents of i's k
// nearest observed neighbors in that source view, skipping counterparts that
// are still missing. nullopt = deferred: no usable counterpart anywhere yet.
std::optional<std::vector<double>> crt_impute(const LatentViews& latents,
                                              const std::vector<NeighborIndex>& index_per_view,
                                              std::size_t target_view, std::size_t instance,
                                              std::size_t k);

struct ImputeStats {
    std::size_t imputed = 0;
    std::size_t deferred = 0; // entries still missing when the passes stopped
    std::size_t passes = 0;
};

// Recompute every non-observed entry from the current observed latents.
// Previously imputed values are discarded first, so the result is a pure
// function of the observed latents and the index: repeating the call with
// unchanged observed latents reproduces it exactly. Entries are attempted in
// ascending (instance, view) order; entries deferred because every counterpart
// was missing are retried in follow-up passes, which can consume values
// imputed earlier, until no pass makes progress.
ImputeStats impute_all(LatentViews& latents,
                       const std::vector<NeighborIndex>& index_per_view, std::size_t k,
                       std::int64_t epoch);

} // namespace mvod
