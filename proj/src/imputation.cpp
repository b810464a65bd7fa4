#include "mvod/imputation.hpp"

#include <algorithm>

#include "mvod/errors.hpp"

namespace mvod {

LatentViews LatentViews::create(std::size_t n_views, std::size_t n_all,
                                std::size_t latent_dim) {
    if (n_views == 0)
        throw ContractViolation("LatentViews: need at least one view");
    LatentViews lv;
    lv.z.assign(n_views, Matrix(n_all, latent_dim));
    lv.status.assign(n_views, std::vector<LatentStatus>(n_all, LatentStatus::Missing));
    lv.first_imputed_epoch.assign(n_views, std::vector<std::int64_t>(n_all, -1));
    return lv;
}

bool LatentViews::complete(std::size_t i) const {
    for (std::size_t v = 0; v < n_views(); ++v)
        if (status[v][i] == LatentStatus::Missing) return false;
    return true;
}

std::optional<std::vector<double>> crt_impute(const LatentViews& latents,
                                              const std::vector<NeighborIndex>& index_per_view,
                                              std::size_t target_view, std::size_t instance,
                                              std::size_t k) {
    const std::size_t n_views = latents.n_views();
    if (index_per_view.size() != n_views)
        throw ContractViolation("crt_impute: one neighbor index per view required");
    if (target_view >= n_views || instance >= latents.n_all())
        throw ContractViolation("crt_impute: target out of range");
    if (latents.status[target_view][instance] == LatentStatus::Observed)
        throw ContractViolation("crt_impute: entry is observed");

    const std::size_t dim = latents.z[target_view].cols;
    std::vector<double> acc(dim, 0.0);
    std::size_t n_sources = 0;
    for (std::size_t u = 0; u < n_views; ++u) {
        if (u == target_view) continue;
        if (latents.status[u][instance] != LatentStatus::Observed) continue;
        const NeighborIndex& index = index_per_view[u];
        if (!index.has_list(instance) || index.k < k)
            throw ContractViolation("crt_impute: source view lacks a neighbor list");
        std::vector<double> mean(dim, 0.0);
        std::size_t used = 0;
        for (std::size_t t = 0; t < k; ++t) {
            const std::size_t nb = index.lists[instance][t];
            if (latents.status[target_view][nb] == LatentStatus::Missing) continue;
            axpy(1.0, latents.z[target_view].row(nb), mean);
            ++used;
        }
        if (used == 0) continue; // all counterparts missing in this source view
        axpy(1.0 / double(used), mean, acc);
        ++n_sources;
    }
    if (n_sources == 0) return std::nullopt;
    if (n_sources > 1)
        for (double& x : acc) x /= double(n_sources);
    return acc;
}

ImputeStats impute_all(LatentViews& latents,
                       const std::vector<NeighborIndex>& index_per_view, std::size_t k,
                       std::int64_t epoch) {
    ImputeStats stats;
    const std::size_t n_views = latents.n_views();
    const std::size_t n_all = latents.n_all();

    // Drop stale imputations so the pass depends only on observed latents.
    std::vector<std::pair<std::size_t, std::size_t>> pending; // (instance, view)
    for (std::size_t i = 0; i < n_all; ++i) {
        for (std::size_t v = 0; v < n_views; ++v) {
            if (latents.status[v][i] == LatentStatus::Observed) continue;
            latents.status[v][i] = LatentStatus::Missing;
            std::fill_n(latents.z[v].row(i).data(), latents.z[v].cols, 0.0);
            bool observed_somewhere = false;
            for (std::size_t u = 0; u < n_views; ++u)
                observed_somewhere |= latents.status[u][i] == LatentStatus::Observed;
            if (observed_somewhere) pending.emplace_back(i, v);
        }
    }

    while (!pending.empty()) {
        ++stats.passes;
        std::vector<std::pair<std::size_t, std::size_t>> still_deferred;
        for (const auto& [i, v] : pending) {
            auto value = crt_impute(latents, index_per_view, v, i, k);
            if (!value) {
                still_deferred.emplace_back(i, v);
                continue;
            }
            std::copy(value->begin(), value->end(), latents.z[v].row(i).data());
            latents.status[v][i] = LatentStatus::Imputed;
            if (latents.first_imputed_epoch[v][i] < 0)
                latents.first_imputed_epoch[v][i] = epoch;
            ++stats.imputed;
        }
        if (still_deferred.size() == pending.size()) {
            stats.deferred = still_deferred.size();
            break;
        }
        pending = std::move(still_deferred);
    }
    return stats;
}

} // namespace mvod
