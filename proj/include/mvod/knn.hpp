#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "mvod/matrix.hpp"

namespace mvod {

enum class NeighborSpace { InputFeatures, LatentFeatures };

// Exact K-nearest-neighbor tables for one view. Lists hold instance ids
// sorted by ascending Euclidean distance, exact ties by ascending id, self
// excluded. Instances outside built_over have empty lists.
struct NeighborIndex {
    NeighborSpace space = NeighborSpace::InputFeatures;
    std::size_t k = 0;
    std::vector<std::uint8_t> member;            // 1 if the instance was indexed
    std::vector<std::vector<std::size_t>> lists; // per instance, k ids or empty

    bool has_list(std::size_t i) const {
        return i < lists.size() && lists[i].size() == k;
    }
};

// Brute-force index over the given rows of points. Requires present.size() > k.
NeighborIndex build_knn(const Matrix& points, const std::vector<std::size_t>& present,
                        std::size_t k, NeighborSpace space);

struct KnnSchedule {
    std::size_t switch_epoch = 50;     // input features before, latents after
    std::size_t refresh_interval = 5;  // latent-space rebuild cadence
};

NeighborSpace refresh_policy(std::size_t epoch, const KnnSchedule& sched);

// True when the index must be (re)built at this epoch: once at epoch 0 in
// input space, then at the switch epoch and every refresh_interval after it.
bool knn_rebuild_due(std::size_t epoch, const KnnSchedule& sched);

// Debug dump: one "instance,rank,neighbor,distance" line per table entry.
void dump_neighbor_index_csv(const NeighborIndex& index, const Matrix& points,
                             const std::string& path);

} // namespace mvod
