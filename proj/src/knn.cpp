#include "mvod/knn.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "mvod/errors.hpp"

namespace mvod {

NeighborIndex build_knn(const Matrix& points, const std::vector<std::size_t>& present,
                        std::size_t k, NeighborSpace space) {
    if (k == 0)
        throw ContractViolation("build_knn: k must be positive");
    if (present.size() <= k)
        throw ConfigError("build_knn: need more than k indexed instances");
    NeighborIndex index;
    index.space = space;
    index.k = k;
    index.member.assign(points.rows, 0);
    index.lists.assign(points.rows, {});
    for (std::size_t i : present) index.member[i] = 1;

    std::vector<std::pair<double, std::size_t>> cand;
    cand.reserve(present.size());
    for (std::size_t qi : present) {
        cand.clear();
        const auto q = points.row(qi);
        for (std::size_t j : present) {
            if (j == qi) continue;
            cand.emplace_back(squared_distance(q, points.row(j)), j);
        }
        std::partial_sort(cand.begin(), cand.begin() + k, cand.end());
        auto& list = index.lists[qi];
        list.reserve(k);
        for (std::size_t t = 0; t < k; ++t) list.push_back(cand[t].second);
    }
    return index;
}

NeighborSpace refresh_policy(std::size_t epoch, const KnnSchedule& sched) {
    return epoch < sched.switch_epoch ? NeighborSpace::InputFeatures
                                      : NeighborSpace::LatentFeatures;
}

bool knn_rebuild_due(std::size_t epoch, const KnnSchedule& sched) {
    if (epoch < sched.switch_epoch) return epoch == 0;
    if (sched.refresh_interval == 0) return epoch == sched.switch_epoch;
    return (epoch - sched.switch_epoch) % sched.refresh_interval == 0;
}

void dump_neighbor_index_csv(const NeighborIndex& index, const Matrix& points,
                             const std::string& path) {
    std::FILE* f = std::fopen(path.c_str(), "w");
    if (!f)
        throw ConfigError("dump_neighbor_index_csv: cannot open " + path);
    std::fprintf(f, "instance,rank,neighbor,distance\n");
    for (std::size_t i = 0; i < index.lists.size(); ++i) {
        const auto& list = index.lists[i];
        for (std::size_t t = 0; t < list.size(); ++t) {
            const double d = std::sqrt(squared_distance(points.row(i), points.row(list[t])));
            std::fprintf(f, "%zu,%zu,%zu,%.17g\n", i, t + 1, list[t], d);
        }
    }
    std::fclose(f);
}

} // namespace mvod
