#include "doctest.h"

#include <algorithm>
#include <cstdio>
#include <vector>

#include "mvod/errors.hpp"
#include "mvod/knn.hpp"
#include "mvod/rng.hpp"

using namespace mvod;

namespace {

Matrix points_1d(const std::vector<double>& xs) {
    Matrix m(xs.size(), 1);
    for (std::size_t i = 0; i < xs.size(); ++i) m.at(i, 0) = xs[i];
    return m;
}

std::vector<std::size_t> iota_ids(std::size_t n) {
    std::vector<std::size_t> ids(n);
    for (std::size_t i = 0; i < n; ++i) ids[i] = i;
    return ids;
}

} // namespace

TEST_CASE("build_knn hand distance tables") {
    const Matrix pts = points_1d({0.0, 1.0, 10.0});
    const NeighborIndex idx = build_knn(pts, iota_ids(3), 1, NeighborSpace::InputFeatures);
    CHECK(idx.lists[0] == std::vector<std::size_t>{1});
    CHECK(idx.lists[1] == std::vector<std::size_t>{0});
    CHECK(idx.lists[2] == std::vector<std::size_t>{1});

    // Duplicate points tie; the lower index wins.
    const Matrix dup = points_1d({0.0, 5.0, 5.0, 5.0});
    const NeighborIndex tie = build_knn(dup, iota_ids(4), 1, NeighborSpace::InputFeatures);
    CHECK(tie.lists[3] == std::vector<std::size_t>{1});
    CHECK(tie.lists[2] == std::vector<std::size_t>{1});
    CHECK(tie.lists[1] == std::vector<std::size_t>{2});

    const Matrix line = points_1d({0.0, 1.0, 2.0, 3.0});
    const NeighborIndex adj = build_knn(line, iota_ids(4), 2, NeighborSpace::InputFeatures);
    CHECK(adj.lists[1] == std::vector<std::size_t>{0, 2});
    CHECK(adj.lists[2] == std::vector<std::size_t>{1, 3});
}

TEST_CASE("build_knn equals a brute-force distance sort") {
    RngStream rng(23);
    Matrix pts(30, 3);
    for (double& v : pts.data) v = rng.uniform(0.0, 1.0);
    // Leave a few instances out to exercise the membership mask.
    std::vector<std::size_t> present;
    for (std::size_t i = 0; i < 30; ++i)
        if (i % 7 != 3) present.push_back(i);
    const std::size_t k = 4;
    const NeighborIndex idx = build_knn(pts, present, k, NeighborSpace::LatentFeatures);
    CHECK(idx.k == k);
    CHECK(idx.space == NeighborSpace::LatentFeatures);

    for (std::size_t i = 0; i < 30; ++i) {
        const bool in = std::find(present.begin(), present.end(), i) != present.end();
        CHECK(bool(idx.member[i]) == in);
        if (!in) {
            CHECK(idx.lists[i].empty());
            CHECK_FALSE(idx.has_list(i));
            continue;
        }
        REQUIRE(idx.has_list(i));
        std::vector<std::pair<double, std::size_t>> ranked;
        for (std::size_t j : present) {
            if (j == i) continue;
            ranked.push_back({squared_distance(pts.row(i), pts.row(j)), j});
        }
        std::sort(ranked.begin(), ranked.end());
        for (std::size_t t = 0; t < k; ++t) CHECK(idx.lists[i][t] == ranked[t].second);
        CHECK(std::find(idx.lists[i].begin(), idx.lists[i].end(), i) == idx.lists[i].end());
    }
}

TEST_CASE("build_knn is idempotent and needs |present| > k") {
    RngStream rng(29);
    Matrix pts(8, 2);
    for (double& v : pts.data) v = rng.uniform(0.0, 1.0);
    const NeighborIndex a = build_knn(pts, iota_ids(8), 3, NeighborSpace::InputFeatures);
    const NeighborIndex b = build_knn(pts, iota_ids(8), 3, NeighborSpace::InputFeatures);
    for (std::size_t i = 0; i < 8; ++i) CHECK(a.lists[i] == b.lists[i]);

    CHECK_THROWS_AS(build_knn(pts, iota_ids(3), 3, NeighborSpace::InputFeatures), ConfigError);
}

TEST_CASE("refresh_policy and rebuild cadence") {
    const KnnSchedule sched{50, 5};
    CHECK(refresh_policy(0, sched) == NeighborSpace::InputFeatures);
    CHECK(refresh_policy(49, sched) == NeighborSpace::InputFeatures);
    CHECK(refresh_policy(50, sched) == NeighborSpace::LatentFeatures);
    CHECK(refresh_policy(300, sched) == NeighborSpace::LatentFeatures);

    CHECK(knn_rebuild_due(0, sched));
    CHECK_FALSE(knn_rebuild_due(1, sched));
    CHECK_FALSE(knn_rebuild_due(49, sched));
    CHECK(knn_rebuild_due(50, sched));
    CHECK_FALSE(knn_rebuild_due(53, sched));
    CHECK(knn_rebuild_due(55, sched));
    CHECK(knn_rebuild_due(60, sched));

    // refresh_interval 0 pins the latent index built at the switch.
    const KnnSchedule frozen{10, 0};
    CHECK(knn_rebuild_due(10, frozen));
    CHECK_FALSE(knn_rebuild_due(11, frozen));
    CHECK_FALSE(knn_rebuild_due(25, frozen));
}

TEST_CASE("dump_neighbor_index_csv writes one line per table entry") {
    const Matrix pts = points_1d({0.0, 1.0, 3.0});
    const NeighborIndex idx = build_knn(pts, iota_ids(3), 2, NeighborSpace::InputFeatures);
    const char* path = "knn_dump_test.csv";
    dump_neighbor_index_csv(idx, pts, path);
    std::FILE* f = std::fopen(path, "r");
    REQUIRE(f != nullptr);
    char line[128];
    std::size_t lines = 0;
    while (std::fgets(line, sizeof line, f)) ++lines;
    std::fclose(f);
    std::remove(path);
    CHECK(lines == 1 + 3 * 2);
}
