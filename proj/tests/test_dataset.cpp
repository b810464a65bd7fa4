#include "doctest.h"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <vector>

#include "mvod/dataset.hpp"
#include "mvod/errors.hpp"
#include "mvod/io.hpp"

using namespace mvod;

namespace {

bool rows_equal(const Matrix& a, std::size_t i, const Matrix& b, std::size_t j) {
    if (a.cols != b.cols) return false;
    const auto ra = a.row(i);
    const auto rb = b.row(j);
    return std::equal(ra.begin(), ra.end(), rb.begin());
}

struct TempDir {
    std::filesystem::path path;
    explicit TempDir(const char* name)
        : path(std::filesystem::temp_directory_path() / name) {
        std::filesystem::remove_all(path);
        std::filesystem::create_directories(path);
    }
    ~TempDir() { std::filesystem::remove_all(path); }
    std::string str() const { return path.string(); }
};

MultiViewDataset small_dataset() {
    MultiViewDataset data;
    data.views.emplace_back(3, 2);
    data.views.emplace_back(3, 1);
    double k = 0.5;
    for (auto& m : data.views)
        for (double& x : m.data) x = (k += 0.25);
    data.presence.assign(2, std::vector<std::uint8_t>(3, 1));
    data.labels = {kLabelInlier, kLabelClass, kLabelInlier};
    return data;
}

} // namespace

TEST_CASE("csv matrix round trip is bit exact") {
    Matrix m(2, 3);
    m.at(0, 0) = 1.0 / 3.0;
    m.at(0, 1) = -0.0;
    m.at(0, 2) = 1e-300;
    m.at(1, 0) = 12345.678901234567;
    m.at(1, 1) = -2.5e17;
    m.at(1, 2) = 0.1;
    const char* path = "csv_roundtrip_test.csv";
    write_csv_matrix(path, m);
    const Matrix back = read_csv_matrix(path);
    std::remove(path);
    REQUIRE(back.rows == 2);
    REQUIRE(back.cols == 3);
    CHECK(std::equal(m.data.begin(), m.data.end(), back.data.begin()));
}

TEST_CASE("csv reader rejects ragged and non-numeric input") {
    const char* path = "csv_bad_test.csv";
    {
        std::ofstream out(path);
        out << "1,2\n3\n";
    }
    CHECK_THROWS_AS(read_csv_matrix(path), ConfigError);
    {
        std::ofstream out(path);
        out << "1,banana\n";
    }
    CHECK_THROWS_AS(read_csv_matrix(path), ConfigError);
    std::remove(path);
    CHECK_THROWS_AS(read_csv_matrix(path), ConfigError);
}

TEST_CASE("dataset save and load round trip") {
    TempDir dir("mvod_test_roundtrip");
    MultiViewDataset data = small_dataset();
    data.presence[1][2] = 0;
    std::fill_n(data.views[1].row(2).data(), 1, 0.0);
    save_dataset(data, dir.str());

    const MultiViewDataset back = load_dataset(dir.str());
    REQUIRE(back.n_views() == 2);
    REQUIRE(back.n() == 3);
    for (std::size_t v = 0; v < 2; ++v)
        CHECK(std::equal(data.views[v].data.begin(), data.views[v].data.end(),
                         back.views[v].data.begin()));
    CHECK(back.presence == data.presence);
    CHECK(back.labels == data.labels);
}

TEST_CASE("load zeroes rows the mask marks absent") {
    TempDir dir("mvod_test_maskzero");
    MultiViewDataset data = small_dataset();
    data.labels.clear();
    save_dataset(data, dir.str());
    // Hand-written mask hides view 1 of instance 0 while the feature file
    // still carries stale values for that row.
    {
        std::ofstream out(dir.path / "mask.csv");
        out << "0,1\n1,1\n1,1\n";
    }
    const MultiViewDataset back = load_dataset(dir.str());
    CHECK_FALSE(back.present(0, 0));
    CHECK(back.views[0].at(0, 0) == 0.0);
    CHECK(back.views[0].at(0, 1) == 0.0);
    CHECK(back.present(0, 1));
    CHECK_FALSE(back.has_labels());
}

TEST_CASE("load rejects malformed directories") {
    TempDir dir("mvod_test_badload");
    CHECK_THROWS_AS(load_dataset(dir.str()), ConfigError); // no views at all

    MultiViewDataset data = small_dataset();
    save_dataset(data, dir.str());

    {
        std::ofstream out(dir.path / "mask.csv");
        out << "1,1\n1,1\n"; // wrong row count
    }
    CHECK_THROWS_AS(load_dataset(dir.str()), ConfigError);
    {
        std::ofstream out(dir.path / "mask.csv");
        out << "1,2\n1,1\n1,1\n"; // entries must be 0/1
    }
    CHECK_THROWS_AS(load_dataset(dir.str()), ConfigError);
    std::filesystem::remove(dir.path / "mask.csv");

    {
        std::ofstream out(dir.path / "labels.csv");
        out << "0\n1.5\n0\n"; // non-integer label
    }
    CHECK_THROWS_AS(load_dataset(dir.str()), ConfigError);
    {
        std::ofstream out(dir.path / "labels.csv");
        out << "0\n4\n0\n"; // outside 0..3
    }
    CHECK_THROWS_AS(load_dataset(dir.str()), ConfigError);
}

TEST_CASE("validate rejects incoherent shapes") {
    MultiViewDataset data = small_dataset();
    data.validate();

    MultiViewDataset one_view = data;
    one_view.views.pop_back();
    one_view.presence.pop_back();
    CHECK_THROWS_AS(one_view.validate(), ConfigError);

    MultiViewDataset short_labels = data;
    short_labels.labels.pop_back();
    CHECK_THROWS_AS(short_labels.validate(), ConfigError);

    MultiViewDataset orphaned = data;
    orphaned.presence[0][1] = 0;
    orphaned.presence[1][1] = 0;
    CHECK_THROWS_AS(orphaned.validate(), ConfigError);
}

TEST_CASE("min-max normalization maps present rows to the unit interval") {
    MultiViewDataset data;
    data.views.emplace_back(4, 2);
    data.views.emplace_back(4, 1);
    data.presence.assign(2, std::vector<std::uint8_t>(4, 1));
    // Feature 0 spans [0,10], feature 1 is constant.
    const double f0[4] = {0.0, 5.0, 10.0, 2.5};
    for (std::size_t i = 0; i < 4; ++i) {
        data.views[0].at(i, 0) = f0[i];
        data.views[0].at(i, 1) = 7.0;
        data.views[1].at(i, 0) = double(i) - 1.0;
    }
    // Instance 3 is absent from view 1; its zero row must not widen the range.
    data.presence[1][3] = 0;
    data.views[1].at(3, 0) = 0.0;

    normalize_min_max(data);
    CHECK(data.views[0].at(0, 0) == doctest::Approx(0.0));
    CHECK(data.views[0].at(1, 0) == doctest::Approx(0.5));
    CHECK(data.views[0].at(2, 0) == doctest::Approx(1.0));
    CHECK(data.views[0].at(3, 0) == doctest::Approx(0.25));
    for (std::size_t i = 0; i < 4; ++i) CHECK(data.views[0].at(i, 1) == 0.0);
    // Present rows of view 1 held {-1,0,1}: min is -1, not the absent zero.
    CHECK(data.views[1].at(0, 0) == doctest::Approx(0.0));
    CHECK(data.views[1].at(1, 0) == doctest::Approx(0.5));
    CHECK(data.views[1].at(2, 0) == doctest::Approx(1.0));
    CHECK(data.views[1].at(3, 0) == 0.0);

    const MultiViewDataset once = data;
    normalize_min_max(data);
    for (std::size_t v = 0; v < 2; ++v)
        CHECK(std::equal(once.views[v].data.begin(), once.views[v].data.end(),
                         data.views[v].data.begin()));
}

TEST_CASE("synthesize produces round-robin clusters with shared membership") {
    SynthSpec spec;
    spec.n = 11;
    spec.n_views = 2;
    spec.clusters = 3;
    spec.dims = {4, 2};
    spec.noise = 0.0;

    RngStream rng(101);
    const MultiViewDataset data = synthesize(spec, rng);
    REQUIRE(data.n() == 11);
    REQUIRE(data.n_views() == 2);
    CHECK(data.views[0].cols == 4);
    CHECK(data.views[1].cols == 2);
    CHECK(data.labels == std::vector<int>(11, kLabelInlier));
    for (std::size_t v = 0; v < 2; ++v)
        for (std::size_t i = 0; i < 11; ++i) CHECK(data.present(v, i));

    // Zero noise collapses each instance onto its cluster center, so rows
    // agree exactly within a cluster and differ across clusters, in each view.
    for (std::size_t v = 0; v < 2; ++v) {
        for (std::size_t i = 3; i < 11; ++i)
            CHECK(rows_equal(data.views[v], i, data.views[v], i % 3));
        CHECK_FALSE(rows_equal(data.views[v], 0, data.views[v], 1));
        CHECK_FALSE(rows_equal(data.views[v], 1, data.views[v], 2));
    }

    RngStream rng2(101);
    const MultiViewDataset again = synthesize(spec, rng2);
    for (std::size_t v = 0; v < 2; ++v)
        CHECK(std::equal(data.views[v].data.begin(), data.views[v].data.end(),
                         again.views[v].data.begin()));

    SynthSpec bad = spec;
    bad.dims = {4};
    RngStream r3(1);
    CHECK_THROWS_AS(synthesize(bad, r3), ConfigError);
    bad = spec;
    bad.noise = -0.1;
    CHECK_THROWS_AS(synthesize(bad, r3), ConfigError);
    bad = spec;
    bad.n = 0;
    CHECK_THROWS_AS(synthesize(bad, r3), ConfigError);
}

TEST_CASE("attribute injection randomizes every view of the chosen instances") {
    SynthSpec spec;
    spec.n = 40;
    spec.clusters = 4;
    spec.dims = {3, 5};
    spec.noise = 0.01;
    RngStream rng(7);
    MultiViewDataset data = synthesize(spec, rng);
    const MultiViewDataset pristine = data;

    inject_attribute(data, 0.05, rng);
    std::size_t hit = 0;
    for (std::size_t i = 0; i < data.n(); ++i) {
        if (data.labels[i] == kLabelAttribute) {
            ++hit;
            for (std::size_t v = 0; v < 2; ++v) {
                CHECK_FALSE(rows_equal(data.views[v], i, pristine.views[v], i));
                for (double x : data.views[v].row(i)) {
                    CHECK(x >= 0.0);
                    CHECK(x < 1.0);
                }
            }
        } else {
            CHECK(data.labels[i] == kLabelInlier);
            for (std::size_t v = 0; v < 2; ++v)
                CHECK(rows_equal(data.views[v], i, pristine.views[v], i));
        }
    }
    CHECK(hit == 2); // ceil(0.05 * 40)

    MultiViewDataset untouched = pristine;
    RngStream r2(9);
    inject_attribute(untouched, 0.0, r2);
    CHECK(untouched.labels == pristine.labels);
    CHECK_THROWS_AS(inject_attribute(untouched, 1.0, r2), ConfigError);
}

TEST_CASE("class injection swaps half the views of disjoint pairs") {
    SynthSpec spec;
    spec.n = 20;
    spec.clusters = 2;
    spec.dims = {3, 4};
    spec.noise = 0.02;
    RngStream rng(21);
    MultiViewDataset data = synthesize(spec, rng);
    const MultiViewDataset pristine = data;

    inject_class(data, 0.2, rng); // ceil(0.2 * 20 / 2) = 2 pairs
    std::vector<std::size_t> hit;
    for (std::size_t i = 0; i < data.n(); ++i)
        if (data.labels[i] == kLabelClass) hit.push_back(i);
    REQUIRE(hit.size() == 4);

    // V = 2 swaps exactly one view per pair. Recover each partner by content:
    // the swapped row must equal the partner's original row, reciprocally.
    for (std::size_t a : hit) {
        std::size_t changed = 0;
        for (std::size_t v = 0; v < 2; ++v) {
            if (rows_equal(data.views[v], a, pristine.views[v], a)) continue;
            ++changed;
            bool matched = false;
            for (std::size_t b : hit) {
                if (b == a) continue;
                if (rows_equal(data.views[v], a, pristine.views[v], b) &&
                    rows_equal(data.views[v], b, pristine.views[v], a))
                    matched = true;
            }
            CHECK(matched);
        }
        CHECK(changed == 1);
    }
    for (std::size_t i = 0; i < data.n(); ++i) {
        if (std::find(hit.begin(), hit.end(), i) != hit.end()) continue;
        for (std::size_t v = 0; v < 2; ++v)
            CHECK(rows_equal(data.views[v], i, pristine.views[v], i));
    }
}

TEST_CASE("class-attribute injection swaps one view and randomizes the rest") {
    SynthSpec spec;
    spec.n = 20;
    spec.clusters = 2;
    spec.dims = {3, 3};
    spec.noise = 0.02;
    RngStream rng(33);
    MultiViewDataset data = synthesize(spec, rng);
    const MultiViewDataset pristine = data;

    inject_class_attribute(data, 0.1, rng); // 1 pair
    std::vector<std::size_t> hit;
    for (std::size_t i = 0; i < data.n(); ++i)
        if (data.labels[i] == kLabelClassAttribute) hit.push_back(i);
    REQUIRE(hit.size() == 2);

    const std::size_t a = hit[0], b = hit[1];
    std::size_t swapped = 0, randomized = 0;
    for (std::size_t v = 0; v < 2; ++v) {
        if (rows_equal(data.views[v], a, pristine.views[v], b) &&
            rows_equal(data.views[v], b, pristine.views[v], a)) {
            ++swapped;
        } else {
            // Fresh uniform draws: inside [0,1) and unrelated to either
            // original row.
            ++randomized;
            for (std::size_t i : {a, b}) {
                CHECK_FALSE(rows_equal(data.views[v], i, pristine.views[v], a));
                CHECK_FALSE(rows_equal(data.views[v], i, pristine.views[v], b));
                for (double x : data.views[v].row(i)) {
                    CHECK(x >= 0.0);
                    CHECK(x < 1.0);
                }
            }
        }
    }
    CHECK(swapped == 1);
    CHECK(randomized == 1);
}

TEST_CASE("the combined injector keeps the three populations disjoint") {
    SynthSpec spec;
    spec.n = 60;
    spec.clusters = 3;
    spec.dims = {4, 4};
    spec.noise = 0.01;
    RngStream rng(55);
    MultiViewDataset data = synthesize(spec, rng);

    OutlierRatios ratios;
    ratios.rho1 = 0.1;
    ratios.rho2 = 0.1;
    ratios.rho3 = 0.1;
    inject_outliers(data, ratios, rng);

    std::size_t counts[4] = {0, 0, 0, 0};
    for (int l : data.labels) ++counts[l];
    CHECK(counts[kLabelAttribute] == 6);      // ceil(0.1 * 60)
    CHECK(counts[kLabelClass] == 6);          // 2 * ceil(0.1 * 60 / 2)
    CHECK(counts[kLabelClassAttribute] == 6); // 2 * ceil(0.1 * 60 / 2)
    CHECK(counts[kLabelInlier] == 42);
}

TEST_CASE("masking removes one view from inlier instances only") {
    SynthSpec spec;
    spec.n = 20;
    spec.clusters = 2;
    spec.dims = {3, 3};
    spec.noise = 0.01;
    RngStream rng(77);
    MultiViewDataset data = synthesize(spec, rng);
    inject_attribute(data, 0.25, rng); // 5 outliers, 15 inliers

    apply_missing(data, 0.3, rng); // ceil(0.3 * 20) = 6 masked
    std::size_t masked = 0;
    for (std::size_t i = 0; i < data.n(); ++i) {
        std::size_t absent = 0;
        for (std::size_t v = 0; v < 2; ++v) {
            if (data.present(v, i)) continue;
            ++absent;
            for (double x : data.views[v].row(i)) CHECK(x == 0.0);
        }
        CHECK(absent <= 1);
        if (absent == 1) {
            ++masked;
            CHECK(data.labels[i] == kLabelInlier);
        }
    }
    CHECK(masked == 6);
    data.validate();
}

TEST_CASE("masking draws from all instances when labels are absent") {
    SynthSpec spec;
    spec.n = 12;
    spec.clusters = 2;
    spec.dims = {2, 2};
    spec.noise = 0.01;
    RngStream rng(88);
    MultiViewDataset data = synthesize(spec, rng);
    data.labels.clear();

    apply_missing(data, 0.5, rng); // ceil(6) = 6 masked out of 12
    std::size_t masked = 0;
    for (std::size_t i = 0; i < data.n(); ++i)
        masked += !data.present(0, i) || !data.present(1, i);
    CHECK(masked == 6);
}

TEST_CASE("masking rejects rates the inlier pool cannot cover") {
    SynthSpec spec;
    spec.n = 10;
    spec.clusters = 2;
    spec.dims = {2, 2};
    spec.noise = 0.01;
    RngStream rng(99);
    MultiViewDataset data = synthesize(spec, rng);
    inject_attribute(data, 0.55, rng); // 6 outliers, 4 inliers

    MultiViewDataset copy = data;
    CHECK_THROWS_AS(apply_missing(copy, 0.5, rng), ConfigError); // needs 5 > 4
    CHECK_THROWS_AS(apply_missing(copy, 1.0, rng), ConfigError);
    CHECK_THROWS_AS(apply_missing(copy, -0.1, rng), ConfigError);

    apply_missing(data, 0.0, rng);
    for (std::size_t v = 0; v < 2; ++v)
        for (std::size_t i = 0; i < data.n(); ++i) CHECK(data.present(v, i));
}

TEST_CASE("masking is deterministic for a fixed stream") {
    SynthSpec spec;
    spec.n = 16;
    spec.clusters = 2;
    spec.dims = {2, 3};
    spec.noise = 0.01;

    auto run = [&] {
        RngStream rng(1234);
        MultiViewDataset data = synthesize(spec, rng);
        inject_outliers(data, {0.1, 0.1, 0.1}, rng);
        apply_missing(data, 0.25, rng);
        return data;
    };
    const MultiViewDataset a = run();
    const MultiViewDataset b = run();
    CHECK(a.presence == b.presence);
    CHECK(a.labels == b.labels);
    for (std::size_t v = 0; v < 2; ++v)
        CHECK(std::equal(a.views[v].data.begin(), a.views[v].data.end(),
                         b.views[v].data.begin()));
}
