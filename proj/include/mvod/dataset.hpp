#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mvod/matrix.hpp"
#include "mvod/rng.hpp"

namespace mvod {

// Ground-truth label codes carried in labels.csv.
inline constexpr int kLabelInlier = 0;
inline constexpr int kLabelAttribute = 1;
inline constexpr int kLabelClass = 2;
inline constexpr int kLabelClassAttribute = 3;

struct MultiViewDataset {
    std::vector<Matrix> views;                       // per view, n x d_v
    std::vector<std::vector<std::uint8_t>> presence; // [view][instance]
    std::vector<int> labels;                         // empty, or n codes 0..3

    std::size_t n_views() const { return views.size(); }
    std::size_t n() const { return views.empty() ? 0 : views.front().rows; }
    bool has_labels() const { return !labels.empty(); }
    bool present(std::size_t v, std::size_t i) const { return presence[v][i] != 0; }
    bool complete(std::size_t i) const;

    std::vector<std::size_t> complete_ids() const;
    std::vector<std::size_t> present_ids(std::size_t v) const;

    // Shape coherence plus the guarantee that every instance keeps a view.
    void validate() const;
};

// Directory layout: view_1.csv .. view_V.csv, optional mask.csv (n x V of
// 0/1), optional labels.csv (n x 1 of 0..3). Feature rows of absent views are
// zeroed on load.
MultiViewDataset load_dataset(const std::string& dir);

// Writes view files, mask.csv when any view is absent, labels.csv when known.
void save_dataset(const MultiViewDataset& data, const std::string& dir);

// Per-view per-feature min-max to [0,1] over present rows; a feature constant
// across present rows maps to 0. Absent rows stay zero.
void normalize_min_max(MultiViewDataset& data);

struct SynthSpec {
    std::size_t n = 1000;
    std::size_t n_views = 2;
    std::size_t clusters = 5;
    std::vector<std::size_t> dims = {50, 50};
    double noise = 0.05;
};

// Clustered inlier data: instance i belongs to cluster i mod clusters in every
// view; per view each cluster gets a center uniform in [0,1]^d and instances
// are center plus noise * standard normal per coordinate. Labels all inlier.
MultiViewDataset synthesize(const SynthSpec& spec, RngStream& rng);

struct OutlierRatios {
    double rho1 = 0.0; // attribute
    double rho2 = 0.0; // class
    double rho3 = 0.0; // class-attribute
};

// Each injector draws from the currently unlabeled (inlier) instances, so the
// three outlier populations are disjoint. Data must already be in [0,1].
void inject_attribute(MultiViewDataset& data, double rho, RngStream& rng);
void inject_class(MultiViewDataset& data, double rho, RngStream& rng);
void inject_class_attribute(MultiViewDataset& data, double rho, RngStream& rng);

// Fixed order: attribute, then class, then class-attribute.
void inject_outliers(MultiViewDataset& data, const OutlierRatios& ratios, RngStream& rng);

// ceil(rate * n) distinct instances each lose exactly one uniformly chosen
// present view; the row is zeroed and its presence bit cleared. Every
// instance keeps at least one view. When labels exist, only label-inlier
// instances are eligible: removing a view from an injected outlier would
// erase the evidence its label asserts.
void apply_missing(MultiViewDataset& data, double rate, RngStream& rng);

} // namespace mvod
