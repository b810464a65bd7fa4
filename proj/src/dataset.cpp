#include "mvod/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>

#include "mvod/errors.hpp"
#include "mvod/io.hpp"

namespace mvod {

bool MultiViewDataset::complete(std::size_t i) const {
    for (std::size_t v = 0; v < n_views(); ++v)
        if (!present(v, i)) return false;
    return true;
}

std::vector<std::size_t> MultiViewDataset::complete_ids() const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < n(); ++i)
        if (complete(i)) out.push_back(i);
    return out;
}

std::vector<std::size_t> MultiViewDataset::present_ids(std::size_t v) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < n(); ++i)
        if (present(v, i)) out.push_back(i);
    return out;
}

void MultiViewDataset::validate() const {
    if (views.size() < 2)
        throw ConfigError("dataset: need at least two views");
    if (presence.size() != views.size())
        throw ConfigError("dataset: presence not parallel to views");
    const std::size_t rows = n();
    for (std::size_t v = 0; v < views.size(); ++v) {
        if (views[v].rows != rows)
            throw ConfigError("dataset: view row counts disagree");
        if (presence[v].size() != rows)
            throw ConfigError("dataset: presence length mismatch");
    }
    if (!labels.empty() && labels.size() != rows)
        throw ConfigError("dataset: labels length mismatch");
    for (int l : labels)
        if (l < kLabelInlier || l > kLabelClassAttribute)
            throw ConfigError("dataset: label outside 0..3");
    for (std::size_t i = 0; i < rows; ++i) {
        bool any = false;
        for (std::size_t v = 0; v < views.size(); ++v) any |= present(v, i);
        if (!any)
            throw ConfigError("dataset: instance " + std::to_string(i) +
                              " absent from every view");
    }
}

MultiViewDataset load_dataset(const std::string& dir) {
    MultiViewDataset data;
    for (std::size_t v = 1;; ++v) {
        const std::string path = dir + "/view_" + std::to_string(v) + ".csv";
        if (!file_exists(path)) break;
        data.views.push_back(read_csv_matrix(path));
    }
    if (data.views.size() < 2)
        throw ConfigError(dir + ": expected view_1.csv and view_2.csv at least");
    const std::size_t n = data.views.front().rows;
    data.presence.assign(data.views.size(), std::vector<std::uint8_t>(n, 1));

    const std::string mask_path = dir + "/mask.csv";
    if (file_exists(mask_path)) {
        const Matrix mask = read_csv_matrix(mask_path);
        if (mask.rows != n || mask.cols != data.views.size())
            throw ConfigError(mask_path + ": expected " + std::to_string(n) + "x" +
                              std::to_string(data.views.size()));
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t v = 0; v < data.views.size(); ++v) {
                const double m = mask.at(i, v);
                if (m != 0.0 && m != 1.0)
                    throw ConfigError(mask_path + ": entries must be 0 or 1");
                data.presence[v][i] = m != 0.0;
            }
        }
    }

    const std::string labels_path = dir + "/labels.csv";
    if (file_exists(labels_path)) {
        const Matrix labels = read_csv_matrix(labels_path);
        if (labels.rows != n || labels.cols != 1)
            throw ConfigError(labels_path + ": expected a single column of " +
                              std::to_string(n) + " labels");
        data.labels.resize(n);
        for (std::size_t i = 0; i < n; ++i) {
            const double l = labels.at(i, 0);
            if (l != std::floor(l))
                throw ConfigError(labels_path + ": labels must be integers");
            data.labels[i] = static_cast<int>(l);
        }
    }

    // Absent rows are placeholders; zero them so nothing downstream can
    // accidentally use stale values.
    for (std::size_t v = 0; v < data.views.size(); ++v)
        for (std::size_t i = 0; i < n; ++i)
            if (!data.present(v, i))
                std::fill_n(data.views[v].row(i).data(), data.views[v].cols, 0.0);

    data.validate();
    return data;
}

void save_dataset(const MultiViewDataset& data, const std::string& dir) {
    ensure_directory(dir);
    for (std::size_t v = 0; v < data.n_views(); ++v)
        write_csv_matrix(dir + "/view_" + std::to_string(v + 1) + ".csv", data.views[v]);
    bool any_absent = false;
    for (const auto& p : data.presence)
        for (std::uint8_t b : p) any_absent |= b == 0;
    if (any_absent) {
        Matrix mask(data.n(), data.n_views());
        for (std::size_t i = 0; i < data.n(); ++i)
            for (std::size_t v = 0; v < data.n_views(); ++v)
                mask.at(i, v) = data.present(v, i) ? 1.0 : 0.0;
        write_csv_matrix(dir + "/mask.csv", mask);
    }
    if (data.has_labels()) {
        Matrix labels(data.n(), 1);
        for (std::size_t i = 0; i < data.n(); ++i) labels.at(i, 0) = data.labels[i];
        write_csv_matrix(dir + "/labels.csv", labels);
    }
}

void normalize_min_max(MultiViewDataset& data) {
    for (std::size_t v = 0; v < data.n_views(); ++v) {
        Matrix& x = data.views[v];
        for (std::size_t j = 0; j < x.cols; ++j) {
            double lo = 0.0, hi = 0.0;
            bool first = true;
            for (std::size_t i = 0; i < x.rows; ++i) {
                if (!data.present(v, i)) continue;
                const double val = x.at(i, j);
                lo = first ? val : std::min(lo, val);
                hi = first ? val : std::max(hi, val);
                first = false;
            }
            const double range = hi - lo;
            for (std::size_t i = 0; i < x.rows; ++i) {
                if (!data.present(v, i)) continue;
                x.at(i, j) = range > 0.0 ? (x.at(i, j) - lo) / range : 0.0;
            }
        }
    }
}

MultiViewDataset synthesize(const SynthSpec& spec, RngStream& rng) {
    if (spec.n == 0 || spec.clusters == 0)
        throw ConfigError("synthesize: n and clusters must be positive");
    if (spec.n_views < 2)
        throw ConfigError("synthesize: need at least two views");
    if (spec.dims.size() != spec.n_views)
        throw ConfigError("synthesize: one dimension per view required");
    if (spec.noise < 0.0)
        throw ConfigError("synthesize: negative noise");

    MultiViewDataset data;
    std::vector<Matrix> centers;
    for (std::size_t v = 0; v < spec.n_views; ++v) {
        Matrix c(spec.clusters, spec.dims[v]);
        for (double& x : c.data) x = rng.uniform();
        centers.push_back(std::move(c));
    }
    for (std::size_t v = 0; v < spec.n_views; ++v) {
        Matrix x(spec.n, spec.dims[v]);
        for (std::size_t i = 0; i < spec.n; ++i) {
            const std::size_t c = i % spec.clusters; // round-robin, shared across views
            for (std::size_t j = 0; j < spec.dims[v]; ++j)
                x.at(i, j) = centers[v].at(c, j) + spec.noise * rng.normal();
        }
        data.views.push_back(std::move(x));
    }
    data.presence.assign(spec.n_views, std::vector<std::uint8_t>(spec.n, 1));
    data.labels.assign(spec.n, kLabelInlier);
    return data;
}

namespace {

std::vector<std::size_t> draw_from_inliers(const MultiViewDataset& data, std::size_t count,
                                           RngStream& rng, const char* what) {
    std::vector<std::size_t> pool;
    for (std::size_t i = 0; i < data.n(); ++i)
        if (data.labels.empty() || data.labels[i] == kLabelInlier) pool.push_back(i);
    if (count > pool.size())
        throw ConfigError(std::string(what) + ": not enough inlier instances left");
    const auto picks = rng.sample_without_replacement(pool.size(), count);
    std::vector<std::size_t> out(count);
    for (std::size_t j = 0; j < count; ++j) out[j] = pool[picks[j]];
    return out;
}

void randomize_instance_view(MultiViewDataset& data, std::size_t i, std::size_t v,
                             RngStream& rng) {
    if (!data.present(v, i)) return;
    auto row = data.views[v].row(i);
    for (double& x : row) x = rng.uniform();
}

void ensure_labels(MultiViewDataset& data) {
    if (data.labels.empty()) data.labels.assign(data.n(), kLabelInlier);
}

} // namespace

void inject_attribute(MultiViewDataset& data, double rho, RngStream& rng) {
    if (rho < 0.0 || rho >= 1.0)
        throw ConfigError("inject_attribute: rho outside [0,1)");
    if (rho == 0.0) return;
    ensure_labels(data);
    const auto count = static_cast<std::size_t>(std::ceil(rho * double(data.n())));
    for (std::size_t i : draw_from_inliers(data, count, rng, "inject_attribute")) {
        for (std::size_t v = 0; v < data.n_views(); ++v)
            randomize_instance_view(data, i, v, rng);
        data.labels[i] = kLabelAttribute;
    }
}

namespace {

// Swap the feature vectors of a pair in floor(V/2) randomly chosen views and
// return the chosen view ids. Used by the class and class-attribute injectors.
std::vector<std::size_t> swap_pair_views(MultiViewDataset& data, std::size_t a,
                                         std::size_t b, RngStream& rng) {
    const std::size_t n_swap = data.n_views() / 2;
    const auto views = rng.sample_without_replacement(data.n_views(), n_swap);
    for (std::size_t v : views) {
        auto ra = data.views[v].row(a);
        auto rb = data.views[v].row(b);
        std::swap_ranges(ra.begin(), ra.end(), rb.begin());
    }
    return views;
}

void inject_swapped_pairs(MultiViewDataset& data, double rho, RngStream& rng, int label,
                          bool randomize_rest, const char* what) {
    if (rho < 0.0 || rho >= 1.0)
        throw ConfigError(std::string(what) + ": rho outside [0,1)");
    if (rho == 0.0) return;
    ensure_labels(data);
    const auto pairs =
        static_cast<std::size_t>(std::ceil(rho * double(data.n()) / 2.0));
    const auto picked = draw_from_inliers(data, 2 * pairs, rng, what);
    for (std::size_t p = 0; p < pairs; ++p) {
        const std::size_t a = picked[2 * p];
        const std::size_t b = picked[2 * p + 1];
        const auto swapped = swap_pair_views(data, a, b, rng);
        if (randomize_rest) {
            for (std::size_t v = 0; v < data.n_views(); ++v) {
                if (std::find(swapped.begin(), swapped.end(), v) != swapped.end())
                    continue;
                randomize_instance_view(data, a, v, rng);
                randomize_instance_view(data, b, v, rng);
            }
        }
        data.labels[a] = label;
        data.labels[b] = label;
    }
}

} // namespace

void inject_class(MultiViewDataset& data, double rho, RngStream& rng) {
    inject_swapped_pairs(data, rho, rng, kLabelClass, false, "inject_class");
}

void inject_class_attribute(MultiViewDataset& data, double rho, RngStream& rng) {
    inject_swapped_pairs(data, rho, rng, kLabelClassAttribute, true,
                         "inject_class_attribute");
}

void inject_outliers(MultiViewDataset& data, const OutlierRatios& ratios, RngStream& rng) {
    inject_attribute(data, ratios.rho1, rng);
    inject_class(data, ratios.rho2, rng);
    inject_class_attribute(data, ratios.rho3, rng);
}

void apply_missing(MultiViewDataset& data, double rate, RngStream& rng) {
    if (rate < 0.0 || rate >= 1.0)
        throw ConfigError("apply_missing: rate outside [0,1)");
    if (rate == 0.0) return;
    if (data.n_views() < 2)
        throw ConfigError("apply_missing: need at least two views");
    const auto count = static_cast<std::size_t>(std::ceil(rate * double(data.n())));
    // Injected outliers keep all their views. Removing a view from a swap-pair
    // member or a randomized instance erases the evidence its label asserts,
    // so masking draws from label-inlier instances when labels are known.
    std::vector<std::size_t> eligible;
    eligible.reserve(data.n());
    for (std::size_t i = 0; i < data.n(); ++i)
        if (!data.has_labels() || data.labels[i] == kLabelInlier) eligible.push_back(i);
    if (count > eligible.size())
        throw ConfigError("apply_missing: rate leaves fewer unmasked inliers than views require");
    const auto picked_pos = rng.sample_without_replacement(eligible.size(), count);
    for (std::size_t p : picked_pos) {
        const std::size_t i = eligible[p];
        std::vector<std::size_t> present;
        for (std::size_t v = 0; v < data.n_views(); ++v)
            if (data.present(v, i)) present.push_back(v);
        if (present.size() < 2)
            throw ConfigError("apply_missing: instance " + std::to_string(i) +
                              " has no view to spare");
        const std::size_t v = present[rng.uniform_index(present.size())];
        data.presence[v][i] = 0;
        std::fill_n(data.views[v].row(i).data(), data.views[v].cols, 0.0);
    }
}

} // namespace mvod
