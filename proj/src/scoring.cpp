#include "mvod/scoring.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "mvod/errors.hpp"
#include "mvod/losses.hpp"

namespace mvod {

std::vector<double> reconstruction_scores(const MultiViewDataset& data,
                                          const AutoencoderStack& stack) {
    if (stack.n_views() != data.n_views())
        throw ContractViolation("reconstruction_scores: view count mismatch");
    std::vector<double> scores(data.n(), 0.0);
    for (std::size_t v = 0; v < data.n_views(); ++v) {
        const auto ids = data.present_ids(v);
        if (ids.empty()) continue;
        Matrix x(ids.size(), data.views[v].cols);
        for (std::size_t r = 0; r < ids.size(); ++r)
            std::copy_n(data.views[v].row(ids[r]).data(), x.cols, x.row(r).data());
        const Matrix recon = decode(stack, v, encode(stack, v, x));
        for (std::size_t r = 0; r < ids.size(); ++r)
            scores[ids[r]] += 0.5 * squared_distance(x.row(r), recon.row(r));
    }
    return scores;
}

std::vector<double> consistency_scores(const LatentViews& latents, double tau) {
    const std::size_t n = latents.n_all();
    const std::size_t n_views = latents.n_views();
    if (n_views < 2)
        throw ContractViolation("consistency_scores: need at least two views");
    std::size_t missing = 0;
    for (std::size_t i = 0; i < n; ++i)
        if (!latents.complete(i)) ++missing;
    if (missing > 0)
        throw NumericError("consistency_scores: " + std::to_string(missing) +
                           " instances still lack a latent in some view");

    std::vector<double> scores(n, 0.0);
    std::size_t n_pairs = 0;
    for (std::size_t a = 0; a < n_views; ++a) {
        for (std::size_t b = a + 1; b < n_views; ++b) {
            const ContrastiveOut out =
                contrastive_pair_loss(latents.z[a], latents.z[b], {}, {}, tau);
            for (std::size_t i = 0; i < n; ++i) scores[i] += out.per_instance[i];
            ++n_pairs;
        }
    }
    if (n_pairs > 1)
        for (double& s : scores) s /= double(n_pairs);
    return scores;
}

double auc_score(const std::vector<double>& scores,
                 const std::vector<std::uint8_t>& positive) {
    if (scores.size() != positive.size() || scores.empty())
        throw ContractViolation("auc_score: scores and labels not parallel");
    std::size_t n_pos = 0;
    for (std::uint8_t p : positive) n_pos += p != 0;
    const std::size_t n_neg = scores.size() - n_pos;
    if (n_pos == 0 || n_neg == 0)
        throw ContractViolation("auc_score: degenerate labels");

    std::vector<std::size_t> order(scores.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&scores](std::size_t a, std::size_t b) {
        return scores[a] < scores[b];
    });

    // Midranks for ties; the tied-pair half-credit falls out exactly.
    double pos_rank_sum = 0.0;
    std::size_t lo = 0;
    while (lo < order.size()) {
        std::size_t hi = lo;
        while (hi + 1 < order.size() && scores[order[hi + 1]] == scores[order[lo]]) ++hi;
        const double rank = 0.5 * double(lo + 1 + hi + 1);
        for (std::size_t t = lo; t <= hi; ++t)
            if (positive[order[t]]) pos_rank_sum += rank;
        lo = hi + 1;
    }
    const double u = pos_rank_sum - 0.5 * double(n_pos) * double(n_pos + 1);
    return u / (double(n_pos) * double(n_neg));
}

ScoreReport total_score(const MultiViewDataset& data, const AutoencoderStack& stack,
                        const LatentViews& latents, double tau) {
    const std::vector<double> s_r = reconstruction_scores(data, stack);
    const std::vector<double> s_c = consistency_scores(latents, tau);
    ScoreReport report;
    report.rows.resize(data.n());
    for (std::size_t i = 0; i < data.n(); ++i) {
        ScoreRow& row = report.rows[i];
        row.instance = i;
        row.s_r = s_r[i];
        row.s_c = s_c[i];
        row.s = s_r[i] + s_c[i];
        row.label = data.has_labels() ? data.labels[i] : -1;
    }
    report.has_labels = data.has_labels();
    if (report.has_labels) {
        std::vector<double> scores(data.n());
        std::vector<std::uint8_t> outlier(data.n());
        bool any_pos = false, any_neg = false;
        for (std::size_t i = 0; i < data.n(); ++i) {
            scores[i] = report.rows[i].s;
            outlier[i] = data.labels[i] != kLabelInlier;
            (outlier[i] ? any_pos : any_neg) = true;
        }
        // Single-class labels leave every AUC at the -1 sentinel; auc_score
        // itself rejects them.
        if (any_pos && any_neg) {
            report.auc = auc_score(scores, outlier);
            for (int type : {kLabelAttribute, kLabelClass, kLabelClassAttribute}) {
                std::vector<double> sub_scores;
                std::vector<std::uint8_t> sub_pos;
                for (std::size_t i = 0; i < data.n(); ++i) {
                    if (data.labels[i] != kLabelInlier && data.labels[i] != type) continue;
                    sub_scores.push_back(report.rows[i].s);
                    sub_pos.push_back(data.labels[i] == type);
                }
                const bool present =
                    std::find(sub_pos.begin(), sub_pos.end(), std::uint8_t(1)) != sub_pos.end();
                const double value = present ? auc_score(sub_scores, sub_pos) : -1.0;
                if (type == kLabelAttribute) report.auc_attribute = value;
                if (type == kLabelClass) report.auc_class = value;
                if (type == kLabelClassAttribute) report.auc_class_attribute = value;
            }
        }
    }
    return report;
}

namespace {

const char* label_name(int label) {
    switch (label) {
        case kLabelInlier: return "inlier";
        case kLabelAttribute: return "attribute";
        case kLabelClass: return "class";
        case kLabelClassAttribute: return "class_attribute";
        default: return "";
    }
}

} // namespace

void write_scores_csv(const std::string& path, const ScoreReport& report) {
    std::FILE* f = std::fopen(path.c_str(), "w");
    if (!f)
        throw ConfigError("cannot write " + path);
    std::fprintf(f, "instance_id,s_r,s_c,s,label,type\n");
    for (const ScoreRow& row : report.rows) {
        if (row.label >= 0)
            std::fprintf(f, "%zu,%.17g,%.17g,%.17g,%d,%s\n", row.instance, row.s_r,
                         row.s_c, row.s, row.label == kLabelInlier ? 0 : 1,
                         label_name(row.label));
        else
            std::fprintf(f, "%zu,%.17g,%.17g,%.17g,,\n", row.instance, row.s_r, row.s_c,
                         row.s);
    }
    std::fclose(f);
}

void write_histogram_csv(const std::string& path, const ScoreReport& report,
                         std::size_t bins) {
    if (!report.has_labels)
        throw ContractViolation("write_histogram_csv: labels required");
    if (bins == 0 || report.rows.empty())
        throw ContractViolation("write_histogram_csv: nothing to bin");
    double lo = report.rows.front().s, hi = lo;
    for (const ScoreRow& row : report.rows) {
        lo = std::min(lo, row.s);
        hi = std::max(hi, row.s);
    }
    const double width = hi > lo ? (hi - lo) / double(bins) : 1.0;
    std::vector<std::size_t> inliers(bins, 0), outliers(bins, 0);
    for (const ScoreRow& row : report.rows) {
        auto b = static_cast<std::size_t>((row.s - lo) / width);
        b = std::min(b, bins - 1);
        if (row.label == kLabelInlier)
            ++inliers[b];
        else
            ++outliers[b];
    }
    std::FILE* f = std::fopen(path.c_str(), "w");
    if (!f)
        throw ConfigError("cannot write " + path);
    std::fprintf(f, "bin_lo,bin_hi,inlier_count,outlier_count\n");
    for (std::size_t b = 0; b < bins; ++b)
        std::fprintf(f, "%.17g,%.17g,%zu,%zu\n", lo + width * double(b),
                     lo + width * double(b + 1), inliers[b], outliers[b]);
    std::fclose(f);
}

} // namespace mvod
