#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mvod/autoencoder.hpp"
#include "mvod/dataset.hpp"
#include "mvod/imputation.hpp"

namespace mvod {

struct ScoreRow {
    std::size_t instance = 0;
    double s_r = 0.0;
    double s_c = 0.0;
    double s = 0.0;
    int label = -1; // -1 when unknown
};

struct ScoreReport {
    std::vector<ScoreRow> rows; // one per instance, ascending id
    bool has_labels = false;
    double auc = -1.0;                // overall, outliers vs inliers; -1 when
                                      // labels are absent or single-class
    double auc_attribute = -1.0;      // each type vs inliers; -1 when absent
    double auc_class = -1.0;
    double auc_class_attribute = -1.0;
};

// 1/2 sum over the instance's present views of the squared reconstruction
// residual under the frozen model.
std::vector<double> reconstruction_scores(const MultiViewDataset& data,
                                          const AutoencoderStack& stack);

// Per-instance contrastive value with the full dataset as the negative pool
// and no bank term; latents must be observed or imputed for every view. With
// more than two views, the unordered view pairs are averaged.
std::vector<double> consistency_scores(const LatentViews& latents, double tau);

// Rank-based AUC with ties counted half, identical to brute-force pair
// counting. Throws on degenerate labels (no positives or no negatives).
double auc_score(const std::vector<double>& scores,
                 const std::vector<std::uint8_t>& positive);

ScoreReport total_score(const MultiViewDataset& data, const AutoencoderStack& stack,
                        const LatentViews& latents, double tau);

void write_scores_csv(const std::string& path, const ScoreReport& report);

// 50 equal-width bins over the observed score range, counts split by
// inlier/outlier. Requires labels.
void write_histogram_csv(const std::string& path, const ScoreReport& report,
                         std::size_t bins = 50);

} // namespace mvod
