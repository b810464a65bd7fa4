#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mvod/dataset.hpp"
#include "mvod/imputation.hpp"
#include "mvod/losses.hpp"
#include "mvod/scoring.hpp"

namespace mvod {

// Resolved experiment configuration. Every field maps to one config-file key
// of the same name; presets fill the dataset-dependent fields and everything
// can be overridden afterwards.
struct TrainConfig {
    std::string data_dir;       // empty: generate the synthetic corpus below
    std::string out_dir = "out";
    bool normalize = true;

    std::size_t synth_n = 1000;
    std::size_t synth_views = 2;
    std::size_t synth_clusters = 5;
    std::size_t synth_dim = 50;
    double synth_noise = 0.05;
    double rho1 = 0.05; // attribute outlier ratio
    double rho2 = 0.05; // class outlier ratio
    double rho3 = 0.05; // class-attribute outlier ratio
    double missing_rate = 0.3;

    std::vector<std::size_t> widths = {128, 32}; // hidden..latent, every view

    double tau_f = 0.5;
    double lambda1 = 1.0;
    double lambda2 = 1.0;
    double eta = 0.05;
    std::size_t k = 6;
    std::size_t k_pos = 4;
    std::size_t k_neg = 6;
    double mu1 = 0.02;
    double mu2 = 0.2;
    std::size_t warm_epochs = 100;
    std::size_t total_epochs = 200;
    std::size_t impute_start_epoch = 50;
    std::size_t knn_switch_epoch = 50;
    std::size_t knn_refresh_interval = 5;
    std::size_t batch_size = 256;
    double learning_rate = 1e-3;
    std::size_t bank_window = 8; // bank capacity in batches of suspects
    RankSign rank_sign = RankSign::Printed;
    std::uint64_t seed = 1;

    bool loss_oa = true;
    bool loss_na = true;
    bool loss_sr = true;
    bool na_use_temperature = false; // on: alignment loss divides by tau_f too

    std::size_t auc_every = 1; // epochs between running-AUC updates; 0 = off
    bool dump_knn = false;

    void validate() const;

    // Fixed-order key = value rendering of every field; two configs hash
    // equal exactly when they train identically.
    std::string canonical_text() const;
    std::uint64_t config_hash() const;
};

// Named defaults: synthetic, bdgp, landuse21, scene15, fashion.
TrainConfig preset_config(const std::string& name);

// Sets one field from its config-file key. Unknown key or unparsable value
// is a ConfigError.
void apply_override(TrainConfig& cfg, const std::string& key, const std::string& value);

// key = value lines, # comments, blank lines ignored. Keys apply in file
// order, so a preset line overrides only what precedes it.
TrainConfig load_config(const std::string& path);

struct EpochLog {
    std::size_t epoch = 0;
    double l_ar = 0.0;
    double l_oa = 0.0;
    double l_na = 0.0;
    double l_koleo = 0.0;
    double l_rank = 0.0;
    double mu = 0.0;
    double total = 0.0;
    bool has_auc = false;
    double auc = 0.0; // frozen-model scoring pass, same metric as the report
    bool has_label_split = false;
    double mean_contrastive_inlier = 0.0;
    double mean_contrastive_outlier = 0.0;
    std::size_t imputed = 0;
    std::size_t deferred = 0;
    std::size_t bank_size = 0;
};

struct RunResult {
    ScoreReport report;
    std::vector<EpochLog> epochs;
    ImputeStats final_impute;
    double wall_seconds = 0.0;
    std::uint64_t config_hash = 0;

    // Filled when the pre-masking data was available: mean cosine between
    // each recovered latent and the latent of the true view row under the
    // same frozen encoder, next to the zero and per-view-mean baselines.
    bool has_impute_quality = false;
    double impute_cosine_crt = 0.0;
    double impute_cosine_zero = 0.0;
    double impute_cosine_mean = 0.0;
};

// Loads cfg.data_dir, or synthesizes, normalizes, injects, and masks the
// synthetic corpus. truth_out, when non-null, receives the pre-masking copy
// (synthetic path only; left untouched otherwise).
MultiViewDataset prepare_dataset(const TrainConfig& cfg, MultiViewDataset* truth_out);

// The full pipeline: train, impute, score, and write artifacts (scores.csv,
// metrics.json, loss_curves.csv, histogram.csv, checkpoint.bin, resolved
// config) into cfg.out_dir. ground_truth enables the imputation-quality
// report. The two-argument form runs on an already-prepared dataset.
RunResult run_experiment(const TrainConfig& cfg);
RunResult run_experiment(const TrainConfig& cfg, const MultiViewDataset& data,
                         const MultiViewDataset* ground_truth);

// Scoring-only pass with a frozen model: encode, impute once, score.
ScoreReport score_dataset(const TrainConfig& cfg, const MultiViewDataset& data,
                          const AutoencoderStack& stack);

struct SweepRow {
    double value = 0.0;
    double auc = 0.0;
};

// One run_experiment per value of the named scalar config key, shared seed,
// artifacts under out_dir/<param>_<value>/. Rows come back sorted by value;
// sweep.csv is written to base.out_dir.
std::vector<SweepRow> sweep(const TrainConfig& base, const std::string& param,
                            const std::vector<double>& values);

} // namespace mvod
