#include "mvod/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <memory>
#include <utility>

#include "json.hpp"

#include "mvod/checkpoint.hpp"
#include "mvod/errors.hpp"
#include "mvod/io.hpp"
#include "mvod/knn.hpp"
#include "mvod/objective.hpp"

namespace mvod {

namespace {

std::string fmt_g17(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string fmt_short(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%g", v);
    return buf;
}

double parse_double(const std::string& key, const std::string& value) {
    const char* s = value.c_str();
    char* end = nullptr;
    double v = std::strtod(s, &end);
    if (end == s || *end != '\0')
        throw ConfigError("config key '" + key + "': not a number: '" + value + "'");
    return v;
}

std::uint64_t parse_u64(const std::string& key, const std::string& value) {
    const char* s = value.c_str();
    char* end = nullptr;
    unsigned long long v = std::strtoull(s, &end, 10);
    if (end == s || *end != '\0' || value.find('-') != std::string::npos)
        throw ConfigError("config key '" + key + "': not a count: '" + value + "'");
    return v;
}

std::size_t parse_size(const std::string& key, const std::string& value) {
    return static_cast<std::size_t>(parse_u64(key, value));
}

bool parse_bool(const std::string& key, const std::string& value) {
    if (value == "1" || value == "true" || value == "on") return true;
    if (value == "0" || value == "false" || value == "off") return false;
    throw ConfigError("config key '" + key + "': not a flag: '" + value + "'");
}

std::vector<std::size_t> parse_widths(const std::string& value) {
    std::vector<std::size_t> out;
    std::size_t pos = 0;
    while (pos <= value.size()) {
        std::size_t comma = value.find(',', pos);
        if (comma == std::string::npos) comma = value.size();
        out.push_back(parse_size("widths", value.substr(pos, comma - pos)));
        pos = comma + 1;
    }
    return out;
}

std::string widths_text(const std::vector<std::size_t>& w) {
    std::string s;
    for (std::size_t i = 0; i < w.size(); ++i) {
        if (i) s += ',';
        s += std::to_string(w[i]);
    }
    return s;
}

std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    std::size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

Matrix gather_rows(const Matrix& m, const std::vector<std::size_t>& rows) {
    Matrix out(rows.size(), m.cols);
    for (std::size_t r = 0; r < rows.size(); ++r)
        std::copy_n(m.row(rows[r]).data(), m.cols, out.row(r).data());
    return out;
}

// Re-encode every observed row under the current parameters. Imputed rows
// keep their previous values until the next impute_all discards them.
void refresh_observed(LatentViews& latents, const MultiViewDataset& data,
                      const AutoencoderStack& stack,
                      const std::vector<std::vector<std::size_t>>& observed_ids) {
    for (std::size_t v = 0; v < data.n_views(); ++v) {
        const std::vector<std::size_t>& rows = observed_ids[v];
        if (rows.empty()) continue;
        const Matrix z = encode(stack, v, gather_rows(data.views[v], rows));
        for (std::size_t r = 0; r < rows.size(); ++r) {
            std::copy_n(z.row(r).data(), z.cols, latents.z[v].row(rows[r]).data());
            latents.status[v][rows[r]] = LatentStatus::Observed;
        }
    }
}

// Mean pairwise cross-view cosine selection; the bi-view case is the
// canonical select_potential_outliers.
std::vector<std::size_t> select_bank_rows(const std::vector<Matrix>& z, double eta) {
    if (z.size() == 2) return select_potential_outliers(z[0], z[1], eta);
    const std::size_t n = z[0].rows;
    std::vector<std::pair<double, std::size_t>> sims(n);
    for (std::size_t i = 0; i < n; ++i) sims[i] = {0.0, i};
    std::size_t pairs = 0;
    for (std::size_t a = 0; a < z.size(); ++a)
        for (std::size_t b = a + 1; b < z.size(); ++b, ++pairs)
            for (std::size_t i = 0; i < n; ++i)
                sims[i].first += row_cosine(z[a].row(i), z[b].row(i));
    for (auto& s : sims) s.first /= double(pairs);
    std::sort(sims.begin(), sims.end());
    const std::size_t take =
        std::min(n, static_cast<std::size_t>(std::ceil(eta * double(n))));
    std::vector<std::size_t> out(take);
    for (std::size_t r = 0; r < take; ++r) out[r] = sims[r].second;
    return out;
}

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

FilePtr open_out(const std::string& path) {
    FilePtr f(std::fopen(path.c_str(), "wb"));
    if (!f) throw ConfigError("cannot open for writing: " + path);
    return f;
}

void write_loss_curves(const std::string& path, const std::vector<EpochLog>& epochs) {
    FilePtr f = open_out(path);
    std::fprintf(f.get(),
                 "epoch,l_ar,l_oa,l_na,l_koleo,l_rank,mu,total,auc,"
                 "mean_contrastive_inlier,mean_contrastive_outlier\n");
    for (const EpochLog& e : epochs) {
        std::fprintf(f.get(), "%zu,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g", e.epoch,
                     e.l_ar, e.l_oa, e.l_na, e.l_koleo, e.l_rank, e.mu, e.total);
        if (e.has_auc)
            std::fprintf(f.get(), ",%.17g", e.auc);
        else
            std::fprintf(f.get(), ",");
        if (e.has_label_split)
            std::fprintf(f.get(), ",%.17g,%.17g\n", e.mean_contrastive_inlier,
                         e.mean_contrastive_outlier);
        else
            std::fprintf(f.get(), ",,\n");
    }
}

struct QualityRow {
    std::size_t instance = 0;
    std::size_t view = 0;
    double cosine = 0.0;
    double l2 = 0.0;
};

void write_quality_csv(const std::string& path, const std::vector<QualityRow>& rows) {
    FilePtr f = open_out(path);
    std::fprintf(f.get(), "instance,view,cosine,l2\n");
    for (const QualityRow& r : rows)
        std::fprintf(f.get(), "%zu,%zu,%.17g,%.17g\n", r.instance, r.view, r.cosine,
                     r.l2);
}

std::string hash_hex(std::uint64_t h) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

} // namespace

void TrainConfig::validate() const {
    auto fail = [](const std::string& what) { throw ConfigError("config: " + what); };
    if (widths.empty()) fail("widths must list at least the latent width");
    for (std::size_t w : widths)
        if (w == 0) fail("widths entries must be positive");
    if (data_dir.empty()) {
        if (synth_n == 0) fail("synth_n must be positive");
        if (synth_views < 2) fail("synth_views must be at least 2");
        if (synth_clusters < 2) fail("synth_clusters must be at least 2");
        if (synth_dim == 0) fail("synth_dim must be positive");
        if (synth_noise < 0) fail("synth_noise must be nonnegative");
        for (double r : {rho1, rho2, rho3})
            if (r < 0 || r >= 1) fail("outlier ratios must lie in [0,1)");
        if (rho1 + rho2 + rho3 >= 1) fail("outlier ratios must sum below 1");
        if (missing_rate < 0 || missing_rate >= 1) fail("missing_rate must lie in [0,1)");
    }
    if (tau_f <= 0) fail("tau_f must be positive");
    if (lambda1 < 0 || lambda2 < 0) fail("lambda weights must be nonnegative");
    if (eta <= 0 || eta >= 1) fail("eta must lie strictly between 0 and 1");
    if (k == 0) fail("k must be positive");
    if (k_pos == 0 || k_pos > k) fail("k_pos must lie in 1..k");
    if (k_neg == 0 || k_neg > k) fail("k_neg must lie in 1..k");
    if (mu1 < 0 || mu2 < mu1) fail("mu schedule needs 0 <= mu1 <= mu2");
    if (total_epochs == 0) fail("total_epochs must be positive");
    if (warm_epochs > total_epochs) fail("warm_epochs must not exceed total_epochs");
    if (impute_start_epoch > total_epochs)
        fail("impute_start_epoch must not exceed total_epochs");
    if (knn_refresh_interval == 0) fail("knn_refresh_interval must be positive");
    if (batch_size == 0) fail("batch_size must be positive");
    if (learning_rate <= 0) fail("learning_rate must be positive");
    if (bank_window == 0) fail("bank_window must be positive");
}

std::string TrainConfig::canonical_text() const {
    std::string s;
    auto put = [&s](const std::string& key, const std::string& value) {
        s += key;
        s += " = ";
        s += value;
        s += '\n';
    };
    put("data_dir", data_dir);
    put("out_dir", out_dir);
    put("normalize", normalize ? "1" : "0");
    put("synth_n", std::to_string(synth_n));
    put("synth_views", std::to_string(synth_views));
    put("synth_clusters", std::to_string(synth_clusters));
    put("synth_dim", std::to_string(synth_dim));
    put("synth_noise", fmt_g17(synth_noise));
    put("rho1", fmt_g17(rho1));
    put("rho2", fmt_g17(rho2));
    put("rho3", fmt_g17(rho3));
    put("missing_rate", fmt_g17(missing_rate));
    put("widths", widths_text(widths));
    put("tau_f", fmt_g17(tau_f));
    put("lambda1", fmt_g17(lambda1));
    put("lambda2", fmt_g17(lambda2));
    put("eta", fmt_g17(eta));
    put("k", std::to_string(k));
    put("k_pos", std::to_string(k_pos));
    put("k_neg", std::to_string(k_neg));
    put("mu1", fmt_g17(mu1));
    put("mu2", fmt_g17(mu2));
    put("warm_epochs", std::to_string(warm_epochs));
    put("total_epochs", std::to_string(total_epochs));
    put("impute_start_epoch", std::to_string(impute_start_epoch));
    put("knn_switch_epoch", std::to_string(knn_switch_epoch));
    put("knn_refresh_interval", std::to_string(knn_refresh_interval));
    put("batch_size", std::to_string(batch_size));
    put("learning_rate", fmt_g17(learning_rate));
    put("bank_window", std::to_string(bank_window));
    put("rank_sign", rank_sign == RankSign::Printed ? "printed" : "triplet");
    put("seed", std::to_string(seed));
    put("loss_oa", loss_oa ? "1" : "0");
    put("loss_na", loss_na ? "1" : "0");
    put("loss_sr", loss_sr ? "1" : "0");
    put("na_use_temperature", na_use_temperature ? "1" : "0");
    put("auc_every", std::to_string(auc_every));
    put("dump_knn", dump_knn ? "1" : "0");
    return s;
}

std::uint64_t TrainConfig::config_hash() const { return fnv1a64(canonical_text()); }

TrainConfig preset_config(const std::string& name) {
    TrainConfig cfg;
    if (name == "synthetic") {
        cfg.widths = {128, 32};
        cfg.mu1 = 0.02;
        cfg.mu2 = 0.2;
    } else if (name == "bdgp") {
        cfg.widths = {1024, 64};
        cfg.mu1 = 0.01;
        cfg.mu2 = 0.2;
    } else if (name == "landuse21") {
        cfg.widths = {1024, 1024, 64};
        cfg.mu1 = 0.02;
        cfg.mu2 = 0.2;
    } else if (name == "scene15") {
        cfg.widths = {1024, 1024, 64};
        cfg.mu1 = 0.02;
        cfg.mu2 = 0.4;
    } else if (name == "fashion") {
        cfg.widths = {1024, 256};
        cfg.mu1 = 0.05;
        cfg.mu2 = 0.4;
    } else {
        throw ConfigError("unknown preset: '" + name + "'");
    }
    return cfg;
}

void apply_override(TrainConfig& cfg, const std::string& key, const std::string& value) {
    if (key == "preset") {
        const TrainConfig p = preset_config(value);
        cfg.widths = p.widths;
        cfg.mu1 = p.mu1;
        cfg.mu2 = p.mu2;
    } else if (key == "data_dir") {
        cfg.data_dir = value;
    } else if (key == "out_dir") {
        cfg.out_dir = value;
    } else if (key == "normalize") {
        cfg.normalize = parse_bool(key, value);
    } else if (key == "synth_n") {
        cfg.synth_n = parse_size(key, value);
    } else if (key == "synth_views") {
        cfg.synth_views = parse_size(key, value);
    } else if (key == "synth_clusters") {
        cfg.synth_clusters = parse_size(key, value);
    } else if (key == "synth_dim") {
        cfg.synth_dim = parse_size(key, value);
    } else if (key == "synth_noise") {
        cfg.synth_noise = parse_double(key, value);
    } else if (key == "rho1") {
        cfg.rho1 = parse_double(key, value);
    } else if (key == "rho2") {
        cfg.rho2 = parse_double(key, value);
    } else if (key == "rho3") {
        cfg.rho3 = parse_double(key, value);
    } else if (key == "missing_rate") {
        cfg.missing_rate = parse_double(key, value);
    } else if (key == "widths") {
        cfg.widths = parse_widths(value);
    } else if (key == "tau_f") {
        cfg.tau_f = parse_double(key, value);
    } else if (key == "lambda1") {
        cfg.lambda1 = parse_double(key, value);
    } else if (key == "lambda2") {
        cfg.lambda2 = parse_double(key, value);
    } else if (key == "eta") {
        cfg.eta = parse_double(key, value);
    } else if (key == "k") {
        cfg.k = parse_size(key, value);
    } else if (key == "k_pos") {
        cfg.k_pos = parse_size(key, value);
    } else if (key == "k_neg") {
        cfg.k_neg = parse_size(key, value);
    } else if (key == "mu1") {
        cfg.mu1 = parse_double(key, value);
    } else if (key == "mu2") {
        cfg.mu2 = parse_double(key, value);
    } else if (key == "warm_epochs") {
        cfg.warm_epochs = parse_size(key, value);
    } else if (key == "total_epochs") {
        cfg.total_epochs = parse_size(key, value);
    } else if (key == "impute_start_epoch") {
        cfg.impute_start_epoch = parse_size(key, value);
    } else if (key == "knn_switch_epoch") {
        cfg.knn_switch_epoch = parse_size(key, value);
    } else if (key == "knn_refresh_interval") {
        cfg.knn_refresh_interval = parse_size(key, value);
    } else if (key == "batch_size") {
        cfg.batch_size = parse_size(key, value);
    } else if (key == "learning_rate") {
        cfg.learning_rate = parse_double(key, value);
    } else if (key == "bank_window") {
        cfg.bank_window = parse_size(key, value);
    } else if (key == "rank_sign") {
        if (value == "printed")
            cfg.rank_sign = RankSign::Printed;
        else if (value == "triplet")
            cfg.rank_sign = RankSign::Triplet;
        else
            throw ConfigError("config key 'rank_sign': expected printed or triplet, got '" +
                              value + "'");
    } else if (key == "seed") {
        cfg.seed = parse_u64(key, value);
    } else if (key == "loss_oa") {
        cfg.loss_oa = parse_bool(key, value);
    } else if (key == "loss_na") {
        cfg.loss_na = parse_bool(key, value);
    } else if (key == "loss_sr") {
        cfg.loss_sr = parse_bool(key, value);
    } else if (key == "na_use_temperature") {
        cfg.na_use_temperature = parse_bool(key, value);
    } else if (key == "auc_every") {
        cfg.auc_every = parse_size(key, value);
    } else if (key == "dump_knn") {
        cfg.dump_knn = parse_bool(key, value);
    } else {
        throw ConfigError("unknown config key: '" + key + "'");
    }
}

TrainConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    TrainConfig cfg;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const std::size_t hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const std::size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError(path + ":" + std::to_string(line_no) +
                              ": expected 'key = value'");
        apply_override(cfg, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
    return cfg;
}

MultiViewDataset prepare_dataset(const TrainConfig& cfg, MultiViewDataset* truth_out) {
    if (!cfg.data_dir.empty()) {
        MultiViewDataset data = load_dataset(cfg.data_dir);
        if (cfg.normalize) normalize_min_max(data);
        return data;
    }
    SynthSpec spec;
    spec.n = cfg.synth_n;
    spec.n_views = cfg.synth_views;
    spec.clusters = cfg.synth_clusters;
    spec.dims.assign(cfg.synth_views, cfg.synth_dim);
    spec.noise = cfg.synth_noise;

    RngStream root(cfg.seed);
    RngStream synth_rng = root.fork("synth");
    MultiViewDataset data = synthesize(spec, synth_rng);
    normalize_min_max(data);
    RngStream inject_rng = root.fork("inject");
    inject_outliers(data, {cfg.rho1, cfg.rho2, cfg.rho3}, inject_rng);
    if (truth_out) *truth_out = data;
    RngStream mask_rng = root.fork("mask");
    apply_missing(data, cfg.missing_rate, mask_rng);
    return data;
}

RunResult run_experiment(const TrainConfig& cfg) {
    cfg.validate();
    MultiViewDataset truth;
    MultiViewDataset data = prepare_dataset(cfg, &truth);
    return run_experiment(cfg, data, truth.views.empty() ? nullptr : &truth);
}

namespace {

// Wall-clock accumulator per phase, reported on stderr when MVOD_PHASE_TIMERS
// is set. Costs two clock reads per phase when disabled.
struct PhaseClock {
    bool enabled = std::getenv("MVOD_PHASE_TIMERS") != nullptr;
    std::chrono::steady_clock::time_point mark = std::chrono::steady_clock::now();
    std::vector<std::pair<const char*, double>> acc;

    void tick(const char* phase) {
        const auto now = std::chrono::steady_clock::now();
        const double dt = std::chrono::duration<double>(now - mark).count();
        mark = now;
        if (!enabled) return;
        for (auto& [name, total] : acc)
            if (std::strcmp(name, phase) == 0) {
                total += dt;
                return;
            }
        acc.emplace_back(phase, dt);
    }

    void report() const {
        if (!enabled) return;
        for (const auto& [name, total] : acc)
            std::fprintf(stderr, "phase %-10s %8.2f s\n", name, total);
    }
};

} // namespace

RunResult run_experiment(const TrainConfig& cfg, const MultiViewDataset& data,
                         const MultiViewDataset* ground_truth) {
    const auto t0 = std::chrono::steady_clock::now();
    PhaseClock clock;
    cfg.validate();
    data.validate();

    const std::size_t n = data.n();
    const std::size_t n_views = data.n_views();
    const bool labels = data.has_labels();
    bool mixed = false;
    if (labels)
        for (std::size_t i = 1; i < n && !mixed; ++i)
            mixed = (data.labels[i] != kLabelInlier) != (data.labels[0] != kLabelInlier);
    // auc_score rejects single-class labels, so the curve needs both kinds.
    const bool auc_ready = labels && mixed;
    const std::size_t latent = cfg.widths.back();

    std::vector<std::vector<std::size_t>> widths_per_view(n_views);
    for (std::size_t v = 0; v < n_views; ++v) {
        widths_per_view[v].push_back(data.views[v].cols);
        widths_per_view[v].insert(widths_per_view[v].end(), cfg.widths.begin(),
                                  cfg.widths.end());
    }

    RngStream master(cfg.seed);
    RngStream init_rng = master.fork("init");
    AutoencoderStack stack = init_params(widths_per_view, init_rng);
    AdamState adam = AdamState::init(stack, cfg.learning_rate);
    LatentViews latents = LatentViews::create(n_views, n, latent);

    const std::size_t bank_per_batch = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::ceil(cfg.eta * double(cfg.batch_size))));
    MemoryBank bank(bank_per_batch * cfg.bank_window, n_views);

    const KnnSchedule sched{cfg.knn_switch_epoch, cfg.knn_refresh_interval};
    const MuSchedule mu_sched{cfg.mu1, cfg.mu2, cfg.warm_epochs, cfg.total_epochs};
    std::vector<NeighborIndex> loss_index(n_views);

    std::vector<std::vector<std::size_t>> observed_ids(n_views);
    for (std::size_t v = 0; v < n_views; ++v) observed_ids[v] = data.present_ids(v);
    const std::vector<std::size_t> complete = data.complete_ids();
    std::vector<char> complete_mask(n, 0);
    for (std::size_t i : complete) complete_mask[i] = 1;
    std::vector<std::size_t> all_ids(n);
    for (std::size_t i = 0; i < n; ++i) all_ids[i] = i;

    if (!cfg.out_dir.empty()) ensure_directory(cfg.out_dir);

    RunResult result;
    result.config_hash = cfg.config_hash();
    result.epochs.reserve(cfg.total_epochs);

    // usable[v][i]: the loss index lists i and every listed neighbor still
    // has a latent in view v this epoch.
    std::vector<std::vector<char>> usable(n_views);
    auto refresh_usable = [&]() {
        for (std::size_t v = 0; v < n_views; ++v) {
            usable[v].assign(n, 0);
            for (std::size_t i = 0; i < n; ++i) {
                if (!loss_index[v].has_list(i)) continue;
                bool ok = true;
                for (std::size_t j : loss_index[v].lists[i])
                    if (!latents.available(v, j)) {
                        ok = false;
                        break;
                    }
                usable[v][i] = ok ? 1 : 0;
            }
        }
    };

    GradientSet grads;
    ImputeStats epoch_impute{};
    const bool has_missing = complete.size() < n;

    clock.tick("setup");
    for (std::size_t e = 0; e <= cfg.total_epochs; ++e) {
        refresh_observed(latents, data, stack, observed_ids);
        clock.tick("refresh");

        epoch_impute = ImputeStats{};
        if (has_missing && (e >= cfg.impute_start_epoch || e == cfg.total_epochs)) {
            std::vector<NeighborIndex> crt_index(n_views);
            for (std::size_t v = 0; v < n_views; ++v)
                crt_index[v] = build_knn(latents.z[v], observed_ids[v], cfg.k,
                                         NeighborSpace::LatentFeatures);
            epoch_impute = impute_all(latents, crt_index, cfg.k,
                                      static_cast<std::int64_t>(e));
            clock.tick("crt");
        }

        // The running AUC for epoch e-1 uses the state after its updates and
        // the same frozen-model scoring pass that produces the final report,
        // so the curve and the headline number are one metric.
        if (e >= 1 && auc_ready && cfg.auc_every > 0) {
            EpochLog& prev = result.epochs.back();
            const bool due =
                prev.epoch % cfg.auc_every == 0 || prev.epoch + 1 == cfg.total_epochs;
            if (due && e < cfg.total_epochs) {
                prev.has_auc = true;
                prev.auc = score_dataset(cfg, data, stack).auc;
                clock.tick("auc");
            }
        }

        if (e == cfg.total_epochs) {
            result.final_impute = epoch_impute;
            break;
        }

        if (knn_rebuild_due(e, sched)) {
            const NeighborSpace space = refresh_policy(e, sched);
            for (std::size_t v = 0; v < n_views; ++v) {
                if (space == NeighborSpace::InputFeatures) {
                    loss_index[v] =
                        build_knn(data.views[v], observed_ids[v], cfg.k, space);
                } else {
                    std::vector<std::size_t> members;
                    for (std::size_t i = 0; i < n; ++i)
                        if (latents.available(v, i)) members.push_back(i);
                    loss_index[v] = build_knn(latents.z[v], members, cfg.k, space);
                }
                if (cfg.dump_knn && !cfg.out_dir.empty()) {
                    const Matrix& pts = space == NeighborSpace::InputFeatures
                                            ? data.views[v]
                                            : latents.z[v];
                    dump_neighbor_index_csv(loss_index[v], pts,
                                            cfg.out_dir + "/knn_view_" +
                                                std::to_string(v + 1) + ".csv");
                }
            }
            clock.tick("knn");
        }
        refresh_usable();

        const double mu_now = cfg.loss_sr ? mu_at(e, mu_sched) : 0.0;
        const bool impute_active = e >= cfg.impute_start_epoch;
        std::vector<std::size_t> order = impute_active ? all_ids : complete;
        RngStream shuffle_rng = master.fork("shuffle", e);
        shuffle_rng.shuffle(order);
        RngStream rank_rng = master.fork("rank", e);

        EpochLog log;
        log.epoch = e;
        log.mu = mu_now;
        log.imputed = epoch_impute.imputed;
        log.deferred = epoch_impute.deferred;
        double sum_in = 0.0, sum_out = 0.0;
        std::size_t cnt_in = 0, cnt_out = 0;

        for (std::size_t off = 0, b = 0; off < order.size(); off += cfg.batch_size, ++b) {
            const std::size_t end = std::min(off + cfg.batch_size, order.size());

            BatchSpec spec;
            spec.anchors.assign(order.begin() + off, order.begin() + end);
            spec.flags = TermFlags{true, cfg.loss_oa, cfg.loss_na, cfg.loss_sr,
                                   cfg.loss_sr};
            spec.index = &loss_index;
            spec.constants = &latents;
            spec.bank = &bank;
            spec.lambda1 = cfg.lambda1;
            spec.lambda2 = cfg.lambda2;
            spec.mu = mu_now;
            spec.tau = cfg.tau_f;
            spec.na_tau = cfg.na_use_temperature ? cfg.tau_f : 1.0;
            spec.rank_sign = cfg.rank_sign;

            if (cfg.loss_oa)
                for (std::size_t i : spec.anchors)
                    if (latents.complete(i)) spec.oa_anchors.push_back(i);
            if (cfg.loss_na)
                for (std::size_t i : spec.anchors) {
                    bool ok = true;
                    for (std::size_t v = 0; v < n_views && ok; ++v)
                        ok = usable[v][i] != 0;
                    if (ok) spec.na_anchors.push_back(i);
                }
            if (cfg.loss_sr) {
                spec.koleo_rows.resize(n_views);
                spec.rank_choices.resize(n_views);
                for (std::size_t v = 0; v < n_views; ++v) {
                    std::vector<std::size_t> rank_anchors;
                    for (std::size_t i : spec.anchors) {
                        if (!latents.available(v, i)) continue;
                        const bool fresh_imputed =
                            latents.status[v][i] == LatentStatus::Imputed &&
                            latents.first_imputed_epoch[v][i] ==
                                static_cast<std::int64_t>(e);
                        if (!fresh_imputed) spec.koleo_rows[v].push_back(i);
                        if (usable[v][i]) rank_anchors.push_back(i);
                    }
                    spec.rank_choices[v] = sample_rank_choices(
                        loss_index[v], rank_anchors, cfg.k_pos, cfg.k_neg, rank_rng);
                }
            }
            clock.tick("spec");

            const LossBreakdown lb = objective_eval(stack, data, spec, &grads);
            clock.tick("objective");
            adam_step(stack, grads, adam);
            clock.tick("adam");

            log.l_ar += lb.l_ar;
            log.l_oa += lb.l_oa;
            log.l_na += lb.l_na;
            log.l_koleo += lb.l_koleo;
            log.l_rank += lb.l_rank;
            log.total += lb.total;
            if (labels)
                for (std::size_t r = 0; r < spec.oa_anchors.size(); ++r) {
                    const double value = lb.per_instance_contrastive[r];
                    if (data.labels[spec.oa_anchors[r]] == kLabelInlier) {
                        sum_in += value;
                        ++cnt_in;
                    } else {
                        sum_out += value;
                        ++cnt_out;
                    }
                }

            if (cfg.loss_oa) {
                std::vector<std::size_t> batch_complete;
                for (std::size_t i : spec.anchors)
                    if (complete_mask[i]) batch_complete.push_back(i);
                if (!batch_complete.empty()) {
                    std::vector<Matrix> zb(n_views);
                    std::vector<const Matrix*> zb_ptr(n_views);
                    for (std::size_t v = 0; v < n_views; ++v) {
                        zb[v] = encode(stack, v, gather_rows(data.views[v], batch_complete));
                        zb_ptr[v] = &zb[v];
                    }
                    const std::vector<std::size_t> sel = select_bank_rows(zb, cfg.eta);
                    std::vector<std::size_t> sel_ids(sel.size());
                    for (std::size_t j = 0; j < sel.size(); ++j)
                        sel_ids[j] = batch_complete[sel[j]];
                    bank_push(bank, zb_ptr, sel, sel_ids, e, b);
                }
                clock.tick("bank");
            }
        }

        if (cnt_in > 0 && cnt_out > 0) {
            log.has_label_split = true;
            log.mean_contrastive_inlier = sum_in / double(cnt_in);
            log.mean_contrastive_outlier = sum_out / double(cnt_out);
        }
        log.bank_size = bank.size();
        result.epochs.push_back(log);
    }

    result.report = total_score(data, stack, latents, cfg.tau_f);
    if (result.report.auc >= 0 && !result.epochs.empty()) {
        result.epochs.back().has_auc = true;
        result.epochs.back().auc = result.report.auc;
    }

    // Imputation quality against the pre-masking data under the frozen model.
    std::vector<QualityRow> quality;
    if (ground_truth) {
        std::vector<std::vector<double>> view_mean(n_views,
                                                   std::vector<double>(latent, 0.0));
        for (std::size_t v = 0; v < n_views; ++v) {
            for (std::size_t i : observed_ids[v])
                axpy(1.0, latents.z[v].row(i), view_mean[v]);
            if (!observed_ids[v].empty())
                for (double& x : view_mean[v]) x /= double(observed_ids[v].size());
        }
        const std::vector<double> zero_vec(latent, 0.0);
        double sum_crt = 0.0, sum_zero = 0.0, sum_mean = 0.0;
        for (std::size_t v = 0; v < n_views; ++v)
            for (std::size_t i = 0; i < n; ++i) {
                if (data.present(v, i) || !ground_truth->present(v, i)) continue;
                if (latents.status[v][i] != LatentStatus::Imputed) continue;
                const Matrix true_z =
                    encode(stack, v, gather_rows(ground_truth->views[v], {i}));
                QualityRow row;
                row.instance = i;
                row.view = v;
                row.cosine = row_cosine(latents.z[v].row(i), true_z.row(0));
                row.l2 = std::sqrt(
                    squared_distance(latents.z[v].row(i), true_z.row(0)));
                quality.push_back(row);
                sum_crt += row.cosine;
                sum_zero += row_cosine(zero_vec, true_z.row(0));
                sum_mean += row_cosine(view_mean[v], true_z.row(0));
            }
        if (!quality.empty()) {
            result.has_impute_quality = true;
            const double m = double(quality.size());
            result.impute_cosine_crt = sum_crt / m;
            result.impute_cosine_zero = sum_zero / m;
            result.impute_cosine_mean = sum_mean / m;
        }
    }

    clock.tick("score");
    clock.report();
    result.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    if (!cfg.out_dir.empty()) {
        write_scores_csv(cfg.out_dir + "/scores.csv", result.report);
        write_loss_curves(cfg.out_dir + "/loss_curves.csv", result.epochs);
        if (labels) write_histogram_csv(cfg.out_dir + "/histogram.csv", result.report);
        if (!quality.empty())
            write_quality_csv(cfg.out_dir + "/imputation_quality.csv", quality);

        const std::string canonical = cfg.canonical_text();
        save_checkpoint(cfg.out_dir + "/checkpoint.bin", stack, adam, canonical,
                        result.config_hash);
        {
            FilePtr f = open_out(cfg.out_dir + "/config_resolved.txt");
            std::fwrite(canonical.data(), 1, canonical.size(), f.get());
        }

        nlohmann::json j;
        j["auc"] = result.report.auc >= 0 ? nlohmann::json(result.report.auc)
                                          : nlohmann::json();
        j["auc_attribute"] = result.report.auc_attribute >= 0
                                 ? nlohmann::json(result.report.auc_attribute)
                                 : nlohmann::json();
        j["auc_class"] = result.report.auc_class >= 0
                             ? nlohmann::json(result.report.auc_class)
                             : nlohmann::json();
        j["auc_class_attribute"] = result.report.auc_class_attribute >= 0
                                       ? nlohmann::json(result.report.auc_class_attribute)
                                       : nlohmann::json();
        j["config_hash"] = hash_hex(result.config_hash);
        j["seed"] = cfg.seed;
        j["epochs"] = cfg.total_epochs;
        j["wall_clock_seconds"] = result.wall_seconds;
        j["n_instances"] = n;
        j["n_views"] = n_views;
        j["imputed"] = result.final_impute.imputed;
        j["impute_deferred"] = result.final_impute.deferred;
        if (result.has_impute_quality) {
            j["imputation"] = {{"crt_cosine", result.impute_cosine_crt},
                               {"zero_cosine", result.impute_cosine_zero},
                               {"mean_cosine", result.impute_cosine_mean}};
        }
        std::ofstream out(cfg.out_dir + "/metrics.json");
        if (!out) throw ConfigError("cannot open for writing: " + cfg.out_dir +
                                    "/metrics.json");
        out << j.dump(2) << '\n';
    }
    return result;
}

ScoreReport score_dataset(const TrainConfig& cfg, const MultiViewDataset& data,
                          const AutoencoderStack& stack) {
    data.validate();
    const std::size_t n_views = data.n_views();
    LatentViews latents = LatentViews::create(n_views, data.n(), stack.latent_dim());
    std::vector<std::vector<std::size_t>> observed_ids(n_views);
    for (std::size_t v = 0; v < n_views; ++v) observed_ids[v] = data.present_ids(v);
    refresh_observed(latents, data, stack, observed_ids);
    if (data.complete_ids().size() < data.n()) {
        std::vector<NeighborIndex> crt_index(n_views);
        for (std::size_t v = 0; v < n_views; ++v)
            crt_index[v] = build_knn(latents.z[v], observed_ids[v], cfg.k,
                                     NeighborSpace::LatentFeatures);
        impute_all(latents, crt_index, cfg.k, 0);
    }
    return total_score(data, stack, latents, cfg.tau_f);
}

std::vector<SweepRow> sweep(const TrainConfig& base, const std::string& param,
                            const std::vector<double>& values) {
    if (values.empty()) throw ConfigError("sweep: no parameter values given");
    std::vector<double> sorted = values;
    std::sort(sorted.begin(), sorted.end());

    std::vector<SweepRow> rows;
    for (double value : sorted) {
        TrainConfig cfg = base;
        apply_override(cfg, param, fmt_g17(value));
        cfg.out_dir = base.out_dir + "/" + param + "_" + fmt_short(value);
        const RunResult r = run_experiment(cfg);
        if (!r.report.has_labels)
            throw ConfigError("sweep requires labeled data to report AUC");
        rows.push_back({value, r.report.auc});
    }

    ensure_directory(base.out_dir);
    FilePtr f = open_out(base.out_dir + "/sweep.csv");
    std::fprintf(f.get(), "param,value,auc\n");
    for (const SweepRow& r : rows)
        std::fprintf(f.get(), "%s,%.17g,%.17g\n", param.c_str(), r.value, r.auc);
    return rows;
}

} // namespace mvod
