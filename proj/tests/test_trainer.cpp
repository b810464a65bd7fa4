#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "mvod/checkpoint.hpp"
#include "mvod/errors.hpp"
#include "mvod/trainer.hpp"

using namespace mvod;

namespace {

struct TempTree {
    std::filesystem::path path;
    explicit TempTree(const char* name)
        : path(std::filesystem::temp_directory_path() / name) {
        std::filesystem::remove_all(path);
        std::filesystem::create_directories(path);
    }
    ~TempTree() { std::filesystem::remove_all(path); }
    std::string sub(const char* leaf) const { return (path / leaf).string(); }
};

// Small enough to train in well under a second while still exercising every
// phase: injection, masking, the knn switch, imputation, and the bank.
TrainConfig tiny_config(const std::string& out) {
    TrainConfig cfg;
    cfg.out_dir = out;
    cfg.synth_n = 48;
    cfg.synth_views = 2;
    cfg.synth_clusters = 3;
    cfg.synth_dim = 6;
    cfg.synth_noise = 0.05;
    cfg.rho1 = cfg.rho2 = cfg.rho3 = 0.1;
    cfg.missing_rate = 0.2;
    cfg.widths = {8, 4};
    cfg.k = 3;
    cfg.k_pos = 2;
    cfg.k_neg = 2;
    cfg.warm_epochs = 4;
    cfg.total_epochs = 8;
    cfg.impute_start_epoch = 3;
    cfg.knn_switch_epoch = 3;
    cfg.knn_refresh_interval = 2;
    cfg.batch_size = 16;
    cfg.bank_window = 4;
    cfg.auc_every = 2;
    cfg.seed = 5;
    return cfg;
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

} // namespace

TEST_CASE("config validation rejects out-of-range fields") {
    TrainConfig cfg;
    cfg.validate();

    auto broken = [](auto&& tweak) {
        TrainConfig c;
        tweak(c);
        CHECK_THROWS_AS(c.validate(), ConfigError);
    };
    broken([](TrainConfig& c) { c.widths.clear(); });
    broken([](TrainConfig& c) { c.widths = {16, 0}; });
    broken([](TrainConfig& c) { c.eta = 0.0; });
    broken([](TrainConfig& c) { c.eta = 1.0; });
    broken([](TrainConfig& c) { c.k_pos = c.k + 1; });
    broken([](TrainConfig& c) { c.k_neg = 0; });
    broken([](TrainConfig& c) { c.mu2 = c.mu1 / 2.0; });
    broken([](TrainConfig& c) { c.warm_epochs = c.total_epochs + 1; });
    broken([](TrainConfig& c) { c.impute_start_epoch = c.total_epochs + 1; });
    broken([](TrainConfig& c) { c.knn_refresh_interval = 0; });
    broken([](TrainConfig& c) { c.tau_f = 0.0; });
    broken([](TrainConfig& c) { c.rho1 = 0.5; c.rho2 = 0.5; });
    broken([](TrainConfig& c) { c.missing_rate = 1.0; });
    broken([](TrainConfig& c) { c.learning_rate = 0.0; });
    broken([](TrainConfig& c) { c.synth_clusters = 1; });

    // Dataset-generation limits do not apply when data comes from disk.
    TrainConfig from_disk;
    from_disk.data_dir = "somewhere";
    from_disk.rho1 = 0.9;
    from_disk.rho2 = 0.9;
    from_disk.validate();
}

TEST_CASE("overrides parse values and reject unknown keys") {
    TrainConfig cfg;
    apply_override(cfg, "widths", "256,64,16");
    CHECK(cfg.widths == std::vector<std::size_t>({256, 64, 16}));
    apply_override(cfg, "rank_sign", "triplet");
    CHECK(cfg.rank_sign == RankSign::Triplet);
    apply_override(cfg, "rank_sign", "printed");
    CHECK(cfg.rank_sign == RankSign::Printed);
    apply_override(cfg, "normalize", "off");
    CHECK_FALSE(cfg.normalize);
    apply_override(cfg, "normalize", "true");
    CHECK(cfg.normalize);
    apply_override(cfg, "learning_rate", "5e-4");
    CHECK(cfg.learning_rate == 5e-4);
    apply_override(cfg, "seed", "12345");
    CHECK(cfg.seed == 12345);

    CHECK_THROWS_AS(apply_override(cfg, "no_such_key", "1"), ConfigError);
    CHECK_THROWS_AS(apply_override(cfg, "synth_n", "many"), ConfigError);
    CHECK_THROWS_AS(apply_override(cfg, "seed", "-3"), ConfigError);
    CHECK_THROWS_AS(apply_override(cfg, "normalize", "maybe"), ConfigError);
    CHECK_THROWS_AS(apply_override(cfg, "rank_sign", "sideways"), ConfigError);
    CHECK_THROWS_AS(apply_override(cfg, "widths", "16,,8"), ConfigError);
}

TEST_CASE("presets pin the published widths and spreading ramps") {
    const TrainConfig synthetic = preset_config("synthetic");
    CHECK(synthetic.widths == std::vector<std::size_t>({128, 32}));
    CHECK(synthetic.mu1 == 0.02);
    CHECK(synthetic.mu2 == 0.2);

    const TrainConfig bdgp = preset_config("bdgp");
    CHECK(bdgp.widths == std::vector<std::size_t>({1024, 64}));
    CHECK(bdgp.mu1 == 0.01);
    CHECK(bdgp.mu2 == 0.2);

    const TrainConfig landuse = preset_config("landuse21");
    CHECK(landuse.widths == std::vector<std::size_t>({1024, 1024, 64}));
    CHECK(landuse.mu1 == 0.02);
    CHECK(landuse.mu2 == 0.2);

    const TrainConfig scene = preset_config("scene15");
    CHECK(scene.widths == std::vector<std::size_t>({1024, 1024, 64}));
    CHECK(scene.mu2 == 0.4);

    const TrainConfig fashion = preset_config("fashion");
    CHECK(fashion.widths == std::vector<std::size_t>({1024, 256}));
    CHECK(fashion.mu1 == 0.05);
    CHECK(fashion.mu2 == 0.4);

    CHECK_THROWS_AS(preset_config("mnist"), ConfigError);

    // The preset key only touches the dataset-dependent fields.
    TrainConfig cfg;
    cfg.seed = 77;
    cfg.batch_size = 99;
    apply_override(cfg, "preset", "fashion");
    CHECK(cfg.widths == fashion.widths);
    CHECK(cfg.mu1 == 0.05);
    CHECK(cfg.seed == 77);
    CHECK(cfg.batch_size == 99);
}

TEST_CASE("canonical text re-parses to an identical configuration") {
    TrainConfig cfg = tiny_config("whatever");
    cfg.rank_sign = RankSign::Triplet;
    cfg.na_use_temperature = true;
    cfg.learning_rate = 2.5e-4;

    TempTree dir("mvod_test_cfg");
    const std::string path = dir.sub("resolved.cfg");
    {
        std::ofstream out(path);
        out << cfg.canonical_text();
    }
    const TrainConfig back = load_config(path);
    CHECK(back.canonical_text() == cfg.canonical_text());
    CHECK(back.config_hash() == cfg.config_hash());

    TrainConfig other = cfg;
    other.seed += 1;
    CHECK(other.config_hash() != cfg.config_hash());
}

TEST_CASE("config files tolerate comments and catch malformed lines") {
    TempTree dir("mvod_test_cfgfile");
    const std::string path = dir.sub("a.cfg");
    {
        std::ofstream out(path);
        out << "# a comment line\n";
        out << "\n";
        out << "  batch_size = 32   # trailing comment\n";
        out << "preset = bdgp\n";
        out << "mu1 = 0.5\n";
    }
    const TrainConfig cfg = load_config(path);
    CHECK(cfg.batch_size == 32);
    CHECK(cfg.widths == std::vector<std::size_t>({1024, 64}));
    CHECK(cfg.mu1 == 0.5); // later line wins over the preset

    {
        std::ofstream out(path);
        out << "batch_size\n";
    }
    CHECK_THROWS_AS(load_config(path), ConfigError);
    CHECK_THROWS_AS(load_config(dir.sub("missing.cfg")), ConfigError);
}

TEST_CASE("a run is deterministic and writes coherent artifacts") {
    TempTree dir("mvod_test_run");
    TrainConfig cfg = tiny_config(dir.sub("a"));
    const RunResult result = run_experiment(cfg);

    REQUIRE(result.epochs.size() == cfg.total_epochs);
    CHECK(result.report.rows.size() == cfg.synth_n);
    CHECK(result.report.has_labels);
    CHECK(result.report.auc >= 0.0);
    CHECK(result.report.auc <= 1.0);
    CHECK(result.config_hash == cfg.config_hash());
    CHECK(result.has_impute_quality);
    CHECK(std::abs(result.impute_cosine_crt) <= 1.0);

    // Per-epoch totals recompose from the parts and the logged weight.
    for (const EpochLog& e : result.epochs) {
        const double recomposed = e.l_ar + cfg.lambda1 * e.l_oa + cfg.lambda2 * e.l_na +
                                  e.mu * (e.l_koleo + e.l_rank);
        CHECK(e.total == doctest::Approx(recomposed).epsilon(1e-9));
    }

    // Running AUC lands on the sampled epochs and the last epoch's value is
    // the reported one.
    for (const EpochLog& e : result.epochs) {
        const bool sampled =
            e.epoch % cfg.auc_every == 0 || e.epoch + 1 == cfg.total_epochs;
        CHECK(e.has_auc == sampled);
    }
    CHECK(result.epochs.back().auc == result.report.auc);

    for (const char* name : {"scores.csv", "loss_curves.csv", "histogram.csv",
                             "metrics.json", "checkpoint.bin", "config_resolved.txt",
                             "imputation_quality.csv"})
        CHECK(std::filesystem::exists(dir.path / "a" / name));

    const auto metrics = nlohmann::json::parse(slurp(dir.sub("a") + "/metrics.json"));
    CHECK(metrics["auc"].get<double>() == doctest::Approx(result.report.auc));
    CHECK(metrics["n_instances"].get<std::size_t>() == cfg.synth_n);
    CHECK(metrics["seed"].get<std::uint64_t>() == cfg.seed);
    CHECK(metrics["imputation"]["crt_cosine"].get<double>() ==
          doctest::Approx(result.impute_cosine_crt));

    // Same seed, fresh output directory: identical scores byte for byte.
    TrainConfig rerun = cfg;
    rerun.out_dir = dir.sub("b");
    const RunResult second = run_experiment(rerun);
    CHECK(second.report.auc == result.report.auc);
    CHECK(slurp(dir.sub("a") + "/scores.csv") == slurp(dir.sub("b") + "/scores.csv"));
}

TEST_CASE("ablation flags silence their loss terms") {
    TempTree dir("mvod_test_ablate");
    TrainConfig cfg = tiny_config(dir.sub("oa"));
    cfg.total_epochs = 4;
    cfg.warm_epochs = 2;
    cfg.auc_every = 0;

    cfg.loss_oa = false;
    const RunResult no_oa = run_experiment(cfg);
    for (const EpochLog& e : no_oa.epochs) {
        CHECK(e.l_oa == 0.0);
        CHECK(e.bank_size == 0);
    }

    cfg.loss_oa = true;
    cfg.loss_na = false;
    cfg.out_dir = dir.sub("na");
    const RunResult no_na = run_experiment(cfg);
    for (const EpochLog& e : no_na.epochs) CHECK(e.l_na == 0.0);

    cfg.loss_na = true;
    cfg.loss_sr = false;
    cfg.out_dir = dir.sub("sr");
    const RunResult no_sr = run_experiment(cfg);
    for (const EpochLog& e : no_sr.epochs) {
        CHECK(e.l_koleo == 0.0);
        CHECK(e.l_rank == 0.0);
        CHECK(e.mu == 0.0);
    }
}

TEST_CASE("a checkpoint reproduces the reported scores exactly") {
    TempTree dir("mvod_test_ckpt");
    TrainConfig cfg = tiny_config(dir.sub("run"));
    const RunResult result = run_experiment(cfg);

    const Checkpoint ckpt = load_checkpoint(dir.sub("run") + "/checkpoint.bin");
    CHECK(ckpt.config_hash == result.config_hash);
    CHECK(ckpt.config_text == cfg.canonical_text());

    const MultiViewDataset masked = prepare_dataset(cfg, nullptr);
    const ScoreReport again = score_dataset(cfg, masked, ckpt.stack);
    REQUIRE(again.rows.size() == result.report.rows.size());
    CHECK(again.auc == result.report.auc);
    for (std::size_t i : {std::size_t(0), std::size_t(7), std::size_t(33)}) {
        CHECK(again.rows[i].s_r == result.report.rows[i].s_r);
        CHECK(again.rows[i].s_c == result.report.rows[i].s_c);
        CHECK(again.rows[i].s == result.report.rows[i].s);
    }
}

TEST_CASE("sweep orders its rows and writes per-value artifacts") {
    TempTree dir("mvod_test_sweep");
    TrainConfig base = tiny_config(dir.sub("sweep"));
    base.total_epochs = 4;
    base.warm_epochs = 2;
    base.auc_every = 0;

    const auto rows = sweep(base, "tau_f", {0.5, 0.1});
    REQUIRE(rows.size() == 2);
    CHECK(rows[0].value == 0.1);
    CHECK(rows[1].value == 0.5);
    for (const SweepRow& r : rows) {
        CHECK(r.auc >= 0.0);
        CHECK(r.auc <= 1.0);
    }
    CHECK(std::filesystem::exists(dir.path / "sweep" / "sweep.csv"));
    CHECK(std::filesystem::exists(dir.path / "sweep" / "tau_f_0.1" / "scores.csv"));
    CHECK(std::filesystem::exists(dir.path / "sweep" / "tau_f_0.5" / "metrics.json"));

    const std::string csv = slurp(dir.sub("sweep") + "/sweep.csv");
    CHECK(csv.rfind("param,value,auc\n", 0) == 0);

    CHECK_THROWS_AS(sweep(base, "tau_f", {}), ConfigError);
}
