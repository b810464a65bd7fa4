#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "mvod/checkpoint.hpp"
#include "mvod/dataset.hpp"
#include "mvod/errors.hpp"
#include "mvod/gradcheck.hpp"
#include "mvod/io.hpp"
#include "mvod/scoring.hpp"
#include "mvod/trainer.hpp"

namespace {

using namespace mvod;

void apply_sets(TrainConfig& cfg, const std::vector<std::string>& sets) {
    for (const std::string& s : sets) {
        const std::size_t eq = s.find('=');
        if (eq == std::string::npos)
            throw ConfigError("--set expects key=value, got '" + s + "'");
        apply_override(cfg, s.substr(0, eq), s.substr(eq + 1));
    }
}

TrainConfig config_from_text(const std::string& text) {
    TrainConfig cfg;
    std::size_t pos = 0;
    while (pos < text.size()) {
        std::size_t nl = text.find('\n', pos);
        if (nl == std::string::npos) nl = text.size();
        const std::string line = text.substr(pos, nl - pos);
        pos = nl + 1;
        const std::size_t eq = line.find('=');
        if (eq == std::string::npos) continue;
        std::string key = line.substr(0, eq);
        std::string value = line.substr(eq + 1);
        const auto strip = [](std::string& s) {
            while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.erase(0, 1);
            while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r'))
                s.pop_back();
        };
        strip(key);
        strip(value);
        if (!key.empty()) apply_override(cfg, key, value);
    }
    return cfg;
}

void write_provenance(const std::string& dir, const nlohmann::json& j) {
    std::ofstream out(dir + "/provenance.json");
    if (!out) throw ConfigError("cannot write " + dir + "/provenance.json");
    out << j.dump(2) << '\n';
}

void print_report(const ScoreReport& report) {
    if (!report.has_labels) {
        std::printf("scored %zu instances (no labels, AUC unavailable)\n",
                    report.rows.size());
        return;
    }
    if (report.auc < 0) {
        std::printf("scored %zu instances (single-class labels, AUC unavailable)\n",
                    report.rows.size());
        return;
    }
    std::printf("auc %.6f\n", report.auc);
    if (report.auc_attribute >= 0)
        std::printf("auc_attribute %.6f\n", report.auc_attribute);
    if (report.auc_class >= 0) std::printf("auc_class %.6f\n", report.auc_class);
    if (report.auc_class_attribute >= 0)
        std::printf("auc_class_attribute %.6f\n", report.auc_class_attribute);
}

std::vector<double> parse_values(const std::string& list) {
    std::vector<double> out;
    std::size_t pos = 0;
    while (pos <= list.size()) {
        std::size_t comma = list.find(',', pos);
        if (comma == std::string::npos) comma = list.size();
        const std::string item = list.substr(pos, comma - pos);
        if (item.empty()) throw ConfigError("--values: empty entry in '" + list + "'");
        char* end = nullptr;
        const double v = std::strtod(item.c_str(), &end);
        if (end == item.c_str() || *end != '\0')
            throw ConfigError("--values: not a number: '" + item + "'");
        out.push_back(v);
        pos = comma + 1;
    }
    return out;
}

int cmd_eval(const std::string& scores_path, const std::string& labels_path) {
    std::ifstream in(scores_path);
    if (!in) throw ConfigError("cannot open " + scores_path);
    std::string line;
    if (!std::getline(in, line)) throw ConfigError("empty scores file: " + scores_path);

    std::vector<double> scores;
    std::vector<int> labels;
    bool any_label = true;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<std::string> fields;
        std::size_t pos = 0;
        while (pos <= line.size()) {
            std::size_t comma = line.find(',', pos);
            if (comma == std::string::npos) comma = line.size();
            fields.push_back(line.substr(pos, comma - pos));
            pos = comma + 1;
        }
        if (fields.size() < 6)
            throw ConfigError(scores_path + ": expected 6 columns per row");
        char* end = nullptr;
        const double s = std::strtod(fields[3].c_str(), &end);
        if (end == fields[3].c_str())
            throw ConfigError(scores_path + ": bad score '" + fields[3] + "'");
        scores.push_back(s);
        const std::string& type = fields[5];
        if (type == "inlier")
            labels.push_back(kLabelInlier);
        else if (type == "attribute")
            labels.push_back(kLabelAttribute);
        else if (type == "class")
            labels.push_back(kLabelClass);
        else if (type == "class_attribute")
            labels.push_back(kLabelClassAttribute);
        else {
            labels.push_back(-1);
            any_label = false;
        }
    }

    if (!labels_path.empty()) {
        const Matrix m = read_csv_matrix(labels_path);
        if (m.rows != scores.size() || m.cols != 1)
            throw ConfigError(labels_path + ": expected " + std::to_string(scores.size()) +
                              " rows of one label each");
        for (std::size_t i = 0; i < m.rows; ++i) labels[i] = static_cast<int>(m.at(i, 0));
        any_label = true;
    }
    if (!any_label)
        throw ConfigError("scores carry no labels; pass --labels to supply them");

    std::vector<std::uint8_t> positive(scores.size());
    for (std::size_t i = 0; i < scores.size(); ++i)
        positive[i] = labels[i] != kLabelInlier ? 1 : 0;
    std::printf("auc %.6f\n", auc_score(scores, positive));

    for (int type : {kLabelAttribute, kLabelClass, kLabelClassAttribute}) {
        std::vector<double> sub;
        std::vector<std::uint8_t> sub_pos;
        for (std::size_t i = 0; i < scores.size(); ++i) {
            if (labels[i] != kLabelInlier && labels[i] != type) continue;
            sub.push_back(scores[i]);
            sub_pos.push_back(labels[i] == type ? 1 : 0);
        }
        bool has_pos = false;
        for (std::uint8_t p : sub_pos) has_pos |= p != 0;
        if (!has_pos) continue;
        const char* name = type == kLabelAttribute  ? "attribute"
                           : type == kLabelClass    ? "class"
                                                    : "class_attribute";
        std::printf("auc_%s %.6f\n", name, auc_score(sub, sub_pos));
    }
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Unsupervised outlier detection on partial multi-view data"};
    app.require_subcommand(1);

    // synth
    auto* synth = app.add_subcommand("synth", "Generate a clustered multi-view corpus");
    std::string synth_out;
    std::size_t synth_n = 1000, synth_views = 2, synth_clusters = 5, synth_dim = 50;
    double synth_noise = 0.05;
    std::uint64_t synth_seed = 1;
    synth->add_option("--out", synth_out, "output dataset directory")->required();
    synth->add_option("--n", synth_n, "instances");
    synth->add_option("--views", synth_views, "views");
    synth->add_option("--clusters", synth_clusters, "clusters");
    synth->add_option("--dim", synth_dim, "features per view");
    synth->add_option("--noise", synth_noise, "noise scale");
    synth->add_option("--seed", synth_seed, "rng seed");

    // inject
    auto* inject = app.add_subcommand(
        "inject", "Normalize a dataset and inject labeled outliers");
    std::string inject_in, inject_out;
    double rho1 = 0.05, rho2 = 0.05, rho3 = 0.05;
    std::uint64_t inject_seed = 1;
    inject->add_option("--in", inject_in, "input dataset directory")->required();
    inject->add_option("--out", inject_out, "output dataset directory")->required();
    inject->add_option("--rho1", rho1, "attribute outlier ratio");
    inject->add_option("--rho2", rho2, "class outlier ratio");
    inject->add_option("--rho3", rho3, "class-attribute outlier ratio");
    inject->add_option("--seed", inject_seed, "rng seed");

    // mask
    auto* mask = app.add_subcommand("mask", "Remove one view from selected instances");
    std::string mask_in, mask_out;
    double mask_rate = 0.3;
    std::uint64_t mask_seed = 1;
    mask->add_option("--in", mask_in, "input dataset directory")->required();
    mask->add_option("--out", mask_out, "output dataset directory")->required();
    mask->add_option("--rate", mask_rate, "fraction of instances losing a view");
    mask->add_option("--seed", mask_seed, "rng seed");

    // train
    auto* train = app.add_subcommand("train", "Run the full train/impute/score pipeline");
    std::string train_config;
    std::vector<std::string> train_sets;
    train->add_option("--config", train_config, "key = value config file");
    train->add_option("--set", train_sets, "override, key=value (repeatable)");

    // score
    auto* score = app.add_subcommand("score", "Score a dataset with a frozen checkpoint");
    std::string score_ckpt, score_data, score_out;
    std::vector<std::string> score_sets;
    score->add_option("--checkpoint", score_ckpt, "checkpoint file")->required();
    score->add_option("--data", score_data, "dataset directory")->required();
    score->add_option("--out", score_out, "artifact directory (optional)");
    score->add_option("--set", score_sets, "override, key=value (repeatable)");

    // eval
    auto* eval = app.add_subcommand("eval", "Recompute AUC from a scores.csv");
    std::string eval_scores, eval_labels;
    eval->add_option("--scores", eval_scores, "scores.csv path")->required();
    eval->add_option("--labels", eval_labels, "labels.csv overriding the type column");

    // sweep
    auto* sweep_cmd = app.add_subcommand("sweep", "Grid of runs over one config key");
    std::string sweep_config, sweep_param, sweep_values;
    std::vector<std::string> sweep_sets;
    sweep_cmd->add_option("--config", sweep_config, "key = value config file");
    sweep_cmd->add_option("--param", sweep_param, "config key to vary")->required();
    sweep_cmd->add_option("--values", sweep_values, "comma-separated values")->required();
    sweep_cmd->add_option("--set", sweep_sets, "override, key=value (repeatable)");

    // gradcheck
    auto* gradcheck = app.add_subcommand(
        "gradcheck", "Verify analytic gradients against central differences");
    std::size_t gc_seeds = 10;
    double gc_step = 1e-5, gc_tol = 1e-4;
    gradcheck->add_option("--seeds", gc_seeds, "number of random fixtures");
    gradcheck->add_option("--step", gc_step, "finite-difference half-width");
    gradcheck->add_option("--tol", gc_tol, "max relative error");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (synth->parsed()) {
            SynthSpec spec;
            spec.n = synth_n;
            spec.n_views = synth_views;
            spec.clusters = synth_clusters;
            spec.dims.assign(synth_views, synth_dim);
            spec.noise = synth_noise;
            RngStream root(synth_seed);
            RngStream rng = root.fork("synth");
            const MultiViewDataset data = synthesize(spec, rng);
            save_dataset(data, synth_out);
            write_provenance(synth_out, {{"command", "synth"},
                                         {"seed", synth_seed},
                                         {"n", synth_n},
                                         {"views", synth_views},
                                         {"clusters", synth_clusters},
                                         {"dim", synth_dim},
                                         {"noise", synth_noise}});
            std::printf("wrote %zu instances, %zu views to %s\n", data.n(),
                        data.n_views(), synth_out.c_str());
        } else if (inject->parsed()) {
            MultiViewDataset data = load_dataset(inject_in);
            normalize_min_max(data);
            RngStream root(inject_seed);
            RngStream rng = root.fork("inject");
            inject_outliers(data, {rho1, rho2, rho3}, rng);
            save_dataset(data, inject_out);
            write_provenance(inject_out,
                             {{"command", "inject"},
                              {"input", inject_in},
                              {"seed", inject_seed},
                              {"rho1", rho1},
                              {"rho2", rho2},
                              {"rho3", rho3},
                              {"order", "attribute,class,class_attribute"},
                              {"normalized", true}});
            std::size_t outliers = 0;
            for (int l : data.labels) outliers += l != kLabelInlier;
            std::printf("injected %zu outliers into %zu instances; wrote %s\n", outliers,
                        data.n(), inject_out.c_str());
        } else if (mask->parsed()) {
            MultiViewDataset data = load_dataset(mask_in);
            RngStream root(mask_seed);
            RngStream rng = root.fork("mask");
            apply_missing(data, mask_rate, rng);
            save_dataset(data, mask_out);
            write_provenance(mask_out, {{"command", "mask"},
                                        {"input", mask_in},
                                        {"seed", mask_seed},
                                        {"rate", mask_rate}});
            std::printf("masked %zu instances; wrote %s\n",
                        data.n() - data.complete_ids().size(), mask_out.c_str());
        } else if (train->parsed()) {
            TrainConfig cfg =
                train_config.empty() ? TrainConfig{} : load_config(train_config);
            apply_sets(cfg, train_sets);
            const RunResult result = run_experiment(cfg);
            print_report(result.report);
            std::printf("artifacts in %s (%.1f s)\n", cfg.out_dir.c_str(),
                        result.wall_seconds);
        } else if (score->parsed()) {
            const Checkpoint ck = load_checkpoint(score_ckpt);
            TrainConfig cfg = config_from_text(ck.config_text);
            apply_sets(cfg, score_sets);
            MultiViewDataset data = load_dataset(score_data);
            if (cfg.normalize) normalize_min_max(data);
            const ScoreReport report = score_dataset(cfg, data, ck.stack);
            print_report(report);
            if (!score_out.empty()) {
                ensure_directory(score_out);
                write_scores_csv(score_out + "/scores.csv", report);
                if (report.has_labels)
                    write_histogram_csv(score_out + "/histogram.csv", report);
            }
        } else if (eval->parsed()) {
            return cmd_eval(eval_scores, eval_labels);
        } else if (sweep_cmd->parsed()) {
            TrainConfig cfg =
                sweep_config.empty() ? TrainConfig{} : load_config(sweep_config);
            apply_sets(cfg, sweep_sets);
            const std::vector<SweepRow> rows =
                sweep(cfg, sweep_param, parse_values(sweep_values));
            for (const SweepRow& r : rows)
                std::printf("%s=%g auc %.6f\n", sweep_param.c_str(), r.value, r.auc);
        } else if (gradcheck->parsed()) {
            const GradCheckReport report = run_gradient_checks(gc_seeds, gc_step, gc_tol);
            for (const GradCheckCase& c : report.cases)
                std::printf("%-26s seed=%zu max_rel_err=%.3e %s\n", c.term.c_str(),
                            c.seed, c.max_rel_err, c.pass ? "PASS" : "FAIL");
            if (!report.all_pass) {
                std::fprintf(stderr, "gradient check failed\n");
                return 2;
            }
            std::printf("all gradient checks passed\n");
        }
    } catch (const NumericError& e) {
        std::fprintf(stderr, "numeric failure: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
