// Experiment harness CLI: config-driven single / adaboost-m2 / dib runs,
// summary tables over a records directory, config dry-run validation, and
// classification of IDX files with a saved ensemble.

#include <cstdlib>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "dib/experiment.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitValidation = 1;
constexpr int kExitRuntime = 2;

dib::ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw dib::ConfigError("cannot open config file " + path);
    dib::json j;
    try {
        in >> j;
    } catch (const dib::json::exception& e) {
        throw dib::ConfigError("config is not valid JSON: " + std::string(e.what()));
    }
    return dib::config_from_json(j);
}

std::string default_out_dir() {
    const char* env = std::getenv("DIB_OUT_DIR");
    return env ? env : "./runs";
}

int cmd_run(const std::string& config_path, std::string out_dir, int workers,
            bool force_deterministic) {
    dib::ExperimentConfig cfg;
    try {
        cfg = load_config(config_path);
        if (force_deterministic) cfg.deterministic = true;
        dib::validate_config(cfg);
    } catch (const std::exception& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitValidation;
    }
    if (out_dir.empty()) out_dir = cfg.out_dir.empty() ? default_out_dir() : cfg.out_dir;
    const auto records = dib::run_experiment(cfg, out_dir, workers, /*echo_progress=*/true);
    const auto rows = dib::summarize(records);
    std::cout << dib::summary_table(rows);
    std::cout << "records written to " << out_dir << "\n";
    return kExitOk;
}

int cmd_summarize(const std::string& in_dir, const std::string& csv_path) {
    const auto rows = dib::summarize_dir(in_dir);
    std::cout << dib::summary_table(rows);
    if (!csv_path.empty()) {
        std::ofstream csv(csv_path);
        if (!csv) throw std::runtime_error("cannot open " + csv_path + " for write");
        csv << dib::summary_csv(rows);
        std::cout << "csv written to " << csv_path << "\n";
    }
    return kExitOk;
}

int cmd_validate(const std::string& config_path) {
    try {
        const auto cfg = load_config(config_path);
        dib::validate_config(cfg);
    } catch (const std::exception& e) {
        std::cerr << "invalid: " << e.what() << "\n";
        return kExitValidation;
    }
    std::cout << "config ok\n";
    return kExitOk;
}

int cmd_predict(const std::string& model_path, const std::string& images,
                const std::string& labels, const std::string& out_path) {
    const auto loaded = dib::load_ensemble<float>(model_path);
    const auto data = dib::load_idx<float>(images, labels);
    if (data.classes > loaded.ensemble.classes)
        throw dib::ValueError("label file implies " + std::to_string(data.classes) +
                              " classes but the model has " +
                              std::to_string(loaded.ensemble.classes));
    const auto pred = dib::ensemble_predict(loaded.ensemble, data);
    dib::Index wrong = 0;
    for (std::size_t i = 0; i < pred.size(); ++i)
        if (pred[i] != data.labels[i]) ++wrong;
    std::cout << "examples: " << data.size() << "\n"
              << "misclassification rate: "
              << static_cast<double>(wrong) / static_cast<double>(data.size()) << "\n";
    if (!out_path.empty()) {
        std::ofstream out(out_path);
        out << "id,label,prediction\n";
        for (std::size_t i = 0; i < pred.size(); ++i)
            out << data.ids[i] << ',' << data.labels[i] << ',' << pred[i] << '\n';
        std::cout << "predictions written to " << out_path << "\n";
    }
    return kExitOk;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Deep Incremental Boosting experiment harness"};
    app.require_subcommand(1);

    std::string config_path, out_dir, in_dir, csv_path, model_path, images, labels, pred_out;
    int workers = 1;
    bool deterministic = false;

    auto* run = app.add_subcommand("run", "run an experiment config");
    run->add_option("--config", config_path, "experiment config (json)")->required();
    run->add_option("--out", out_dir, "output directory (default $DIB_OUT_DIR or ./runs)");
    run->add_option("--workers", workers, "parallel repetitions");
    run->add_flag("--deterministic", deterministic, "force the deterministic flag on");

    auto* summ = app.add_subcommand("summarize", "aggregate a records directory");
    summ->add_option("--in", in_dir, "records directory")->required();
    summ->add_option("--csv", csv_path, "also write a csv summary");

    auto* val = app.add_subcommand("validate", "validate a config without training");
    val->add_option("--config", config_path, "experiment config (json)")->required();

    auto* pred = app.add_subcommand("predict", "classify an IDX pair with a saved model");
    pred->add_option("--model", model_path, "saved ensemble")->required();
    pred->add_option("--images", images, "IDX images file")->required();
    pred->add_option("--labels", labels, "IDX labels file")->required();
    pred->add_option("--out", pred_out, "write per-example predictions (csv)");

    CLI11_PARSE(app, argc, argv);

    try {
        if (run->parsed()) return cmd_run(config_path, out_dir, workers, deterministic);
        if (summ->parsed()) return cmd_summarize(in_dir, csv_path);
        if (val->parsed()) return cmd_validate(config_path);
        if (pred->parsed()) return cmd_predict(model_path, images, labels, pred_out);
    } catch (const dib::ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitValidation;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitRuntime;
    }
    return kExitOk;
}
