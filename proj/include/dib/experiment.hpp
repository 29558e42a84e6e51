#pragma once

#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "dib/data_io.hpp"
#include "dib/dib.hpp"
#include "dib/serialize.hpp"

namespace dib {

namespace fs = std::filesystem;

enum class Method { Single, AdaBoostM2, Dib };

inline const char* method_name(Method m) {
    switch (m) {
        case Method::Single: return "single";
        case Method::AdaBoostM2: return "adaboost-m2";
        case Method::Dib: return "dib";
    }
    return "?";
}

inline Method method_from_string(const std::string& s) {
    if (s == "single") return Method::Single;
    if (s == "adaboost-m2") return Method::AdaBoostM2;
    if (s == "dib") return Method::Dib;
    throw ConfigError("unknown method '" + s + "' (single | adaboost-m2 | dib)");
}

struct DatasetConfig {
    enum class Source { Synthetic, Idx } source = Source::Synthetic;

    // synthetic
    SyntheticKind kind = SyntheticKind::TwoMoons;
    Index n = 1000;
    int classes = 2;
    double noise = 0.1;
    std::uint64_t seed = 1;
    std::vector<double> fractions = {0.6, 0.2, 0.2}; // train / valid / test

    // idx
    std::string train_images, train_labels, test_images, test_labels;
    Index train_count = 0; // 0 = use everything left after valid_count
    Index valid_count = 0;
    bool center = false;   // subtract the train pool's mean pixel everywhere
};

struct ExperimentConfig {
    Method method = Method::Single;
    DatasetConfig data;
    NetworkSpec network;
    TrainConfig train;
    int rounds = 1;               // boosting rounds T (adaboost-m2 and dib)
    int dib_first_epochs = 0;     // N; 0 = take train.epochs
    int dib_later_epochs = 1;     // M
    GrowthPolicy growth;          // dib only
    int repetitions = 1;          // R
    std::uint64_t base_seed = 0;
    std::string out_dir;          // default record location; CLI --out overrides
    bool deterministic = true;
    bool save_models = true;
};

inline ExperimentConfig config_from_json(const json& j) {
    ExperimentConfig cfg;
    try {
        cfg.method = method_from_string(j.at("method").get<std::string>());
        const json& d = j.at("dataset");
        const std::string source = d.at("source").get<std::string>();
        if (source == "synthetic") {
            cfg.data.source = DatasetConfig::Source::Synthetic;
            const std::string kind = d.at("kind").get<std::string>();
            if (kind == "two-moons") cfg.data.kind = SyntheticKind::TwoMoons;
            else if (kind == "gaussian-blobs") cfg.data.kind = SyntheticKind::GaussianBlobs;
            else throw ConfigError("unknown synthetic kind '" + kind + "'");
            cfg.data.n = d.at("n").get<Index>();
            cfg.data.classes = d.value("classes", 2);
            cfg.data.noise = d.value("noise", 0.1);
            cfg.data.seed = d.value("seed", std::uint64_t(1));
            if (d.contains("fractions")) cfg.data.fractions = d.at("fractions").get<std::vector<double>>();
        } else if (source == "idx") {
            cfg.data.source = DatasetConfig::Source::Idx;
            cfg.data.train_images = d.at("train_images").get<std::string>();
            cfg.data.train_labels = d.at("train_labels").get<std::string>();
            cfg.data.test_images = d.at("test_images").get<std::string>();
            cfg.data.test_labels = d.at("test_labels").get<std::string>();
            cfg.data.train_count = d.value("train_count", Index(0));
            cfg.data.valid_count = d.at("valid_count").get<Index>();
            cfg.data.seed = d.value("seed", std::uint64_t(1));
            cfg.data.center = d.value("center", false);
        } else {
            throw ConfigError("dataset source must be 'synthetic' or 'idx'");
        }
        cfg.network = spec_from_json(j.at("network"));
        cfg.train = train_from_json(j.value("train", json::object()));
        cfg.rounds = j.value("rounds", 1);
        if (j.contains("dib")) {
            const json& dj = j.at("dib");
            cfg.dib_first_epochs = dj.value("first_round_epochs", 0);
            cfg.dib_later_epochs = dj.value("later_round_epochs", 1);
            if (dj.contains("growth")) cfg.growth = growth_from_json(dj.at("growth"));
        }
        cfg.repetitions = j.value("repetitions", 1);
        cfg.base_seed = j.value("seed", std::uint64_t(0));
        cfg.out_dir = j.value("out_dir", std::string());
        cfg.deterministic = j.value("deterministic", true);
        cfg.save_models = j.value("save_models", true);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("bad experiment config: ") + e.what());
    }
    return cfg;
}

inline json config_to_json(const ExperimentConfig& cfg) {
    json j;
    j["method"] = method_name(cfg.method);
    json d;
    if (cfg.data.source == DatasetConfig::Source::Synthetic) {
        d["source"] = "synthetic";
        d["kind"] = cfg.data.kind == SyntheticKind::TwoMoons ? "two-moons" : "gaussian-blobs";
        d["n"] = cfg.data.n;
        d["classes"] = cfg.data.classes;
        d["noise"] = cfg.data.noise;
        d["seed"] = cfg.data.seed;
        d["fractions"] = cfg.data.fractions;
    } else {
        d["source"] = "idx";
        d["train_images"] = cfg.data.train_images;
        d["train_labels"] = cfg.data.train_labels;
        d["test_images"] = cfg.data.test_images;
        d["test_labels"] = cfg.data.test_labels;
        d["train_count"] = cfg.data.train_count;
        d["valid_count"] = cfg.data.valid_count;
        d["seed"] = cfg.data.seed;
        d["center"] = cfg.data.center;
    }
    j["dataset"] = d;
    j["network"] = spec_to_json(cfg.network);
    j["train"] = train_to_json(cfg.train);
    j["rounds"] = cfg.rounds;
    if (cfg.method == Method::Dib) {
        j["dib"] = {{"first_round_epochs", cfg.dib_first_epochs},
                    {"later_round_epochs", cfg.dib_later_epochs},
                    {"growth", growth_to_json(cfg.growth)}};
    }
    j["repetitions"] = cfg.repetitions;
    j["seed"] = cfg.base_seed;
    if (!cfg.out_dir.empty()) j["out_dir"] = cfg.out_dir;
    j["deterministic"] = cfg.deterministic;
    j["save_models"] = cfg.save_models;
    return j;
}

// Full config validation before any training: spec shapes, schedule sanity,
// file existence, growth-policy simulation over all rounds.
inline void validate_config(const ExperimentConfig& cfg) {
    if (cfg.repetitions < 1) throw ConfigError("repetitions must be >= 1");
    if (cfg.rounds < 1) throw ConfigError("rounds must be >= 1");
    cfg.train.validate();
    try {
        infer_shapes(cfg.network);
    } catch (const ShapeError& e) {
        throw ConfigError(std::string("network spec invalid: ") + e.what());
    }
    if (cfg.data.source == DatasetConfig::Source::Synthetic) {
        if (cfg.data.fractions.size() != 3)
            throw ConfigError("synthetic dataset needs train/valid/test fractions");
        if (cfg.data.n < cfg.data.classes) throw ConfigError("dataset smaller than class count");
        if (class_count(cfg.network) != static_cast<Index>(cfg.data.classes))
            throw ConfigError("network outputs " + std::to_string(class_count(cfg.network)) +
                              " classes but the dataset has " + std::to_string(cfg.data.classes));
    } else {
        for (const auto& p : {cfg.data.train_images, cfg.data.train_labels, cfg.data.test_images,
                              cfg.data.test_labels})
            if (!fs::exists(p)) throw ConfigError("dataset file does not exist: " + p);
        if (cfg.data.valid_count < 1) throw ConfigError("idx dataset needs valid_count >= 1");
    }
    if (cfg.method == Method::Dib) {
        const int n_epochs = cfg.dib_first_epochs > 0 ? cfg.dib_first_epochs : cfg.train.epochs;
        if (cfg.dib_later_epochs < 1 || cfg.dib_later_epochs > n_epochs)
            throw ConfigError("dib epochs must satisfy 1 <= M <= N");
        if (cfg.growth.block.empty() && cfg.growth.max_insertions.value_or(1) != 0)
            throw ConfigError("dib growth policy needs a layer block (or max_insertions = 0)");
        try {
            if (cfg.growth.max_insertions.value_or(1) != 0)
                validate_policy(cfg.network, cfg.growth, cfg.rounds);
        } catch (const ShapeError& e) {
            throw ConfigError(std::string("growth policy invalid: ") + e.what());
        }
    }
}

struct PreparedData {
    Dataset<float> train, valid, test;
};

inline PreparedData prepare_data(const DatasetConfig& d) {
    PreparedData out;
    if (d.source == DatasetConfig::Source::Synthetic) {
        const auto all = make_synthetic<float>(d.kind, d.n, d.classes, d.noise, d.seed);
        auto parts = split(all, d.fractions, d.seed);
        out.train = std::move(parts[0]);
        out.valid = std::move(parts[1]);
        out.test = std::move(parts[2]);
    } else {
        Dataset<float> pool = load_idx<float>(d.train_images, d.train_labels);
        out.test = load_idx<float>(d.test_images, d.test_labels);
        out.valid = stratified_subsample(pool, d.valid_count, derive_seed(d.seed, RngStream::Data));
        Dataset<float> rest = remove_ids(pool, out.valid.ids);
        if (d.train_count > 0 && d.train_count < rest.size())
            out.train = stratified_subsample(rest, d.train_count,
                                             derive_seed(d.seed + 1, RngStream::Data));
        else
            out.train = std::move(rest);
        if (d.center) {
            // one scalar statistic from the train split, applied to all three
            const double mean = out.train.examples.data.template cast<double>().mean();
            const auto shift = static_cast<float>(mean);
            out.train.examples.data -= shift;
            out.valid.examples.data -= shift;
            out.test.examples.data -= shift;
        }
    }
    return out;
}

struct RoundMetrics {
    int round = 0;
    double pseudo_loss = 0.0;     // clamped
    double raw_pseudo_loss = 0.0;
    double beta = 0.0;
    int best_epoch = 0;
    int epochs = 0;
    double wall_time_s = 0.0;
};

struct MetricsRecord {
    int run = 0;
    std::uint64_t seed = 0;
    std::string method;
    std::vector<RoundMetrics> rounds;
    OverlapReport overlap;
    double test_error = 0.0;
    double total_wall_time_s = 0.0; // sum of per-round train wall times
    bool failed = false;
    std::string error;
};

inline json record_to_json(const MetricsRecord& r) {
    json j;
    j["run"] = r.run;
    j["seed"] = r.seed;
    j["method"] = r.method;
    j["rounds"] = json::array();
    for (const auto& m : r.rounds)
        j["rounds"].push_back({{"round", m.round},
                               {"pseudo_loss", m.pseudo_loss},
                               {"raw_pseudo_loss", m.raw_pseudo_loss},
                               {"beta", m.beta},
                               {"best_epoch", m.best_epoch},
                               {"epochs", m.epochs},
                               {"wall_time_s", m.wall_time_s}});
    j["jaccard"] = json::array();
    for (const auto& p : r.overlap.pairs)
        j["jaccard"].push_back({{"pair", p.round},
                                {"similarity", p.jaccard},
                                {"intersection", p.intersection},
                                {"sym_difference", p.sym_difference}});
    j["test_error"] = r.test_error;
    j["total_wall_time_s"] = r.total_wall_time_s;
    if (r.failed) j["error"] = r.error;
    return j;
}

inline MetricsRecord record_from_json(const json& j) {
    MetricsRecord r;
    r.run = j.at("run").get<int>();
    r.seed = j.at("seed").get<std::uint64_t>();
    r.method = j.at("method").get<std::string>();
    for (const auto& m : j.at("rounds"))
        r.rounds.push_back({m.at("round").get<int>(), m.at("pseudo_loss").get<double>(),
                            m.value("raw_pseudo_loss", 0.0), m.at("beta").get<double>(),
                            m.at("best_epoch").get<int>(), m.at("epochs").get<int>(),
                            m.at("wall_time_s").get<double>()});
    if (j.contains("jaccard"))
        for (const auto& p : j.at("jaccard"))
            r.overlap.pairs.push_back({p.at("pair").get<int>(), p.at("similarity").get<double>(),
                                       p.at("intersection").get<std::size_t>(),
                                       p.at("sym_difference").get<std::size_t>()});
    r.test_error = j.at("test_error").get<double>();
    r.total_wall_time_s = j.at("total_wall_time_s").get<double>();
    if (j.contains("error")) {
        r.failed = true;
        r.error = j.at("error").get<std::string>();
    }
    return r;
}

// Wall-clock fields are the one nondeterministic part of a metrics record;
// the determinism checks compare records with these keys removed.
inline void strip_wall_times(json& j) {
    if (j.is_object()) {
        j.erase("wall_time_s");
        j.erase("total_wall_time_s");
        for (auto& [k, v] : j.items()) strip_wall_times(v);
    } else if (j.is_array()) {
        for (auto& v : j) strip_wall_times(v);
    }
}

namespace detail {

// One repetition. Appends round events to the run's jsonl file as they
// complete so a killed run leaves parseable partial records.
inline MetricsRecord run_one(const ExperimentConfig& cfg, const PreparedData& data, int run,
                             const fs::path& out_dir) {
    const std::uint64_t run_seed = cfg.base_seed + static_cast<std::uint64_t>(run);
    MetricsRecord rec;
    rec.run = run;
    rec.seed = run_seed;
    rec.method = method_name(cfg.method);

    const fs::path jsonl = out_dir / (std::string("run_") + std::to_string(run) + ".jsonl");
    std::ofstream log(jsonl, std::ios::trunc);
    if (!log) throw ConfigError("cannot open " + jsonl.string() + " for write");
    auto emit = [&log](const json& j) {
        log << j.dump() << "\n";
        log.flush();
    };

    const json config_echo = config_to_json(cfg);
    emit(json{{"event", "start"},
              {"run", run},
              {"seed", run_seed},
              {"method", rec.method},
              {"config", config_echo}});

    // Rounds stream into the record, the jsonl, and a partial ensemble as
    // they complete. Consecutive-resample overlaps are computed here from
    // the callback's ids so they survive a mid-run failure too.
    Ensemble<float> partial;
    partial.classes = static_cast<int>(class_count(cfg.network));
    std::vector<std::int64_t> prev_ids;
    RoundCallback<float> on_round = [&](int t, const BoostRound<float>& br,
                                        const std::vector<std::int64_t>& ids) {
        RoundMetrics m;
        m.round = t;
        m.pseudo_loss = br.pseudo_loss;
        m.raw_pseudo_loss = br.raw_pseudo_loss;
        m.beta = br.beta;
        m.best_epoch = br.train_report.best_epoch;
        m.epochs = static_cast<int>(br.train_report.val_errors.size());
        m.wall_time_s = br.train_report.wall_time_s;
        rec.rounds.push_back(m);
        partial.rounds.push_back(br);
        emit(json{{"event", "round"},
                  {"run", run},
                  {"round", t},
                  {"pseudo_loss", m.pseudo_loss},
                  {"raw_pseudo_loss", m.raw_pseudo_loss},
                  {"beta", m.beta},
                  {"best_epoch", m.best_epoch},
                  {"epochs", m.epochs},
                  {"wall_time_s", m.wall_time_s}});
        if (t > 0) {
            const JaccardStats js = jaccard_ids(prev_ids, ids);
            rec.overlap.pairs.push_back({t - 1, js.similarity, js.intersection, js.sym_difference});
            emit(json{{"event", "jaccard"},
                      {"run", run},
                      {"pair", t - 1},
                      {"similarity", js.similarity},
                      {"intersection", js.intersection},
                      {"sym_difference", js.sym_difference}});
        }
        prev_ids = ids;
    };

    Ensemble<float> ens;
    try {
        if (cfg.method == Method::Single) {
            Network<float> net =
                build_network<float>(cfg.network, derive_seed(run_seed, RngStream::Init));
            TrainConfig tc = cfg.train;
            tc.seed = run_seed;
            auto [trained, report] = train(net, data.train, data.valid, tc);
            BoostRound<float> br;
            br.member = std::move(trained);
            br.train_report = report;
            // degenerate one-member vote; alpha fixed so predict == member argmax
            br.pseudo_loss = br.raw_pseudo_loss = 0.0;
            br.beta = std::exp(-1.0);
            br.alpha = std::exp(1.0);
            br.resample_seed = run_seed;
            ens.classes = static_cast<int>(class_count(cfg.network));
            ens.rounds.push_back(std::move(br));
            RoundMetrics m;
            m.round = 0;
            m.best_epoch = report.best_epoch;
            m.epochs = static_cast<int>(report.val_errors.size());
            m.wall_time_s = report.wall_time_s;
            rec.rounds.push_back(m);
            emit(json{{"event", "round"},
                      {"run", run},
                      {"round", 0},
                      {"best_epoch", m.best_epoch},
                      {"epochs", m.epochs},
                      {"wall_time_s", m.wall_time_s}});
        } else if (cfg.method == Method::AdaBoostM2) {
            ens = run_adaboost_m2(data.train, data.valid, cfg.network, cfg.train, cfg.rounds,
                                  run_seed, &on_round);
        } else {
            DibConfig dc;
            dc.rounds = cfg.rounds;
            dc.first_round_epochs =
                cfg.dib_first_epochs > 0 ? cfg.dib_first_epochs : cfg.train.epochs;
            dc.later_round_epochs = cfg.dib_later_epochs;
            dc.growth = cfg.growth;
            dc.train = cfg.train;
            dc.base_seed = run_seed;
            auto [e, overlap] = run_dib(data.train, data.valid, cfg.network, dc, &on_round);
            ens = std::move(e);
        }
    } catch (const std::exception& e) {
        // keep what finished: round and jaccard events are already on disk,
        // and the completed members are saved as a partial model
        rec.failed = true;
        rec.error = e.what();
        emit(json{{"event", "failed"}, {"run", run}, {"error", rec.error}});
        if (!partial.rounds.empty() && cfg.save_models)
            save_ensemble(partial,
                          (out_dir / (std::string("run_") + std::to_string(run) + ".partial.model"))
                              .string(),
                          config_echo.dump());
        return rec;
    }

    rec.test_error = ensemble_error(ens, data.test);
    for (const auto& m : rec.rounds) rec.total_wall_time_s += m.wall_time_s;

    if (cfg.save_models)
        save_ensemble(ens, (out_dir / (std::string("run_") + std::to_string(run) + ".model")).string(),
                      config_echo.dump());

    json final = record_to_json(rec);
    final["event"] = "final";
    emit(final);
    return rec;
}

} // namespace detail

// R repetitions; run r seeds everything with base_seed + r so method
// comparisons pair per run index. Repetitions may fan out over worker
// threads; each run writes its own files.
inline std::vector<MetricsRecord> run_experiment(const ExperimentConfig& cfg,
                                                 const std::string& out_dir, int workers = 1,
                                                 bool echo_progress = false) {
    validate_config(cfg);
    fs::create_directories(out_dir);
    const PreparedData data = prepare_data(cfg.data);

    std::vector<MetricsRecord> records(static_cast<std::size_t>(cfg.repetitions));
    std::atomic<int> next{0};
    std::mutex io_mutex;
    std::vector<std::string> failures;

    auto worker = [&]() {
        for (int r = next.fetch_add(1); r < cfg.repetitions; r = next.fetch_add(1)) {
            MetricsRecord rec = detail::run_one(cfg, data, r, out_dir);
            std::lock_guard<std::mutex> lock(io_mutex);
            if (rec.failed) failures.push_back("run " + std::to_string(r) + ": " + rec.error);
            if (echo_progress)
                std::fprintf(stderr, "run %d/%d (%s): test error %.4f, %.1fs\n", r + 1,
                             cfg.repetitions, rec.method.c_str(), rec.test_error,
                             rec.total_wall_time_s);
            records[static_cast<std::size_t>(r)] = std::move(rec);
        }
    };

    const int n_workers = std::max(1, std::min(workers, cfg.repetitions));
    if (n_workers == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        pool.reserve(static_cast<std::size_t>(n_workers));
        for (int i = 0; i < n_workers; ++i) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }

    if (!failures.empty())
        throw std::runtime_error("experiment finished with failed runs: " + failures.front());
    return records;
}

// ---- Summaries over a records directory ----

struct MethodSummary {
    std::string method;
    int runs = 0;
    double mean_test_error = 0.0;
    double std_test_error = 0.0; // population std so a single record reads 0
    double mean_total_wall_time_s = 0.0;
    double mean_final_best_epoch = 0.0;
};

inline std::vector<MetricsRecord> load_records(const std::string& dir) {
    std::vector<fs::path> files;
    if (!fs::is_directory(dir)) throw ValueError("records directory does not exist: " + dir);
    for (const auto& entry : fs::directory_iterator(dir))
        if (entry.path().extension() == ".jsonl") files.push_back(entry.path());
    std::sort(files.begin(), files.end());
    std::vector<MetricsRecord> records;
    for (const auto& f : files) {
        std::ifstream in(f);
        std::string line;
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            json j = json::parse(line, nullptr, false);
            if (j.is_discarded()) continue;
            if (j.value("event", "") == "final") records.push_back(record_from_json(j));
        }
    }
    return records;
}

inline std::vector<MethodSummary> summarize(const std::vector<MetricsRecord>& records) {
    if (records.empty()) throw ValueError("no completed records to summarize");
    std::vector<MethodSummary> out;
    for (const char* name : {"single", "adaboost-m2", "dib"}) {
        std::vector<const MetricsRecord*> rs;
        for (const auto& r : records)
            if (r.method == name && !r.failed) rs.push_back(&r);
        if (rs.empty()) continue;
        MethodSummary s;
        s.method = name;
        s.runs = static_cast<int>(rs.size());
        double sum = 0.0, sum_sq = 0.0, time_sum = 0.0, epoch_sum = 0.0;
        for (const auto* r : rs) {
            sum += r->test_error;
            sum_sq += r->test_error * r->test_error;
            time_sum += r->total_wall_time_s;
            epoch_sum += r->rounds.empty() ? 0.0 : r->rounds.back().best_epoch;
        }
        const double n = static_cast<double>(rs.size());
        s.mean_test_error = sum / n;
        s.std_test_error = std::sqrt(std::max(0.0, sum_sq / n - s.mean_test_error * s.mean_test_error));
        s.mean_total_wall_time_s = time_sum / n;
        s.mean_final_best_epoch = epoch_sum / n;
        out.push_back(s);
    }
    if (out.empty()) throw ValueError("no completed records to summarize");
    return out;
}

inline std::vector<MethodSummary> summarize_dir(const std::string& dir) {
    return summarize(load_records(dir));
}

inline std::string summary_csv(const std::vector<MethodSummary>& rows) {
    std::ostringstream os;
    os.precision(17);
    os << "method,runs,mean_test_error,std_test_error,mean_total_wall_time_s,mean_final_best_epoch\n";
    for (const auto& s : rows)
        os << s.method << ',' << s.runs << ',' << s.mean_test_error << ',' << s.std_test_error
           << ',' << s.mean_total_wall_time_s << ',' << s.mean_final_best_epoch << '\n';
    return os.str();
}

inline std::string summary_table(const std::vector<MethodSummary>& rows) {
    std::ostringstream os;
    char buf[160];
    std::snprintf(buf, sizeof(buf), "%-14s %5s %18s %12s %14s %12s\n", "method", "runs",
                  "mean test error", "std", "mean time (s)", "best epoch");
    os << buf;
    for (const auto& s : rows) {
        std::snprintf(buf, sizeof(buf), "%-14s %5d %17.4f%% %12.4f %14.2f %12.2f\n",
                      s.method.c_str(), s.runs, 100.0 * s.mean_test_error, s.std_test_error,
                      s.mean_total_wall_time_s, s.mean_final_best_epoch);
        os << buf;
    }
    return os.str();
}

} // namespace dib
