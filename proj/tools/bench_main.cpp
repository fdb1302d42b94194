// Command-line front end: run benchmark suites, generate synthetic data, inspect snapshots.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "edgecast/bench.hpp"
#include "edgecast/data.hpp"
#include "edgecast/error.hpp"
#include "edgecast/metrics.hpp"

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitPartial = 4;

struct RunArgs {
    std::string protocol;
    std::vector<std::string> models{"ht"};
    std::vector<std::size_t> window_sizes{6, 9, 12, 20, 32, 64};
    std::size_t seeds = 20;
    std::uint64_t suite_seed = 42;
    std::string train, test, data;
    double train_fraction = 0.8;
    std::int64_t synth_minutes = 0;
    std::uint64_t synth_seed = 0;
    bool pretrain = false;
    std::size_t refit_interval = 0;
    std::string out;
    std::string format = "json";
    int workers = 1;
    std::string snapshot_dir;
};

struct SynthArgs {
    std::int64_t minutes = 0;
    std::uint64_t seed = 0;
    std::string out;
    std::int64_t workload_minutes = 60;
    std::int64_t pause_seconds = 60;
    double noise_std = 2.0;
};

std::pair<edgecast::TimeSeries, edgecast::TimeSeries> load_data(const RunArgs& a) {
    using namespace edgecast;
    const int sources = static_cast<int>(!a.train.empty() || !a.test.empty()) + static_cast<int>(!a.data.empty()) +
                        static_cast<int>(a.synth_minutes > 0);
    if (sources != 1) {
        throw ConfigError("give exactly one data source: --train/--test, --data or --synth-minutes");
    }
    if (!a.train.empty() || !a.test.empty()) {
        if (a.train.empty() || a.test.empty()) {
            throw ConfigError("--train and --test go together");
        }
        return {resample_1min(read_csv_file(a.train)), resample_1min(read_csv_file(a.test))};
    }
    TimeSeries all;
    if (!a.data.empty()) {
        all = resample_1min(read_csv_file(a.data));
    } else {
        SynthConfig cfg;
        cfg.seed = a.synth_seed;
        cfg.total_minutes = a.synth_minutes;
        all = generate_synthetic_workload(cfg);
    }
    if (!(a.train_fraction > 0.0 && a.train_fraction < 1.0)) {
        throw ConfigError("--train-fraction must lie in (0, 1)");
    }
    const auto cut = static_cast<std::size_t>(static_cast<double>(all.size()) * a.train_fraction + 1e-9);
    TimeSeries train, test;
    train.points.assign(all.points.begin(), all.points.begin() + static_cast<std::ptrdiff_t>(cut));
    test.points.assign(all.points.begin() + static_cast<std::ptrdiff_t>(cut), all.points.end());
    return {train, test};
}

int run_command(const RunArgs& a) {
    using namespace edgecast;
    SuiteConfig cfg;
    ReportFormat format{};
    try {
        cfg.protocol = parse_protocol(a.protocol);
        cfg.models = a.models;
        cfg.window_sizes = a.window_sizes;
        cfg.seeds = a.seeds;
        cfg.suite_seed = a.suite_seed;
        cfg.pretrain = a.pretrain;
        if (a.refit_interval > 0) {
            cfg.refit_interval = a.refit_interval;
        }
        cfg.workers = a.workers;
        if (!a.snapshot_dir.empty()) {
            cfg.snapshot_dir = a.snapshot_dir;
            std::filesystem::create_directories(*cfg.snapshot_dir);
        }
        if (a.format != "json" && a.format != "csv") {
            throw ConfigError("--format must be json or csv");
        }
        format = a.format == "json" ? ReportFormat::Json : ReportFormat::Csv;
        for (const auto& m : cfg.models) {
            make_regressor(m, 1, 0);
            if (cfg.protocol == Protocol::Prequential && is_batch_model(m) && !cfg.refit_interval) {
                throw ConfigError(m + " needs --refit-interval under the prequential protocol");
            }
        }
        for (auto L : cfg.window_sizes) {
            if (L == 0) {
                throw ConfigError("window sizes must be positive");
            }
        }
        if (cfg.seeds == 0 || cfg.workers < 1) {
            throw ConfigError("--seeds and --workers must be positive");
        }
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kExitConfig;
    }

    SuiteOutput result;
    try {
        const auto [train, test] = load_data(a);
        result = run_suite(cfg, train, test);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const Error& e) {
        std::cerr << "data error: " << e.what() << '\n';
        return kExitData;
    }

    try {
        write_report(result.summary, result.timings, format, a.out);
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitData;
    }
    const std::size_t failures = result.summary.failure_count();
    if (failures > 0) {
        std::cerr << failures << " cell run(s) failed; see the report\n";
        return kExitPartial;
    }
    return 0;
}

int synth_command(const SynthArgs& a) {
    using namespace edgecast;
    SynthConfig cfg;
    cfg.seed = a.seed;
    cfg.total_minutes = a.minutes;
    cfg.workload_minutes = a.workload_minutes;
    cfg.pause_seconds = a.pause_seconds;
    cfg.noise_std = a.noise_std;
    TimeSeries series;
    try {
        series = generate_synthetic_workload(cfg);
    } catch (const Error& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kExitConfig;
    }
    try {
        write_csv_file(series, a.out);
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitData;
    }
    return 0;
}

struct Counts {
    std::size_t nodes = 0;
    std::size_t leaves = 0;
    std::size_t members = 0;
    std::size_t trees = 0;
};

void count(const nlohmann::json& j, Counts& c) {
    if (j.is_object()) {
        if (j.contains("kind") && j["kind"].is_string()) {
            const auto kind = j["kind"].get<std::string>();
            if (kind == "leaf" || kind == "split") {
                ++c.nodes;
                c.leaves += kind == "leaf";
            }
        }
        if (j.contains("model") && j["model"] == "cart" && j.contains("nodes")) {
            ++c.trees;
            for (const auto& n : j["nodes"]) {
                ++c.nodes;
                c.leaves += n.value("feature", -1) < 0;
            }
        }
        if (j.contains("members") && j["members"].is_array()) {
            c.members += j["members"].size();
        }
        for (const auto& [key, value] : j.items()) {
            if (key != "nodes") {
                count(value, c);
            }
        }
    } else if (j.is_array()) {
        for (const auto& v : j) {
            count(v, c);
        }
    }
}

int inspect_command(const std::string& path) {
    using namespace edgecast;
    nlohmann::json snap;
    try {
        std::ifstream in(path);
        if (!in) {
            throw IoError("cannot open " + path);
        }
        snap = nlohmann::json::parse(in);
    } catch (const std::exception& e) {
        std::cerr << "data error: " << e.what() << '\n';
        return kExitData;
    }
    Counts c;
    count(snap, c);
    std::cout << "model: " << snap.value("model", std::string("unknown")) << '\n'
              << "nodes: " << c.nodes << '\n'
              << "leaves: " << c.leaves << '\n'
              << "members: " << c.members << '\n'
              << "logical_bytes: " << model_memory_bytes(snap) << '\n';
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Online CPU-utilization forecasting benchmark"};
    app.require_subcommand(1);

    RunArgs run;
    auto* run_cmd = app.add_subcommand("run", "Run a benchmark suite and write a report");
    run_cmd->add_option("--protocol", run.protocol, "holdout or prequential")->required();
    run_cmd->add_option("--models", run.models, "Comma-separated model names")->delimiter(',');
    run_cmd->add_option("--window-sizes", run.window_sizes, "Comma-separated lag window sizes")->delimiter(',');
    run_cmd->add_option("--seeds", run.seeds, "Seeds per (model, window size)");
    run_cmd->add_option("--suite-seed", run.suite_seed, "Root seed of the suite");
    run_cmd->add_option("--train", run.train, "Training CSV");
    run_cmd->add_option("--test", run.test, "Test CSV");
    run_cmd->add_option("--data", run.data, "Single CSV split chronologically");
    run_cmd->add_option("--train-fraction", run.train_fraction, "Train share for --data and --synth-minutes");
    run_cmd->add_option("--synth-minutes", run.synth_minutes, "Use a synthetic series of this many minutes");
    run_cmd->add_option("--synth-seed", run.synth_seed, "Seed of the synthetic series");
    run_cmd->add_flag("--pretrain", run.pretrain, "Prequential: learn the training set first");
    run_cmd->add_option("--refit-interval", run.refit_interval, "Prequential batch models: refit every N instances");
    run_cmd->add_option("--out", run.out, "Report path")->required();
    run_cmd->add_option("--format", run.format, "json or csv");
    run_cmd->add_option("--workers", run.workers, "Cells run concurrently");
    run_cmd->add_option("--snapshot-dir", run.snapshot_dir, "Write each cell's final model snapshot here");

    SynthArgs synth;
    auto* synth_cmd = app.add_subcommand("synth", "Write a synthetic workload CSV");
    synth_cmd->add_option("--minutes", synth.minutes, "Series length in minutes")->required();
    synth_cmd->add_option("--seed", synth.seed, "Generator seed")->required();
    synth_cmd->add_option("--out", synth.out, "Output CSV")->required();
    synth_cmd->add_option("--workload-minutes", synth.workload_minutes, "Length of each workload block");
    synth_cmd->add_option("--pause-seconds", synth.pause_seconds, "Pause between blocks");
    synth_cmd->add_option("--noise-std", synth.noise_std, "Gaussian noise, percent");

    std::string snapshot_path;
    auto* inspect_cmd = app.add_subcommand("inspect", "Summarize a model snapshot");
    inspect_cmd->add_option("--model-snapshot", snapshot_path, "Snapshot JSON")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitConfig;
    }

    if (run_cmd->parsed()) {
        return run_command(run);
    }
    if (synth_cmd->parsed()) {
        return synth_command(synth);
    }
    return inspect_command(snapshot_path);
}
