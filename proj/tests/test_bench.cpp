#include <sys/wait.h>

#include <array>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "edgecast/bench.hpp"
#include "edgecast/error.hpp"
#include "edgecast/models.hpp"
#include "support.hpp"

using namespace edgecast;
namespace fs = std::filesystem;

namespace {

TimeSeries synth(std::uint64_t seed, std::int64_t minutes) {
    SynthConfig cfg;
    cfg.seed = seed;
    cfg.total_minutes = minutes;
    return generate_synthetic_workload(cfg);
}

std::pair<TimeSeries, TimeSeries> split_series(const TimeSeries& all, double fraction) {
    const auto cut = static_cast<std::ptrdiff_t>(static_cast<double>(all.size()) * fraction);
    TimeSeries a, b;
    a.points.assign(all.points.begin(), all.points.begin() + cut);
    b.points.assign(all.points.begin() + cut, all.points.end());
    return {a, b};
}

struct Lagged {
    LagDataset train, test;
};

Lagged lagged(std::size_t L, std::int64_t minutes = 3000) {
    const auto [tr, te] = split_series(synth(1, minutes), 0.8);
    return {make_lag_dataset(tr, L), make_lag_dataset(te, L)};
}

fs::path temp_dir(const std::string& name) {
    auto dir = fs::temp_directory_path() / ("edgecast_test_" + name + "_" + std::to_string(::getpid()));
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

int run_cli(const std::string& args, std::string* output = nullptr) {
    const std::string cmd = std::string(EDGECAST_BENCH_EXE) + " " + args + " 2>&1";
    FILE* pipe = popen(cmd.c_str(), "r");
    if (!pipe) {
        return -1;
    }
    std::array<char, 512> buf{};
    std::string out;
    while (fgets(buf.data(), static_cast<int>(buf.size()), pipe)) {
        out += buf.data();
    }
    const int status = pclose(pipe);
    if (output) {
        *output = out;
    }
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

// Predicts the most recently learned target.
class Memorizer : public Regressor {
  public:
    std::string name() const override { return "memorizer"; }
    bool is_online() const override { return true; }
    double predict(std::span<const double>) const override { return last_; }
    void learn(const LagInstance& inst) override { last_ = inst.target; }
    void fit(const LagDataset& d) override {
        for (const auto& inst : d.instances) {
            learn(inst);
        }
    }
    nlohmann::json snapshot() const override { return {{"last", last_}}; }
    std::size_t logical_bytes() const override { return 24; }

  private:
    double last_ = -1.0;
};

}  // namespace

TEST(Protocol, ParsesNames) {
    EXPECT_EQ(parse_protocol("holdout"), Protocol::Holdout);
    EXPECT_EQ(parse_protocol("prequential"), Protocol::Prequential);
    EXPECT_THROW(parse_protocol("kfold"), ConfigError);
}

TEST(Models, FactoryKnowsEveryName) {
    for (const auto& name : known_models()) {
        auto m = make_regressor(name, 4, 1);
        EXPECT_EQ(m->name(), name);
        EXPECT_EQ(m->is_online(), !is_batch_model(name));
    }
    EXPECT_THROW(make_regressor("xgboost", 4, 1), ConfigError);
    EXPECT_THROW(make_regressor("ht", 0, 1), ConfigError);
}

TEST(Models, SnapshotsMatchLogicalBytes) {
    const auto d = lagged(6, 1500);
    for (const auto& name : known_models()) {
        auto m = make_regressor(name, 6, 3);
        m->fit(d.train);
        EXPECT_EQ(m->logical_bytes(), model_memory_bytes(m->snapshot())) << name;
    }
}

TEST(Models, BatchModelsRefuseIncrementalLearning) {
    auto m = make_regressor("cart", 2, 0);
    EXPECT_THROW(m->learn({{1.0, 2.0}, 3.0}), ConfigError);
    EXPECT_THROW(m->predict(std::vector<double>{1.0, 2.0}), ValidationError);
}

TEST(Holdout, PersistenceOnTrainHasUnitMase) {
    for (std::size_t L : {1u, 6u, 32u}) {
        const auto d = lagged(L);
        RunConfig cfg;
        cfg.model = "persistence";
        cfg.window_size = L;
        const auto r = run_holdout(cfg, d.train, d.train);
        EXPECT_NEAR(r.report.mase, 1.0, 1e-12);
        EXPECT_NEAR(r.report.mae, naive_mae_of(d.train), 1e-12);
    }
}

TEST(Holdout, MaseIsMaeOverNaive) {
    const auto d = lagged(6);
    for (const char* name : {"ht", "sgd", "ols"}) {
        RunConfig cfg;
        cfg.model = name;
        const auto r = run_holdout(cfg, d.train, d.train);
        EXPECT_EQ(r.report.mase, r.report.mae / naive_mae_of(d.train)) << name;
    }
}

TEST(Holdout, OlsFitsNoiselessLinearStream) {
    auto f = [](const std::vector<double>& x) { return 0.5 * x[0] - 2.0 * x[1] + 0.25 * x[2] + 7.0; };
    const auto train = edgecast::testing::random_dataset(1, 2000, 3, f, 0.0, 100.0);
    const auto test = edgecast::testing::random_dataset(2, 500, 3, f, 0.0, 100.0);
    RunConfig cfg;
    cfg.model = "ols";
    cfg.window_size = 3;
    EXPECT_GT(run_holdout(cfg, train, test).report.r2, 0.999);
}

TEST(Holdout, RejectsPrequentialFlags) {
    const auto d = lagged(6, 500);
    RunConfig cfg;
    cfg.model = "ht";
    cfg.pretrain = true;
    EXPECT_THROW(run_holdout(cfg, d.train, d.test), ConfigError);
    cfg.pretrain = false;
    cfg.refit_interval = 5;
    EXPECT_THROW(run_holdout(cfg, d.train, d.test), ConfigError);
}

TEST(Prequential, FrozenModelMatchesHoldout) {
    const auto d = lagged(6);
    for (const char* name : {"ht", "arf", "pa", "ols", "rf"}) {
        RunConfig cfg;
        cfg.model = name;
        cfg.seed = 5;
        const auto hold = run_holdout(cfg, d.train, d.test);
        auto frozen = make_frozen(make_regressor(name, 6, 5));
        RunConfig pcfg = cfg;
        pcfg.protocol = Protocol::Prequential;
        pcfg.pretrain = true;
        const auto preq = run_prequential(*frozen, pcfg, d.train, d.test);
        EXPECT_EQ(hold.to_json(false)["metrics"], preq.to_json(false)["metrics"]) << name;
    }
}

TEST(Prequential, ScoresBeforeLearning) {
    std::vector<double> v{1, 1, 5, 5, 5, 2, 9, 9, 3, 3, 3, 3, 7};
    const auto d = make_lag_dataset(v, 1);
    Memorizer m;
    RunConfig cfg;
    cfg.protocol = Protocol::Prequential;
    cfg.window_size = 1;
    const auto r = run_prequential(m, cfg, d, d);
    // Without pretraining the first prediction is -1, then each prediction is the
    // previous target.
    double expected = std::fabs(d.instances[0].target + 1.0);
    for (std::size_t i = 1; i < d.size(); ++i) {
        expected += std::fabs(d.instances[i].target - d.instances[i - 1].target);
    }
    EXPECT_NEAR(r.report.mae, expected / static_cast<double>(d.size()), 1e-12);
    EXPECT_GT(r.report.mae, 0.0);
}

TEST(Prequential, FlagValidation) {
    const auto d = lagged(6, 500);
    RunConfig cfg;
    cfg.protocol = Protocol::Prequential;
    cfg.model = "cart";
    EXPECT_THROW(run_prequential(cfg, d.train, d.test), ConfigError);
    cfg.model = "ht";
    cfg.refit_interval = 10;
    EXPECT_THROW(run_prequential(cfg, d.train, d.test), ConfigError);
    cfg.model = "cart";
    cfg.refit_interval = 0;
    EXPECT_THROW(run_prequential(cfg, d.train, d.test), ConfigError);
}

TEST(Prequential, BatchRefitUsesPersistenceUntilFitted) {
    const auto d = lagged(6, 1000);
    RunConfig cfg;
    cfg.protocol = Protocol::Prequential;
    cfg.model = "ols";
    cfg.refit_interval = d.test.size() + 10;  // never refits
    const auto never = run_prequential(cfg, d.train, d.test);
    RunConfig pcfg = cfg;
    pcfg.model = "persistence";
    pcfg.refit_interval.reset();
    const auto persistence = run_prequential(pcfg, d.train, d.test);
    EXPECT_EQ(never.report.mae, persistence.report.mae);

    cfg.refit_interval = 50;
    const auto refit = run_prequential(cfg, d.train, d.test);
    EXPECT_NE(refit.report.mae, never.report.mae);
    cfg.pretrain = true;
    EXPECT_GT(run_prequential(cfg, d.train, d.test).report.footprint.model_bytes, 0.0);
}

TEST(RunResult, IdenticalConfigsGiveIdenticalJson) {
    const auto d = lagged(6);
    for (const auto& name : known_models()) {
        RunConfig cfg;
        cfg.protocol = is_batch_model(name) ? Protocol::Holdout : Protocol::Prequential;
        cfg.model = name;
        cfg.seed = 11;
        auto run = [&] {
            return cfg.protocol == Protocol::Holdout ? run_holdout(cfg, d.train, d.test)
                                                     : run_prequential(cfg, d.train, d.test);
        };
        EXPECT_EQ(run().to_json(false).dump(), run().to_json(false).dump()) << name;
    }
}

TEST(RunResult, TimingsArePositiveAtMillisecondResolution) {
    const auto d = lagged(6);
    RunConfig cfg;
    cfg.model = "rf";
    const auto r = run_holdout(cfg, d.train, d.test);
    for (double s : {r.report.footprint.pretrain_seconds, r.report.footprint.eval_seconds}) {
        EXPECT_GT(s, 0.0);
        EXPECT_EQ(std::round(s * 1000.0) / 1000.0, s);
    }
}

TEST(CellSeed, DependsOnEveryInput) {
    const auto base = cell_seed(42, "ht", 6, 0);
    EXPECT_EQ(base, cell_seed(42, "ht", 6, 0));
    EXPECT_NE(base, cell_seed(43, "ht", 6, 0));
    EXPECT_NE(base, cell_seed(42, "hat", 6, 0));
    EXPECT_NE(base, cell_seed(42, "ht", 9, 0));
    EXPECT_NE(base, cell_seed(42, "ht", 6, 1));
}

TEST(Summarize, PopulationStd) {
    EXPECT_EQ(summarize({3.0}), (Stat{3.0, 0.0}));
    EXPECT_EQ(summarize({2.5, 2.5, 2.5}).std, 0.0);
    const auto s = summarize({1, 2, 3, 4});
    EXPECT_DOUBLE_EQ(s.mean, 2.5);
    EXPECT_NEAR(s.std, std::sqrt(1.25), 1e-15);
}

TEST(Suite, DeterministicModelHasZeroStd) {
    const auto [train, test] = split_series(synth(2, 2500), 0.8);
    SuiteConfig cfg;
    cfg.protocol = Protocol::Prequential;
    cfg.pretrain = true;
    cfg.models = {"ht"};
    cfg.window_sizes = {6};
    cfg.seeds = 20;
    const auto out = run_suite(cfg, train, test);
    ASSERT_EQ(out.summary.cells.size(), 1u);
    const auto& cell = out.summary.cells[0];
    EXPECT_EQ(cell.seeds, 20u);
    for (const auto& m : cell.metrics) {
        EXPECT_EQ(m.std, 0.0);
    }
    EXPECT_EQ(cell.model_bytes.std, 0.0);
}

TEST(Suite, WorkerCountDoesNotChangeTheReport) {
    const auto [train, test] = split_series(synth(3, 2000), 0.8);
    SuiteConfig cfg;
    cfg.protocol = Protocol::Prequential;
    cfg.models = {"ht", "arf", "sgd", "pa"};
    cfg.window_sizes = {6, 9};
    cfg.seeds = 3;
    const auto serial = run_suite(cfg, train, test);
    cfg.workers = 3;
    const auto parallel = run_suite(cfg, train, test);
    EXPECT_EQ(serial.summary, parallel.summary);
    EXPECT_EQ(summary_to_json(serial.summary).dump(2), summary_to_json(parallel.summary).dump(2));
    EXPECT_GT(serial.summary.cells[2].metrics[0].std, 0.0);  // arf, L=6 varies across seeds
}

TEST(Suite, FailedCellIsRecordedAndSuiteContinues) {
    const auto [train, test] = split_series(synth(4, 500), 0.02);  // 10 train minutes
    ASSERT_EQ(train.size(), 10u);
    SuiteConfig cfg;
    cfg.models = {"ols"};
    cfg.window_sizes = {2, 6};  // L=6 leaves 4 training instances, too few for OLS
    cfg.seeds = 2;
    const auto out = run_suite(cfg, train, test);
    ASSERT_EQ(out.summary.cells.size(), 2u);
    EXPECT_TRUE(out.summary.cells[0].failures.empty());
    EXPECT_EQ(out.summary.cells[0].seeds, 2u);
    ASSERT_EQ(out.summary.cells[1].failures.size(), 2u);
    EXPECT_EQ(out.summary.cells[1].seeds, 0u);
    EXPECT_NE(out.summary.cells[1].failures[0].error.find("OLS"), std::string::npos);
    EXPECT_EQ(out.summary.failure_count(), 2u);
}

TEST(Suite, RejectsBadConfigsUpFront) {
    const auto [train, test] = split_series(synth(5, 300), 0.8);
    SuiteConfig cfg;
    cfg.models = {"nope"};
    cfg.window_sizes = {6};
    EXPECT_THROW(run_suite(cfg, train, test), ConfigError);
    cfg.models = {};
    EXPECT_THROW(run_suite(cfg, train, test), ValidationError);
}

TEST(Suite, FingerprintsTheData) {
    const auto [train, test] = split_series(synth(6, 400), 0.8);
    SuiteConfig cfg;
    cfg.models = {"persistence"};
    cfg.window_sizes = {6};
    cfg.seeds = 1;
    const auto out = run_suite(cfg, train, test);
    EXPECT_EQ(out.summary.dataset.train_rows, train.size());
    EXPECT_EQ(out.summary.dataset.test_rows, test.size());
    EXPECT_EQ(out.summary.dataset.sha256.size(), 64u);
    EXPECT_EQ(out.summary.dataset.sha256, dataset_sha256(train, test));
    EXPECT_NE(out.summary.dataset.sha256, dataset_sha256(test, train));
}

TEST(DatasetHash, KnownDigestOfEmptyInput) {
    // SHA-256 of the two header lines only.
    EXPECT_EQ(dataset_sha256(TimeSeries{}, TimeSeries{}).size(), 64u);
    EXPECT_EQ(dataset_sha256(TimeSeries{}, TimeSeries{}), dataset_sha256(TimeSeries{}, TimeSeries{}));
}

TEST(Report, JsonRoundTrip) {
    const auto [train, test] = split_series(synth(7, 1200), 0.8);
    SuiteConfig cfg;
    cfg.protocol = Protocol::Prequential;
    cfg.models = {"hat", "srp"};
    cfg.window_sizes = {6};
    cfg.seeds = 2;
    const auto out = run_suite(cfg, train, test);
    const auto dir = temp_dir("roundtrip");
    write_report(out.summary, out.timings, ReportFormat::Json, dir / "r.json");
    const auto parsed = summary_from_json(nlohmann::json::parse(slurp(dir / "r.json")));
    EXPECT_EQ(parsed, out.summary);
    const auto timings = nlohmann::json::parse(slurp(dir / "r.json.timings.json"));
    EXPECT_EQ(timings["cells"].size(), 2u);
    EXPECT_GT(timings["cells"][0]["eval_seconds"]["mean"].get<double>(), 0.0);
    fs::remove_all(dir);
}

TEST(Report, JsonSchema) {
    const auto [train, test] = split_series(synth(8, 600), 0.8);
    SuiteConfig cfg;
    cfg.models = {"cart"};
    cfg.window_sizes = {6};
    cfg.seeds = 1;
    const auto j = summary_to_json(run_suite(cfg, train, test).summary);
    for (const char* key : {"train_rows", "test_rows", "sha256"}) {
        EXPECT_TRUE(j["dataset"].contains(key));
    }
    const auto& cell = j["cells"][0];
    EXPECT_EQ(cell["model"], "cart");
    EXPECT_EQ(cell["window_size"], 6);
    EXPECT_EQ(cell["seeds"], 1);
    for (const char* m : kMetricNames) {
        EXPECT_TRUE(cell["metrics"][m].contains("mean"));
        EXPECT_TRUE(cell["metrics"][m].contains("std"));
    }
    EXPECT_TRUE(cell["footprint"].contains("model_bytes"));
}

TEST(Report, CsvHeaderAndRounding) {
    const auto [train, test] = split_series(synth(9, 600), 0.8);
    SuiteConfig cfg;
    cfg.models = {"pa", "persistence"};
    cfg.window_sizes = {6, 12};
    cfg.seeds = 2;
    const auto out = run_suite(cfg, train, test);
    const auto dir = temp_dir("csv");
    write_report(out.summary, out.timings, ReportFormat::Csv, dir / "r.csv");
    std::istringstream in(slurp(dir / "r.csv"));
    std::string header;
    std::getline(in, header);
    EXPECT_EQ(header,
              "model,window_size,seeds,failures,mae_mean,mae_std,mse_mean,mse_std,rmse_mean,rmse_std,mape_mean,"
              "mape_std,smape_mean,smape_std,mase_mean,mase_std,r2_mean,r2_std,train_time_s_mean,train_time_s_std,"
              "eval_time_s_mean,eval_time_s_std,memory_bytes_mean,memory_bytes_std");
    std::string row;
    int rows = 0;
    while (std::getline(in, row)) {
        ++rows;
        std::stringstream ss(row);
        std::string field;
        int col = 0;
        while (std::getline(ss, field, ',')) {
            if (col++ >= 4) {
                const auto dot = field.find('.');
                ASSERT_NE(dot, std::string::npos) << field;
                EXPECT_EQ(field.size() - dot - 1, 3u) << field;
            }
        }
        EXPECT_EQ(col, static_cast<int>(csv_columns().size()));
    }
    EXPECT_EQ(rows, 4);
    fs::remove_all(dir);
}

TEST(Report, EmptyReportWritesNothing) {
    const auto dir = temp_dir("empty");
    EXPECT_THROW(write_report(SummaryReport{}, TimingReport{}, ReportFormat::Json, dir / "r.json"), ValidationError);
    EXPECT_FALSE(fs::exists(dir / "r.json"));
    fs::remove_all(dir);
}

TEST(Report, UnwritablePathIsIoError) {
    SummaryReport r;
    r.cells.push_back({});
    EXPECT_THROW(write_report(r, TimingReport{}, ReportFormat::Json, "/nonexistent/dir/r.json"), IoError);
}

TEST(Report, MalformedJsonIsValidationError) {
    EXPECT_THROW(summary_from_json(nlohmann::json{{"cells", 3}}), ValidationError);
}

TEST(Cli, SynthWritesParsableCsv) {
    const auto dir = temp_dir("cli_synth");
    EXPECT_EQ(run_cli("synth --minutes 200 --seed 3 --out " + (dir / "s.csv").string()), 0);
    const auto s = read_csv_file(dir / "s.csv");
    EXPECT_EQ(s.size(), 200u);
    SynthConfig cfg;
    cfg.seed = 3;
    cfg.total_minutes = 200;
    EXPECT_EQ(slurp(dir / "s.csv"), write_csv(generate_synthetic_workload(cfg)));
    EXPECT_EQ(run_cli("synth --minutes 10 --seed 3 --out " + (dir / "t.csv").string()), 2);
    fs::remove_all(dir);
}

TEST(Cli, ConfigErrorsExitWith2) {
    const auto dir = temp_dir("cli_config");
    const auto out = (dir / "r.json").string();
    EXPECT_EQ(run_cli("run --protocol holdout --models nope --synth-minutes 300 --out " + out), 2);
    EXPECT_EQ(run_cli("run --protocol sideways --models ht --synth-minutes 300 --out " + out), 2);
    EXPECT_EQ(run_cli("run --protocol prequential --models cart --synth-minutes 300 --out " + out), 2);
    EXPECT_EQ(run_cli("run --protocol holdout --models ht --out " + out), 2);  // no data source
    EXPECT_EQ(run_cli("run --protocol holdout --models ht --synth-minutes 300"), 2);  // no --out
    EXPECT_EQ(run_cli("frobnicate"), 2);
    EXPECT_FALSE(fs::exists(out));
    fs::remove_all(dir);
}

TEST(Cli, DataErrorsExitWith3) {
    const auto dir = temp_dir("cli_data");
    const auto out = (dir / "r.json").string();
    EXPECT_EQ(run_cli("run --protocol holdout --models ht --train /nonexistent.csv --test /nonexistent.csv --out " +
                      out),
              3);
    std::ofstream(dir / "bad.csv") << "timestamp,cpu_util\n0,10\n60,abc\n";
    std::string log;
    EXPECT_EQ(run_cli("run --protocol holdout --models ht --data " + (dir / "bad.csv").string() + " --out " + out,
                      &log),
              3);
    EXPECT_NE(log.find("line 3"), std::string::npos) << log;
    EXPECT_EQ(run_cli("inspect --model-snapshot /nonexistent.json"), 3);
    fs::remove_all(dir);
}

TEST(Cli, PartialFailureExitsWith4AndStillWritesReport) {
    const auto dir = temp_dir("cli_partial");
    TimeSeries train, test;
    const auto all = synth(4, 300);
    train.points.assign(all.points.begin(), all.points.begin() + 10);
    test.points.assign(all.points.begin() + 10, all.points.end());
    write_csv_file(train, dir / "train.csv");
    write_csv_file(test, dir / "test.csv");
    const auto out = dir / "r.json";
    EXPECT_EQ(run_cli("run --protocol holdout --models ols --window-sizes 2,6 --seeds 2 --train " +
                      (dir / "train.csv").string() + " --test " + (dir / "test.csv").string() + " --out " +
                      out.string()),
              4);
    const auto report = summary_from_json(nlohmann::json::parse(slurp(out)));
    EXPECT_EQ(report.failure_count(), 2u);
    fs::remove_all(dir);
}

TEST(Cli, RunWritesReportAndSnapshotsThatInspectReads) {
    const auto dir = temp_dir("cli_run");
    const auto out = dir / "r.json";
    EXPECT_EQ(run_cli("run --protocol prequential --models ht,arf --window-sizes 6 --seeds 2 --synth-minutes 1500 "
                      "--synth-seed 1 --pretrain --out " +
                      out.string() + " --snapshot-dir " + (dir / "snaps").string()),
              0);
    const auto report = summary_from_json(nlohmann::json::parse(slurp(out)));
    ASSERT_EQ(report.cells.size(), 2u);
    EXPECT_EQ(report.dataset.train_rows, 1200u);
    EXPECT_EQ(report.dataset.test_rows, 300u);
    EXPECT_TRUE(report.pretrain);

    const auto snap = dir / "snaps" / "arf_L6_seed1.json";
    ASSERT_TRUE(fs::exists(snap));
    std::string text;
    EXPECT_EQ(run_cli("inspect --model-snapshot " + snap.string(), &text), 0);
    EXPECT_NE(text.find("model: arf"), std::string::npos) << text;
    EXPECT_NE(text.find("members: 10"), std::string::npos) << text;
    const auto bytes = model_memory_bytes(nlohmann::json::parse(slurp(snap)));
    EXPECT_NE(text.find("logical_bytes: " + std::to_string(bytes)), std::string::npos) << text;
    fs::remove_all(dir);
}

TEST(Cli, CsvFormat) {
    const auto dir = temp_dir("cli_csv");
    const auto out = dir / "r.csv";
    EXPECT_EQ(run_cli("run --protocol holdout --models ols,cart --window-sizes 6 --seeds 1 --synth-minutes 600 "
                      "--format csv --out " +
                      out.string()),
              0);
    std::istringstream in(slurp(out));
    std::string header;
    std::getline(in, header);
    EXPECT_EQ(header.rfind("model,window_size,seeds,failures,mae_mean", 0), 0u);
    fs::remove_all(dir);
}
