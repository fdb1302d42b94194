#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "edgecast/data.hpp"
#include "edgecast/metrics.hpp"
#include "edgecast/models.hpp"

namespace edgecast {

enum class Protocol { Holdout, Prequential };

std::string protocol_name(Protocol p);
/// Throws ConfigError for anything but "holdout" or "prequential".
Protocol parse_protocol(const std::string& text);

struct RunConfig {
    Protocol protocol = Protocol::Holdout;
    std::string model;
    ModelOptions options{};
    std::size_t window_size = 6;
    std::uint64_t seed = 0;
    bool pretrain = false;                       // prequential only
    std::optional<std::size_t> refit_interval;  // prequential, batch models only
    std::size_t refit_window = 5000;
};

struct RunResult {
    RunConfig config;
    MetricReport report;
    std::size_t train_rows = 0;
    std::size_t test_rows = 0;
    /// Without timings the JSON is a pure function of the config and the data.
    nlohmann::json to_json(bool with_timings = true) const;
};

/// MASE denominator for a lag dataset: persistence error over the instances in order,
/// i.e. lag-1 differences of [first instance's last feature, targets...].
double naive_mae_of(const LagDataset& data);

/// Fit on train (one pass for online models), then predict every test instance without
/// updates. Throws ConfigError for unknown models or invalid flag combinations.
RunResult run_holdout(const RunConfig& cfg, const LagDataset& train, const LagDataset& test);
RunResult run_holdout(Regressor& model, const RunConfig& cfg, const LagDataset& train, const LagDataset& test);

/// Optional pretraining pass over train, then predict, score and learn each test instance
/// in order. Batch models need a refit interval: they refit on the last `refit_window`
/// instances every `refit_interval` instances and fall back to persistence until the
/// first successful fit.
RunResult run_prequential(const RunConfig& cfg, const LagDataset& train, const LagDataset& test);
RunResult run_prequential(Regressor& model, const RunConfig& cfg, const LagDataset& train, const LagDataset& test);

struct SuiteConfig {
    Protocol protocol = Protocol::Holdout;
    std::vector<std::string> models;
    std::vector<std::size_t> window_sizes{6, 9, 12, 20, 32, 64};
    std::size_t seeds = 20;
    std::uint64_t suite_seed = 42;
    bool pretrain = false;
    std::optional<std::size_t> refit_interval;
    int workers = 1;
    ModelOptions options{};
    /// When set, the final snapshot of every cell is written here.
    std::optional<std::filesystem::path> snapshot_dir;
};

/// cell seed = mix_seed({suite_seed, fnv1a(model), L, seed_index}).
std::uint64_t cell_seed(std::uint64_t suite_seed, const std::string& model, std::size_t window_size,
                        std::size_t seed_index);

struct Stat {
    double mean = 0.0;
    double std = 0.0;
    bool operator==(const Stat&) const = default;
};

/// Incremental mean and population standard deviation. A constant sample has std exactly 0.
Stat summarize(const std::vector<double>& values);

struct CellFailure {
    std::size_t seed_index = 0;
    std::string error;
    bool operator==(const CellFailure&) const = default;
};

inline constexpr const char* kMetricNames[] = {"mae", "mse", "rmse", "mape", "smape", "mase", "r2"};

struct CellSummary {
    std::string model;
    std::size_t window_size = 0;
    std::size_t seeds = 0;  // successful runs aggregated
    std::vector<Stat> metrics;  // ordered as kMetricNames
    Stat model_bytes;
    std::vector<CellFailure> failures;
    bool operator==(const CellSummary&) const = default;
};

struct DatasetFingerprint {
    std::size_t train_rows = 0;
    std::size_t test_rows = 0;
    std::string sha256;
    bool operator==(const DatasetFingerprint&) const = default;
};

/// Everything in this report is a function of the data and the flags. Wall-clock timings
/// live in TimingReport.
struct SummaryReport {
    std::string protocol;
    std::uint64_t suite_seed = 0;
    bool pretrain = false;
    std::optional<std::size_t> refit_interval;
    DatasetFingerprint dataset;
    std::vector<CellSummary> cells;
    bool operator==(const SummaryReport&) const = default;

    std::size_t failure_count() const;
};

struct CellTiming {
    std::string model;
    std::size_t window_size = 0;
    Stat pretrain_seconds;
    Stat eval_seconds;
};

struct TimingReport {
    std::vector<CellTiming> cells;
};

struct SuiteOutput {
    SummaryReport summary;
    TimingReport timings;
};

/// SHA-256 (hex) of the canonical CSV form of train followed by test.
std::string dataset_sha256(const TimeSeries& train, const TimeSeries& test);

/// Runs every (model, L, seed) cell, up to `workers` at a time. Cell failures are recorded
/// and the suite continues. The summary does not depend on the worker count.
SuiteOutput run_suite(const SuiteConfig& cfg, const TimeSeries& train, const TimeSeries& test);

nlohmann::json summary_to_json(const SummaryReport& report);
SummaryReport summary_from_json(const nlohmann::json& j);
nlohmann::json timings_to_json(const TimingReport& timings);

enum class ReportFormat { Json, Csv };

/// Column list of the CSV report.
const std::vector<std::string>& csv_columns();

/// JSON writes the summary to `path` and the timings to `<path>.timings.json`; CSV writes
/// one row per (model, L) with values at 3 decimals, timings included. Throws
/// ValidationError for an empty report (nothing is written) and IoError if the file
/// cannot be written.
void write_report(const SummaryReport& report, const TimingReport& timings, ReportFormat format,
                  const std::filesystem::path& path);

}  // namespace edgecast
