#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace edgecast {

struct Sample {
    double timestamp = 0.0;  // seconds since the Unix epoch
    double value = 0.0;      // CPU utilization, percent
    bool operator==(const Sample&) const = default;
};

/// Timestamped CPU-utilization stream. Timestamps strictly increase; values lie in [0, 100].
struct TimeSeries {
    std::vector<Sample> points;

    std::size_t size() const noexcept { return points.size(); }
    bool empty() const noexcept { return points.empty(); }
    std::vector<double> values() const;
    bool operator==(const TimeSeries&) const = default;
};

/// Features are ordered oldest first: x(t-L) ... x(t-1). Target is x(t).
struct LagInstance {
    std::vector<double> features;
    double target = 0.0;
};

struct LagDataset {
    std::size_t window_size = 0;
    std::vector<LagInstance> instances;

    std::size_t size() const noexcept { return instances.size(); }
    bool empty() const noexcept { return instances.empty(); }
    std::vector<double> targets() const;
};

struct SynthConfig {
    std::uint64_t seed = 0;
    std::int64_t total_minutes = 0;
    std::int64_t workload_minutes = 60;
    std::int64_t pause_seconds = 60;
    double noise_std = 2.0;
    double start_timestamp = 0.0;
};

struct SynthBlock {
    std::int64_t start_minute = 0;
    std::int64_t length = 0;
    bool pause = false;
    double level = 0.0;  // drawn workload level; 0 for pause blocks
};

struct SyntheticWorkload {
    TimeSeries series;
    std::vector<SynthBlock> blocks;
};

/// Parses `timestamp,cpu_util` CSV. Timestamps are epoch seconds or ISO-8601 UTC.
/// Output is sorted; duplicate timestamps collapse to their mean value.
/// Values within 0.5 outside [0, 100] are clamped, anything further is a ValidationError.
TimeSeries parse_csv(std::string_view text);
TimeSeries read_csv_file(const std::filesystem::path& path);

/// Inverse of parse_csv at 6 decimal places.
std::string write_csv(const TimeSeries& series);
void write_csv_file(const TimeSeries& series, const std::filesystem::path& path);

/// Parses an ISO-8601 UTC timestamp ("2023-05-01T12:00:00Z", optional fraction or +00:00)
/// into epoch seconds. Throws ValidationError on anything else.
double parse_iso8601_utc(std::string_view text);

/// Buckets the series onto a one-minute grid anchored at the first timestamp rounded down
/// to the minute. Each bucket holds the mean of its points; empty interior buckets are
/// linearly interpolated.
TimeSeries resample_1min(const TimeSeries& series);

/// Instance i has features values[i .. i+L-1] and target values[i+L].
LagDataset make_lag_dataset(std::span<const double> values, std::size_t window_size);
LagDataset make_lag_dataset(const TimeSeries& series, std::size_t window_size);

/// First floor(n * train_fraction) instances train, the rest test. No shuffling.
std::pair<LagDataset, LagDataset> chronological_split(const LagDataset& dataset, double train_fraction);

/// Workload blocks at a uniform random level plus Gaussian noise, separated by
/// near-idle pauses. Deterministic for a given config.
SyntheticWorkload generate_synthetic_schedule(const SynthConfig& cfg);
TimeSeries generate_synthetic_workload(const SynthConfig& cfg);

}  // namespace edgecast
