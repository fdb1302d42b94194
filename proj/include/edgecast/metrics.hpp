#pragma once

#include <chrono>
#include <cstddef>
#include <cstdint>
#include <span>

#include <nlohmann/json_fwd.hpp>

namespace edgecast {

/// Running sums for the seven error metrics. Target moments use Welford's recurrence so
/// that R^2 stays accurate on long streams with a large mean.
struct MetricAccumulator {
    std::uint64_t n = 0;
    double sum_abs_err = 0.0;
    double sum_sq_err = 0.0;
    double sum_ape = 0.0;   // over targets != 0
    double sum_sape = 0.0;
    double y_mean = 0.0;
    double y_m2 = 0.0;
    std::uint64_t mape_skipped = 0;

    /// Combines two accumulators (Chan et al. for the target moments).
    void merge(const MetricAccumulator& other);
};

struct Footprint {
    double pretrain_seconds = 0.0;
    double eval_seconds = 0.0;
    double model_bytes = 0.0;
};

struct MetricReport {
    double mae = 0.0;
    double mse = 0.0;
    double rmse = 0.0;
    double mape = 0.0;
    double smape = 0.0;
    double mase = 0.0;
    double r2 = 0.0;
    double naive_mae_in_sample = 0.0;
    Footprint footprint{};
};

/// Throws ValidationError for non-finite input.
void metrics_update(MetricAccumulator& acc, double y, double yhat);

/// Throws ValidationError when fewer than two pairs were seen or the naive MAE is not positive.
/// MAPE averages over nonzero targets only (0 if there were none). For a constant target R^2 is
/// 1 on a perfect fit and 0 otherwise.
MetricReport metrics_finalize(const MetricAccumulator& acc, double naive_mae_in_sample);

/// Mean of |x(t) - x(t-1)| over consecutive values.
double naive_mae(std::span<const double> series);

/// Logical size of a model snapshot: 16 per object, 8 per number, 1 per flag, 0 for strings
/// and nulls, arrays free apart from their elements. An object carrying both "capacity" and
/// "bins" is charged for `capacity` five-number bins regardless of how many are filled.
std::size_t model_memory_bytes(const nlohmann::json& snapshot);

/// Elapsed seconds rounded up to whole milliseconds, so every timed phase is at least 0.001.
double seconds_at_ms_resolution(std::chrono::steady_clock::duration elapsed);

}  // namespace edgecast
