#include "edgecast/metrics.hpp"

#include <algorithm>
#include <cmath>

#include <nlohmann/json.hpp>

#include "edgecast/error.hpp"

namespace edgecast {

void MetricAccumulator::merge(const MetricAccumulator& other) {
    if (other.n == 0) {
        return;
    }
    if (n == 0) {
        *this = other;
        return;
    }
    const double na = static_cast<double>(n);
    const double nb = static_cast<double>(other.n);
    const double d = other.y_mean - y_mean;
    y_mean += d * nb / (na + nb);
    y_m2 += other.y_m2 + d * d * na * nb / (na + nb);
    n += other.n;
    sum_abs_err += other.sum_abs_err;
    sum_sq_err += other.sum_sq_err;
    sum_ape += other.sum_ape;
    sum_sape += other.sum_sape;
    mape_skipped += other.mape_skipped;
}

void metrics_update(MetricAccumulator& acc, double y, double yhat) {
    if (!std::isfinite(y) || !std::isfinite(yhat)) {
        throw ValidationError("metric inputs must be finite");
    }
    const double err = y - yhat;
    const double abs_err = std::fabs(err);
    ++acc.n;
    acc.sum_abs_err += abs_err;
    acc.sum_sq_err += err * err;
    if (y == 0.0) {
        ++acc.mape_skipped;
    } else {
        acc.sum_ape += abs_err / std::fabs(y);
    }
    const double denom = std::fabs(y) + std::fabs(yhat);
    if (denom > 0.0) {
        acc.sum_sape += 2.0 * abs_err / denom;
    }
    const double d = y - acc.y_mean;
    acc.y_mean += d / static_cast<double>(acc.n);
    acc.y_m2 += d * (y - acc.y_mean);
}

MetricReport metrics_finalize(const MetricAccumulator& acc, double naive_mae_in_sample) {
    if (acc.n < 2) {
        throw ValidationError("metrics need at least two predictions, got " + std::to_string(acc.n));
    }
    if (!(naive_mae_in_sample > 0.0) || !std::isfinite(naive_mae_in_sample)) {
        throw ValidationError("MASE undefined: naive in-sample MAE must be positive");
    }
    const double n = static_cast<double>(acc.n);
    MetricReport r;
    r.mae = acc.sum_abs_err / n;
    r.mse = acc.sum_sq_err / n;
    r.rmse = std::sqrt(r.mse);
    const std::uint64_t scored = acc.n - acc.mape_skipped;
    r.mape = scored == 0 ? 0.0 : 100.0 * acc.sum_ape / static_cast<double>(scored);
    r.smape = 100.0 * acc.sum_sape / n;
    r.naive_mae_in_sample = naive_mae_in_sample;
    r.mase = r.mae / naive_mae_in_sample;
    if (acc.y_m2 > 0.0) {
        r.r2 = 1.0 - acc.sum_sq_err / acc.y_m2;
    } else {
        r.r2 = acc.sum_sq_err == 0.0 ? 1.0 : 0.0;
    }
    return r;
}

double naive_mae(std::span<const double> series) {
    if (series.size() < 2) {
        throw ValidationError("naive MAE needs at least two values");
    }
    double s = 0.0;
    for (std::size_t i = 1; i < series.size(); ++i) {
        s += std::fabs(series[i] - series[i - 1]);
    }
    return s / static_cast<double>(series.size() - 1);
}

std::size_t model_memory_bytes(const nlohmann::json& j) {
    switch (j.type()) {
        case nlohmann::json::value_t::object: {
            std::size_t bytes = 16;
            const bool fixed_bins = j.contains("capacity") && j.contains("bins") && j["capacity"].is_number();
            for (const auto& [key, value] : j.items()) {
                if (fixed_bins && key == "bins") {
                    bytes += j["capacity"].get<std::size_t>() * 5 * 8;
                } else {
                    bytes += model_memory_bytes(value);
                }
            }
            return bytes;
        }
        case nlohmann::json::value_t::array: {
            std::size_t bytes = 0;
            for (const auto& v : j) {
                bytes += model_memory_bytes(v);
            }
            return bytes;
        }
        case nlohmann::json::value_t::number_integer:
        case nlohmann::json::value_t::number_unsigned:
        case nlohmann::json::value_t::number_float:
            return 8;
        case nlohmann::json::value_t::boolean:
            return 1;
        default:
            return 0;
    }
}

double seconds_at_ms_resolution(std::chrono::steady_clock::duration elapsed) {
    const auto us = std::chrono::duration_cast<std::chrono::microseconds>(elapsed).count();
    const auto ms = std::max<long long>(1, (us + 999) / 1000);
    return static_cast<double>(ms) / 1000.0;
}

}  // namespace edgecast
