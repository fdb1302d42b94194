#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "edgecast/data.hpp"

namespace edgecast {

/// Per-feature running mean and variance (Welford recurrence).
class RunningScaler {
  public:
    explicit RunningScaler(std::size_t dim = 0);

    void update(std::span<const double> x);
    /// Standardizes with the statistics seen so far; zeros before the first update.
    std::vector<double> transform(std::span<const double> x) const;
    /// update(x) then transform(x). The first call returns zeros.
    std::vector<double> update_and_transform(std::span<const double> x);

    std::size_t dim() const noexcept { return mean_.size(); }
    std::uint64_t count() const noexcept { return count_; }
    double mean(std::size_t i) const { return mean_.at(i); }
    /// Population variance.
    double variance(std::size_t i) const;

    nlohmann::json snapshot() const;
    std::size_t logical_bytes() const noexcept;

  private:
    void check_dim(std::span<const double> x) const;

    std::uint64_t count_ = 0;
    std::vector<double> mean_;
    std::vector<double> m2_;
};

/// y = w.x + b.
struct LinearModel {
    std::vector<double> weights;
    double bias = 0.0;

    double predict(std::span<const double> x) const;
};

enum class LearningSchedule { Constant, InverseScaling };

struct SgdParams {
    double learning_rate = 0.01;
    LearningSchedule schedule = LearningSchedule::Constant;
    double power_t = 0.25;  // InverseScaling: eta_t = eta / (t + 1)^power_t
    bool standardize = true;
};

/// Squared-loss stochastic gradient descent.
class SgdRegressor {
  public:
    SgdRegressor(std::size_t dim, SgdParams params = {});

    double predict(std::span<const double> x) const;
    /// Throws NumericError (state unchanged) if the step produces non-finite weights.
    void learn(std::span<const double> x, double y, double weight = 1.0);
    void learn(const LagInstance& inst) { learn(inst.features, inst.target); }

    const LinearModel& model() const noexcept { return model_; }
    LinearModel& model() noexcept { return model_; }
    const SgdParams& params() const noexcept { return params_; }
    const std::optional<RunningScaler>& scaler() const noexcept { return scaler_; }
    std::uint64_t updates() const noexcept { return updates_; }
    std::size_t dim() const noexcept { return model_.weights.size(); }

    nlohmann::json snapshot() const;
    std::size_t logical_bytes() const noexcept;

  private:
    SgdParams params_;
    LinearModel model_;
    std::optional<RunningScaler> scaler_;
    std::uint64_t updates_ = 0;
};

enum class PaVariant { PA, PA1 };

struct PaParams {
    double epsilon = 0.1;  // insensitivity band
    double C = 1.0;        // step cap for PA-I
    PaVariant variant = PaVariant::PA1;
    bool standardize = true;
};

/// Passive-Aggressive regression with epsilon-insensitive loss. The bias is an implicit
/// always-one coordinate, so the step is loss / (|x|^2 + 1).
class PaRegressor {
  public:
    PaRegressor(std::size_t dim, PaParams params = {});

    double predict(std::span<const double> x) const;
    void learn(std::span<const double> x, double y);
    void learn(const LagInstance& inst) { learn(inst.features, inst.target); }

    const LinearModel& model() const noexcept { return model_; }
    LinearModel& model() noexcept { return model_; }
    const PaParams& params() const noexcept { return params_; }
    std::uint64_t updates() const noexcept { return updates_; }
    std::size_t dim() const noexcept { return model_.weights.size(); }

    nlohmann::json snapshot() const;
    std::size_t logical_bytes() const noexcept;

  private:
    PaParams params_;
    LinearModel model_;
    std::optional<RunningScaler> scaler_;
    std::uint64_t updates_ = 0;
};

}  // namespace edgecast
