#include "edgecast/linear.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <nlohmann/json.hpp>

#include "edgecast/error.hpp"

namespace edgecast {

namespace {

constexpr double kMinStd = 1e-9;

void check_finite_input(std::span<const double> x, double y) {
    if (!std::isfinite(y) || !std::all_of(x.begin(), x.end(), [](double v) { return std::isfinite(v); })) {
        throw ValidationError("linear model input must be finite");
    }
}

bool all_finite(const LinearModel& m) {
    return std::isfinite(m.bias) &&
           std::all_of(m.weights.begin(), m.weights.end(), [](double w) { return std::isfinite(w); });
}

double squared_norm(std::span<const double> x) {
    return std::inner_product(x.begin(), x.end(), x.begin(), 0.0);
}

void check_dims(std::size_t expected, std::size_t got) {
    if (expected != got) {
        throw ValidationError("feature dimension mismatch: expected " + std::to_string(expected) + ", got " +
                              std::to_string(got));
    }
}

}  // namespace

// --- RunningScaler ---------------------------------------------------------

RunningScaler::RunningScaler(std::size_t dim) : mean_(dim, 0.0), m2_(dim, 0.0) {}

void RunningScaler::check_dim(std::span<const double> x) const {
    check_dims(mean_.size(), x.size());
}

void RunningScaler::update(std::span<const double> x) {
    check_dim(x);
    ++count_;
    const double n = static_cast<double>(count_);
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double d = x[i] - mean_[i];
        mean_[i] += d / n;
        m2_[i] += d * (x[i] - mean_[i]);
    }
}

double RunningScaler::variance(std::size_t i) const {
    return count_ == 0 ? 0.0 : std::max(0.0, m2_.at(i) / static_cast<double>(count_));
}

std::vector<double> RunningScaler::transform(std::span<const double> x) const {
    check_dim(x);
    std::vector<double> z(x.size(), 0.0);
    if (count_ == 0) {
        return z;
    }
    for (std::size_t i = 0; i < x.size(); ++i) {
        z[i] = (x[i] - mean_[i]) / std::max(std::sqrt(variance(i)), kMinStd);
    }
    return z;
}

std::vector<double> RunningScaler::update_and_transform(std::span<const double> x) {
    update(x);
    return transform(x);
}

nlohmann::json RunningScaler::snapshot() const {
    return {{"kind", "scaler"}, {"count", count_}, {"mean", mean_}, {"m2", m2_}};
}

std::size_t RunningScaler::logical_bytes() const noexcept {
    return 16 + 8 + 16 * mean_.size();
}

// --- LinearModel -----------------------------------------------------------

double LinearModel::predict(std::span<const double> x) const {
    check_dims(weights.size(), x.size());
    return std::inner_product(x.begin(), x.end(), weights.begin(), bias);
}

// --- SGD -------------------------------------------------------------------

SgdRegressor::SgdRegressor(std::size_t dim, SgdParams params) : params_(params) {
    if (dim == 0 || !(params_.learning_rate >= 0.0) || !(params_.power_t >= 0.0)) {
        throw ValidationError("SGD needs dim >= 1 and non-negative learning rate");
    }
    model_.weights.assign(dim, 0.0);
    if (params_.standardize) {
        scaler_.emplace(dim);
    }
}

double SgdRegressor::predict(std::span<const double> x) const {
    if (scaler_) {
        const auto z = scaler_->transform(x);
        return model_.predict(z);
    }
    return model_.predict(x);
}

void SgdRegressor::learn(std::span<const double> x, double y, double weight) {
    check_dims(model_.weights.size(), x.size());
    check_finite_input(x, y);
    const auto saved_model = model_;
    const auto saved_scaler = scaler_;

    std::vector<double> z;
    std::span<const double> input = x;
    if (scaler_) {
        z = scaler_->update_and_transform(x);
        input = z;
    }
    double eta = params_.learning_rate * weight;
    if (params_.schedule == LearningSchedule::InverseScaling) {
        eta /= std::pow(static_cast<double>(updates_ + 1), params_.power_t);
    }
    const double err = y - model_.predict(input);
    for (std::size_t i = 0; i < input.size(); ++i) {
        model_.weights[i] += eta * err * input[i];
    }
    model_.bias += eta * err;

    if (!all_finite(model_)) {
        model_ = saved_model;
        scaler_ = saved_scaler;
        throw NumericError("SGD update diverged; state rolled back");
    }
    ++updates_;
}

nlohmann::json SgdRegressor::snapshot() const {
    return {{"kind", "sgd"},
            {"learning_rate", params_.learning_rate},
            {"schedule", params_.schedule == LearningSchedule::Constant ? "constant" : "inverse_scaling"},
            {"power_t", params_.power_t},
            {"standardize", params_.standardize},
            {"updates", updates_},
            {"weights", model_.weights},
            {"bias", model_.bias},
            {"scaler", scaler_ ? scaler_->snapshot() : nlohmann::json(nullptr)}};
}

std::size_t SgdRegressor::logical_bytes() const noexcept {
    return 16 + 8 * 3 + 1 + 8 * model_.weights.size() + 8 + (scaler_ ? scaler_->logical_bytes() : 0);
}

// --- Passive-Aggressive ----------------------------------------------------

PaRegressor::PaRegressor(std::size_t dim, PaParams params) : params_(params) {
    if (dim == 0 || !(params_.epsilon >= 0.0) || !(params_.C >= 0.0)) {
        throw ValidationError("PA needs dim >= 1, epsilon >= 0 and C >= 0");
    }
    model_.weights.assign(dim, 0.0);
    if (params_.standardize) {
        scaler_.emplace(dim);
    }
}

double PaRegressor::predict(std::span<const double> x) const {
    if (scaler_) {
        const auto z = scaler_->transform(x);
        return model_.predict(z);
    }
    return model_.predict(x);
}

void PaRegressor::learn(std::span<const double> x, double y) {
    check_dims(model_.weights.size(), x.size());
    check_finite_input(x, y);
    const auto saved_model = model_;
    const auto saved_scaler = scaler_;

    std::vector<double> z;
    std::span<const double> input = x;
    if (scaler_) {
        z = scaler_->update_and_transform(x);
        input = z;
    }
    const double residual = y - model_.predict(input);
    const double loss = std::max(0.0, std::fabs(residual) - params_.epsilon);
    if (loss > 0.0) {
        double tau = loss / (squared_norm(input) + 1.0);
        if (params_.variant == PaVariant::PA1) {
            tau = std::min(params_.C, tau);
        }
        const double step = residual > 0.0 ? tau : -tau;
        for (std::size_t i = 0; i < input.size(); ++i) {
            model_.weights[i] += step * input[i];
        }
        model_.bias += step;
    }
    if (!all_finite(model_)) {
        model_ = saved_model;
        scaler_ = saved_scaler;
        throw NumericError("PA update diverged; state rolled back");
    }
    ++updates_;
}

nlohmann::json PaRegressor::snapshot() const {
    return {{"kind", "pa"},
            {"epsilon", params_.epsilon},
            {"C", params_.C},
            {"variant", params_.variant == PaVariant::PA ? "pa" : "pa-i"},
            {"standardize", params_.standardize},
            {"updates", updates_},
            {"weights", model_.weights},
            {"bias", model_.bias},
            {"scaler", scaler_ ? scaler_->snapshot() : nlohmann::json(nullptr)}};
}

std::size_t PaRegressor::logical_bytes() const noexcept {
    return 16 + 8 * 2 + 1 + 8 + 8 * model_.weights.size() + 8 + (scaler_ ? scaler_->logical_bytes() : 0);
}

}  // namespace edgecast
