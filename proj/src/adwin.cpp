#include "edgecast/adwin.hpp"

#include <algorithm>
#include <cmath>

#include <nlohmann/json.hpp>

#include "edgecast/error.hpp"

namespace edgecast {

double adwin_cut_threshold(double n0, double n1, double variance, double delta_prime) {
    if (!(n0 >= 1.0) || !(n1 >= 1.0)) {
        throw ValidationError("ADWIN subwindows must each hold at least one value");
    }
    if (!(variance >= 0.0) || !(delta_prime > 0.0 && delta_prime <= 1.0)) {
        throw ValidationError("ADWIN cut bound needs variance >= 0 and delta' in (0, 1]");
    }
    const double m = 1.0 / (1.0 / n0 + 1.0 / n1);
    const double log_term = std::log(2.0 / delta_prime);
    return std::sqrt((2.0 / m) * variance * log_term) + (2.0 / (3.0 * m)) * log_term;
}

AdwinDetector::AdwinDetector(AdwinParams params) : params_(params) {
    if (!(params_.delta > 0.0 && params_.delta < 1.0) || params_.max_buckets < 1 || params_.min_clock < 1) {
        throw ValidationError("ADWIN needs delta in (0,1), max_buckets >= 1, min_clock >= 1");
    }
}

void AdwinDetector::reset() {
    levels_.clear();
    width_ = 0;
    total_ = 0.0;
    sq_total_ = 0.0;
    updates_ = 0;
    detections_ = 0;
}

double AdwinDetector::mean() const noexcept {
    return width_ == 0 ? 0.0 : total_ / static_cast<double>(width_);
}

double AdwinDetector::variance() const noexcept {
    if (width_ == 0) {
        return 0.0;
    }
    const double n = static_cast<double>(width_);
    const double mu = total_ / n;
    return std::max(0.0, sq_total_ / n - mu * mu);
}

std::size_t AdwinDetector::bucket_count() const noexcept {
    std::size_t n = 0;
    for (const auto& level : levels_) {
        n += level.size();
    }
    return n;
}

std::vector<AdwinDetector::Bucket> AdwinDetector::buckets_oldest_first() const {
    std::vector<Bucket> out;
    out.reserve(bucket_count());
    for (auto level = levels_.rbegin(); level != levels_.rend(); ++level) {
        out.insert(out.end(), level->begin(), level->end());
    }
    return out;
}

DriftSignal AdwinDetector::update(double value) {
    if (!std::isfinite(value)) {
        throw ValidationError("ADWIN input must be finite");
    }
    if (levels_.empty()) {
        levels_.emplace_back();
    }
    levels_[0].push_back({value, value * value, 1});
    ++width_;
    total_ += value;
    sq_total_ += value * value;
    ++updates_;
    compress();

    if (updates_ % params_.min_clock != 0) {
        return DriftSignal::None;
    }
    if (detect_and_cut()) {
        ++detections_;
        return DriftSignal::Change;
    }
    return DriftSignal::None;
}

void AdwinDetector::compress() {
    for (std::size_t i = 0; i < levels_.size(); ++i) {
        if (levels_[i].size() <= params_.max_buckets) {
            break;
        }
        Bucket a = levels_[i].front();
        levels_[i].pop_front();
        const Bucket b = levels_[i].front();
        levels_[i].pop_front();
        a.sum += b.sum;
        a.sq_sum += b.sq_sum;
        a.count += b.count;
        if (i + 1 == levels_.size()) {
            levels_.emplace_back();
        }
        levels_[i + 1].push_back(a);
    }
}

void AdwinDetector::drop_oldest() {
    while (!levels_.empty() && levels_.back().empty()) {
        levels_.pop_back();
    }
    if (levels_.empty()) {
        return;
    }
    const Bucket b = levels_.back().front();
    levels_.back().pop_front();
    width_ -= b.count;
    total_ -= b.sum;
    sq_total_ -= b.sq_sum;
    if (levels_.back().empty()) {
        levels_.pop_back();
    }
    if (width_ == 0) {
        total_ = 0.0;
        sq_total_ = 0.0;
    }
}

bool AdwinDetector::detect_and_cut() {
    bool cut_any = false;
    for (;;) {
        const auto buckets = buckets_oldest_first();
        if (buckets.size() < 2) {
            break;
        }
        const double delta_prime = params_.delta / static_cast<double>(buckets.size() - 1);
        const double var = variance();
        const double n = static_cast<double>(width_);
        double n0 = 0.0;
        double s0 = 0.0;
        std::size_t cut_at = buckets.size();
        for (std::size_t i = 0; i + 1 < buckets.size(); ++i) {
            n0 += static_cast<double>(buckets[i].count);
            s0 += buckets[i].sum;
            const double n1 = n - n0;
            const double u0 = s0 / n0;
            const double u1 = (total_ - s0) / n1;
            if (std::fabs(u0 - u1) >= adwin_cut_threshold(n0, n1, var, delta_prime)) {
                cut_at = i;
                break;
            }
        }
        if (cut_at == buckets.size()) {
            break;
        }
        for (std::size_t k = 0; k <= cut_at; ++k) {
            drop_oldest();
        }
        // Re-derive totals so repeated subtraction cannot drift from the buckets.
        total_ = 0.0;
        sq_total_ = 0.0;
        for (const auto& b : buckets_oldest_first()) {
            total_ += b.sum;
            sq_total_ += b.sq_sum;
        }
        cut_any = true;
    }
    return cut_any;
}

nlohmann::json AdwinDetector::snapshot() const {
    nlohmann::json buckets = nlohmann::json::array();
    for (const auto& b : buckets_oldest_first()) {
        buckets.push_back({{"sum", b.sum}, {"sq_sum", b.sq_sum}, {"count", b.count}});
    }
    return {{"kind", "adwin"},
            {"delta", params_.delta},
            {"max_buckets", params_.max_buckets},
            {"min_clock", params_.min_clock},
            {"width", width_},
            {"total", total_},
            {"sq_total", sq_total_},
            {"updates", updates_},
            {"detections", detections_},
            {"buckets", std::move(buckets)}};
}

std::size_t AdwinDetector::logical_bytes() const noexcept {
    // object header + 8 scalars + per bucket (header + 3 scalars)
    return 16 + 8 * 8 + bucket_count() * (16 + 3 * 8);
}

}  // namespace edgecast
