#pragma once

#include <cstddef>
#include <cstdint>
#include <deque>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace edgecast {

enum class DriftSignal { None, Change };

struct AdwinParams {
    double delta = 0.002;
    std::size_t max_buckets = 5;  // M: buckets kept per level before two merge upward
    std::size_t min_clock = 32;   // updates between cut checks
};

/// Cut bound for subwindows of sizes n0 and n1:
///   eps = sqrt((2/m) var ln(2/delta')) + (2/(3m)) ln(2/delta'),  m = 1/(1/n0 + 1/n1).
double adwin_cut_threshold(double n0, double n1, double variance, double delta_prime);

/// Adaptive windowing change detector over an exponential histogram.
///
/// Level i holds buckets that summarize 2^i consecutive values. Each level keeps at most
/// `max_buckets` buckets; on overflow the two oldest merge into one bucket of the next
/// level. Every `min_clock` updates all boundaries between adjacent buckets are tested as
/// split points W0|W1; when the subwindow means differ by at least the cut bound, the
/// older subwindow W0 is dropped and the update reports Change. The per-test confidence
/// is delta divided by the number of boundaries tested.
class AdwinDetector {
  public:
    struct Bucket {
        double sum = 0.0;
        double sq_sum = 0.0;
        std::uint64_t count = 0;
    };

    explicit AdwinDetector(AdwinParams params = {});

    /// Throws ValidationError for non-finite input.
    DriftSignal update(double value);

    std::uint64_t width() const noexcept { return width_; }
    double total() const noexcept { return total_; }
    double sq_total() const noexcept { return sq_total_; }
    double mean() const noexcept;
    /// Population variance of the retained window.
    double variance() const noexcept;
    std::size_t bucket_count() const noexcept;
    std::uint64_t detections() const noexcept { return detections_; }
    std::uint64_t updates() const noexcept { return updates_; }
    const AdwinParams& params() const noexcept { return params_; }

    /// Buckets from oldest to newest.
    std::vector<Bucket> buckets_oldest_first() const;

    void reset();

    nlohmann::json snapshot() const;
    std::size_t logical_bytes() const noexcept;

  private:
    void compress();
    bool detect_and_cut();
    void drop_oldest();

    AdwinParams params_;
    // levels_[i] ordered oldest (front) to newest (back); higher levels are older.
    std::vector<std::deque<Bucket>> levels_;
    std::uint64_t width_ = 0;
    double total_ = 0.0;
    double sq_total_ = 0.0;
    std::uint64_t updates_ = 0;
    std::uint64_t detections_ = 0;
};

}  // namespace edgecast
