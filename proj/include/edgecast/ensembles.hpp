#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "edgecast/adwin.hpp"
#include "edgecast/hoeffding.hpp"
#include "edgecast/parallel.hpp"
#include "edgecast/rng.hpp"

namespace edgecast {

enum class EnsembleKind { Arf, Srp };

struct EnsembleConfig {
    std::size_t n_models = 10;
    double lambda = 6.0;
    /// 0 picks the default (ARF: ceil(sqrt L) + 1 per leaf, SRP: round(0.6 L) per member),
    /// a value in (0, 1) is a fraction of L, anything else a feature count.
    double subspace = 0.0;
    double warning_delta = 0.01;
    double drift_delta = 0.002;
    std::uint64_t seed = 0;
    HoeffdingParams tree{};
    Execution execution = Execution::Parallel;
    int threads = 0;

    // Test hooks.
    std::optional<unsigned> fixed_weight;  // replaces the Poisson draw
    bool detectors_enabled = true;
};

/// Subspace size the config resolves to for window size `dim`.
std::size_t resolve_subspace(EnsembleKind kind, const EnsembleConfig& cfg, std::size_t dim);

/// Online bagging ensemble of Hoeffding trees with per-member ADWIN warning and drift
/// detectors. ARF members see every feature and draw a random candidate subset at each
/// leaf; SRP members are bound to a fixed random feature patch.
///
/// A warning starts a background tree that trains alongside the member; a drift replaces
/// the member's tree with the background tree (or a fresh leaf). Detectors see the
/// member's absolute error scaled by the ensemble's running target range and only react
/// when the monitored error increased.
class StreamingEnsemble {
  public:
    StreamingEnsemble(EnsembleKind kind, std::size_t dim, EnsembleConfig cfg = {});
    ~StreamingEnsemble();
    StreamingEnsemble(StreamingEnsemble&&) noexcept;
    StreamingEnsemble& operator=(StreamingEnsemble&&) noexcept;

    /// Mean of member predictions.
    double predict(std::span<const double> x) const;
    void learn(std::span<const double> x, double y);

    EnsembleKind kind() const noexcept { return kind_; }
    std::size_t dim() const noexcept { return dim_; }
    std::size_t size() const noexcept;
    const EnsembleConfig& config() const noexcept { return cfg_; }
    std::size_t subspace_size() const noexcept { return subspace_; }

    std::vector<double> member_predictions(std::span<const double> x) const;
    /// Feature indices seen by member i (all features for ARF).
    const std::vector<std::size_t>& patch(std::size_t i) const;
    const HoeffdingTree& member_tree(std::size_t i) const;
    bool has_background(std::size_t i) const;
    std::size_t member_bytes(std::size_t i) const;
    /// Drift-triggered tree replacements over all members.
    std::uint64_t replacements() const noexcept;
    std::uint64_t warnings() const noexcept;
    /// Sum of the Poisson weights drawn for the most recent instance.
    std::uint64_t last_total_weight() const noexcept { return last_total_weight_; }

    nlohmann::json snapshot() const;
    std::size_t logical_bytes() const;

  private:
    struct Member;

    double normalized_error(double abs_err) const;
    void learn_member(Member& m, std::span<const double> x, double y);
    HoeffdingTree make_tree(std::size_t index, std::uint64_t generation, std::size_t patch_size) const;
    void draw_patch(Member& m);

    EnsembleKind kind_;
    std::size_t dim_;
    EnsembleConfig cfg_;
    std::size_t subspace_;
    std::vector<Member> members_;
    double target_min_ = 0.0;
    double target_max_ = 0.0;
    std::uint64_t seen_ = 0;
    std::uint64_t last_total_weight_ = 0;
};

inline StreamingEnsemble make_arf(std::size_t dim, EnsembleConfig cfg = {}) {
    return StreamingEnsemble(EnsembleKind::Arf, dim, cfg);
}
inline StreamingEnsemble make_srp(std::size_t dim, EnsembleConfig cfg = {}) {
    return StreamingEnsemble(EnsembleKind::Srp, dim, cfg);
}

}  // namespace edgecast
