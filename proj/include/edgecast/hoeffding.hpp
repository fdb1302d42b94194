#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "edgecast/adwin.hpp"
#include "edgecast/data.hpp"
#include "edgecast/linear.hpp"
#include "edgecast/rng.hpp"

namespace edgecast {

/// eps = sqrt(R^2 ln(1/delta) / (2n)).
double hoeffding_bound(double range, double delta, double n);

/// Weighted count, mean and sum of squared deviations of a target stream.
class VarianceStats {
  public:
    void add(double y, double w = 1.0);
    void merge(const VarianceStats& other);
    /// Same mean and variance, weight multiplied by `factor`.
    VarianceStats scaled(double factor) const;

    double weight() const noexcept { return n_; }
    double mean() const noexcept { return n_ > 0.0 ? mean_ : 0.0; }
    double m2() const noexcept { return m2_; }
    double sum() const noexcept { return n_ * mean_; }
    double sq_sum() const noexcept { return m2_ + n_ * mean_ * mean_; }
    /// Population variance (>= 0).
    double variance() const noexcept;

  private:
    double n_ = 0.0;
    double mean_ = 0.0;
    double m2_ = 0.0;
};

/// Var(parent) - (n_l/n) Var(left) - (n_r/n) Var(right), in closed form.
double variance_reduction(const VarianceStats& left, const VarianceStats& right);

struct SplitCandidate {
    std::size_t feature = 0;
    double threshold = 0.0;  // x <= threshold goes left
    double merit = 0.0;
    VarianceStats left;
    VarianceStats right;
};

/// Per-feature split statistics: an ordered set of disjoint value intervals, each
/// carrying the target statistics of the values that fell into it. Distinct values get
/// their own interval until `capacity` is reached; beyond that the adjacent pair with the
/// smallest combined weight is merged, which keeps intervals close to equal-frequency.
/// Candidate thresholds are the midpoints between neighbouring intervals.
class SplitObserver {
  public:
    struct Bin {
        double lo = 0.0;
        double hi = 0.0;
        VarianceStats stats;
    };

    explicit SplitObserver(std::size_t capacity = 64);

    void add(double x, double y, double w = 1.0);
    /// Best threshold on this observer; ties keep the lowest threshold.
    std::optional<SplitCandidate> best_split(std::size_t feature) const;

    const std::vector<Bin>& bins() const noexcept { return bins_; }
    std::size_t capacity() const noexcept { return capacity_; }
    VarianceStats total() const;

  private:
    std::size_t capacity_;
    std::vector<Bin> bins_;
};

/// Statistics held by a tree leaf.
///
/// `observed` covers the instances that reached this leaf since it was created and is
/// mirrored exactly by every observer. `prior` is what the leaf inherited when its parent
/// split; it feeds predictions and the leaf total but not split search.
struct LeafStats {
    VarianceStats prior;
    VarianceStats observed;
    std::vector<std::size_t> features;
    std::vector<SplitObserver> observers;

    void add(std::span<const double> x, double y, double w);
    VarianceStats total() const;
};

/// Best candidate per observed feature, ordered by merit descending, ties by feature index.
std::vector<SplitCandidate> ranked_splits(const LeafStats& stats);
/// The top entry of ranked_splits, or nothing when fewer than two instances were observed.
std::optional<SplitCandidate> best_split(const LeafStats& stats);

/// Adaptive leaves keep both predictors and answer with the one whose running absolute
/// error (measured before each update) is lower.
enum class LeafMode { TargetMean, Perceptron, Adaptive };

struct HoeffdingParams {
    double delta = 1e-7;
    double grace_period = 200.0;
    double tie_threshold = 0.05;
    int depth_limit = 20;
    std::size_t threshold_cap = 64;
    LeafMode leaf_mode = LeafMode::Adaptive;
    double perceptron_rate = 0.01;
    /// Candidate features drawn per leaf; 0 or >= dim means all features.
    std::size_t subspace_size = 0;
};

struct HatParams {
    AdwinParams detector{};
    /// Errors compared when adjudicating an alternate: the last min(window, age) instances.
    std::size_t adjudication_window = 1000;
};

namespace detail {
struct Node;
}

/// Incremental regression tree with Hoeffding-bound split decisions on variance reduction.
/// When built through HatTree, internal nodes also carry an ADWIN detector over the
/// normalized absolute error and may grow alternate subtrees.
class HoeffdingTree {
  public:
    HoeffdingTree(std::size_t dim, HoeffdingParams params = {}, std::uint64_t seed = 0);
    ~HoeffdingTree();
    HoeffdingTree(HoeffdingTree&&) noexcept;
    HoeffdingTree& operator=(HoeffdingTree&&) noexcept;
    HoeffdingTree(const HoeffdingTree&) = delete;
    HoeffdingTree& operator=(const HoeffdingTree&) = delete;

    /// Throws ValidationError on dimension mismatch.
    double predict(std::span<const double> x) const;
    void learn(std::span<const double> x, double y, double weight = 1.0);
    void learn(const LagInstance& inst, double weight = 1.0) { learn(inst.features, inst.target, weight); }

    std::size_t dim() const noexcept { return dim_; }
    const HoeffdingParams& params() const noexcept { return params_; }
    /// Internal nodes plus leaves, alternates included.
    std::size_t node_count() const;
    std::size_t leaf_count() const;
    int depth() const;
    double learned_weight() const noexcept { return learned_weight_; }
    /// Total weights of the main tree's leaves, left to right.
    std::vector<double> leaf_weights() const;
    /// Visits every leaf of the main tree (alternates excluded).
    void for_each_leaf(const std::function<void(const LeafStats&, int depth)>& fn) const;
    /// Feature and threshold of the root, if it has split.
    std::optional<std::pair<std::size_t, double>> root_split() const;

    std::uint64_t replacements() const noexcept { return replacements_; }
    std::uint64_t alternates_started() const noexcept { return alternates_started_; }
    std::size_t active_alternates() const;

    nlohmann::json snapshot() const;
    std::size_t logical_bytes() const;

  private:
    friend class HatTree;
    HoeffdingTree(std::size_t dim, HoeffdingParams params, std::uint64_t seed, std::optional<HatParams> hat);

    std::unique_ptr<detail::Node> make_leaf(int depth);
    void learn_node(std::unique_ptr<detail::Node>& slot, std::span<const double> x, double y, double w,
                    double abs_err);
    void learn_leaf(detail::Node& node, std::span<const double> x, double y, double w);
    void attempt_split(detail::Node& node);
    bool adjudicate(std::unique_ptr<detail::Node>& slot);
    double normalized_error(double abs_err) const;

    std::size_t dim_;
    HoeffdingParams params_;
    std::uint64_t seed_;
    std::optional<HatParams> hat_;
    Rng rng_;
    std::unique_ptr<detail::Node> root_;
    double learned_weight_ = 0.0;
    double target_min_ = 0.0;
    double target_max_ = 0.0;
    std::uint64_t replacements_ = 0;
    std::uint64_t alternates_started_ = 0;
};

/// Hoeffding Adaptive Tree: a HoeffdingTree whose internal nodes monitor their error with
/// ADWIN. A detected error increase starts an alternate subtree at that node; the
/// alternate replaces the node's subtree once its recent mean absolute error is lower.
class HatTree {
  public:
    HatTree(std::size_t dim, HoeffdingParams params = {}, HatParams hat = {}, std::uint64_t seed = 0);

    double predict(std::span<const double> x) const { return tree_.predict(x); }
    void learn(std::span<const double> x, double y, double weight = 1.0) { tree_.learn(x, y, weight); }
    void learn(const LagInstance& inst) { tree_.learn(inst); }

    const HoeffdingTree& tree() const noexcept { return tree_; }
    std::size_t node_count() const { return tree_.node_count(); }
    std::uint64_t replacements() const noexcept { return tree_.replacements(); }
    std::uint64_t alternates_started() const noexcept { return tree_.alternates_started(); }

    nlohmann::json snapshot() const;
    std::size_t logical_bytes() const { return tree_.logical_bytes(); }

  private:
    HoeffdingTree tree_;
};

}  // namespace edgecast
