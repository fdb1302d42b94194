#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "edgecast/data.hpp"
#include "edgecast/linear.hpp"
#include "edgecast/parallel.hpp"

namespace edgecast {

/// Least squares through the normal equations, with 1e-8 added to the Gram diagonal.
/// Needs at least L + 1 instances.
LinearModel ols_fit(const LagDataset& train);

struct CartParams {
    int max_depth = 30;
    std::size_t min_samples_split = 2;
    std::size_t min_samples_leaf = 1;
};

/// Regression tree with nodes stored in a flat array; node 0 is the root.
class RegressionTree {
  public:
    struct Node {
        int feature = -1;  // -1 marks a leaf
        double threshold = 0.0;
        int left = -1;
        int right = -1;
        double value = 0.0;
        std::size_t samples = 0;
    };

    RegressionTree() = default;
    RegressionTree(std::size_t dim, CartParams params, std::vector<Node> nodes);

    double predict(std::span<const double> x) const;

    std::size_t dim() const noexcept { return dim_; }
    const CartParams& params() const noexcept { return params_; }
    const std::vector<Node>& nodes() const noexcept { return nodes_; }
    std::size_t node_count() const noexcept { return nodes_.size(); }
    std::size_t leaf_count() const;
    int depth() const;

    nlohmann::json snapshot() const;
    std::size_t logical_bytes() const noexcept;

  private:
    std::size_t dim_ = 0;
    CartParams params_{};
    std::vector<Node> nodes_;
};

/// Greedy variance-reduction splits over every midpoint of sorted distinct feature values.
/// Ties go to the lowest feature index, then the lowest threshold.
RegressionTree cart_fit(const LagDataset& train, CartParams params = {});

struct ForestParams {
    std::size_t n_trees = 100;
    bool bootstrap = true;
    std::size_t features_per_split = 0;  // 0: ceil(L / 3)
    std::uint64_t seed = 0;
    CartParams tree{};
    Execution execution = Execution::Parallel;
    int threads = 0;
};

class RandomForest {
  public:
    RandomForest(std::size_t dim, ForestParams params, std::vector<RegressionTree> trees);

    /// Mean over trees, independent of tree order.
    double predict(std::span<const double> x) const;

    const std::vector<RegressionTree>& trees() const noexcept { return trees_; }
    const ForestParams& params() const noexcept { return params_; }
    std::size_t features_per_split() const noexcept { return params_.features_per_split; }

    nlohmann::json snapshot() const;
    std::size_t logical_bytes() const noexcept;

  private:
    std::size_t dim_;
    ForestParams params_;
    std::vector<RegressionTree> trees_;
};

/// Tree t is grown from seed mix_seed({seed, t}); serial and parallel execution agree.
RandomForest rf_fit(const LagDataset& train, ForestParams params = {});

}  // namespace edgecast
