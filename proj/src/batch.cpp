#include "edgecast/batch.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "edgecast/error.hpp"
#include "edgecast/rng.hpp"

namespace edgecast {

namespace {

void check_dataset(const LagDataset& train) {
    if (train.empty()) {
        throw ValidationError("cannot fit on an empty dataset");
    }
    if (train.window_size == 0) {
        throw ValidationError("dataset window size must be positive");
    }
    for (const auto& inst : train.instances) {
        if (inst.features.size() != train.window_size) {
            throw ValidationError("instance feature length differs from the window size");
        }
    }
}

}  // namespace

// --- OLS -------------------------------------------------------------------

LinearModel ols_fit(const LagDataset& train) {
    check_dataset(train);
    const std::size_t L = train.window_size;
    if (train.size() < L + 1) {
        throw ValidationError("OLS needs at least " + std::to_string(L + 1) + " instances, got " +
                              std::to_string(train.size()));
    }
    const auto p = static_cast<Eigen::Index>(L + 1);
    Eigen::MatrixXd gram = Eigen::MatrixXd::Zero(p, p);
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(p);
    Eigen::VectorXd row(p);
    for (const auto& inst : train.instances) {
        for (std::size_t j = 0; j < L; ++j) {
            row[static_cast<Eigen::Index>(j)] = inst.features[j];
        }
        row[p - 1] = 1.0;
        gram.selfadjointView<Eigen::Lower>().rankUpdate(row);
        rhs += inst.target * row;
    }
    gram = gram.selfadjointView<Eigen::Lower>();
    gram.diagonal().array() += 1e-8;
    const Eigen::VectorXd beta = gram.ldlt().solve(rhs);
    if (!beta.allFinite()) {
        throw NumericError("OLS solve produced non-finite coefficients");
    }
    LinearModel model;
    model.weights.assign(beta.data(), beta.data() + L);
    model.bias = beta[p - 1];
    return model;
}

// --- CART ------------------------------------------------------------------

RegressionTree::RegressionTree(std::size_t dim, CartParams params, std::vector<Node> nodes)
    : dim_(dim), params_(params), nodes_(std::move(nodes)) {}

double RegressionTree::predict(std::span<const double> x) const {
    if (x.size() != dim_) {
        throw ValidationError("feature dimension mismatch: tree expects " + std::to_string(dim_) + ", got " +
                              std::to_string(x.size()));
    }
    std::size_t i = 0;
    while (nodes_[i].feature >= 0) {
        const auto& n = nodes_[i];
        i = static_cast<std::size_t>(x[static_cast<std::size_t>(n.feature)] <= n.threshold ? n.left : n.right);
    }
    return nodes_[i].value;
}

std::size_t RegressionTree::leaf_count() const {
    return static_cast<std::size_t>(
        std::count_if(nodes_.begin(), nodes_.end(), [](const Node& n) { return n.feature < 0; }));
}

int RegressionTree::depth() const {
    if (nodes_.empty()) {
        return 0;
    }
    std::vector<int> d(nodes_.size(), 0);
    int best = 0;
    // Children always follow their parent in the array.
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
        best = std::max(best, d[i]);
        if (nodes_[i].feature >= 0) {
            d[static_cast<std::size_t>(nodes_[i].left)] = d[i] + 1;
            d[static_cast<std::size_t>(nodes_[i].right)] = d[i] + 1;
        }
    }
    return best;
}

nlohmann::json RegressionTree::snapshot() const {
    nlohmann::json nodes = nlohmann::json::array();
    for (const auto& n : nodes_) {
        nodes.push_back({{"feature", n.feature},
                         {"threshold", n.threshold},
                         {"left", n.left},
                         {"right", n.right},
                         {"value", n.value},
                         {"samples", n.samples}});
    }
    return {{"format_version", 1},
            {"model", "cart"},
            {"dim", dim_},
            {"params",
             {{"max_depth", params_.max_depth},
              {"min_samples_split", params_.min_samples_split},
              {"min_samples_leaf", params_.min_samples_leaf}}},
            {"nodes", std::move(nodes)}};
}

std::size_t RegressionTree::logical_bytes() const noexcept {
    return 16 + 2 * 8 + (16 + 3 * 8) + nodes_.size() * (16 + 6 * 8);
}

namespace {

struct BestSplit {
    int feature = -1;
    double threshold = 0.0;
    double gain = 0.0;
    std::size_t left_count = 0;
};

/// Grows one tree. Rows are slots into `rows` (a bootstrap sample may repeat instances);
/// order[f] lists the slots sorted by feature f, and every node owns the same contiguous
/// range in all of them.
class TreeBuilder {
  public:
    TreeBuilder(const LagDataset& data, std::vector<std::size_t> rows, CartParams params, std::size_t k, Rng* rng)
        : data_(data), rows_(std::move(rows)), params_(params), k_(k), rng_(rng), dim_(data.window_size) {
        const std::size_t n = rows_.size();
        order_.assign(dim_, std::vector<std::uint32_t>(n));
        for (std::size_t f = 0; f < dim_; ++f) {
            auto& o = order_[f];
            std::iota(o.begin(), o.end(), 0U);
            std::stable_sort(o.begin(), o.end(), [&](std::uint32_t a, std::uint32_t b) { return x(a, f) < x(b, f); });
        }
        goes_left_.assign(n, 0);
    }

    std::vector<RegressionTree::Node> build() {
        struct Task {
            std::size_t node, begin, end;
            int depth;
        };
        nodes_.clear();
        nodes_.emplace_back();
        std::vector<Task> stack{{0, 0, rows_.size(), 0}};
        while (!stack.empty()) {
            const Task t = stack.back();
            stack.pop_back();
            double sum = 0.0;
            for (std::size_t i = t.begin; i < t.end; ++i) {
                sum += y(order_[0][i]);
            }
            const std::size_t n = t.end - t.begin;
            nodes_[t.node].samples = n;
            nodes_[t.node].value = sum / static_cast<double>(n);

            if (t.depth >= params_.max_depth || n < params_.min_samples_split || n < 2 * params_.min_samples_leaf ||
                constant_target(t.begin, t.end)) {
                continue;
            }
            const BestSplit split = find_split(t.begin, t.end, sum);
            if (split.feature < 0) {
                continue;
            }
            partition(t.begin, t.end, split);
            const std::size_t mid = t.begin + split.left_count;
            auto& node = nodes_[t.node];
            node.feature = split.feature;
            node.threshold = split.threshold;
            node.left = static_cast<int>(nodes_.size());
            node.right = static_cast<int>(nodes_.size() + 1);
            nodes_.emplace_back();
            nodes_.emplace_back();
            const auto left = static_cast<std::size_t>(nodes_[t.node].left);
            stack.push_back({left + 1, mid, t.end, t.depth + 1});
            stack.push_back({left, t.begin, mid, t.depth + 1});
        }
        return std::move(nodes_);
    }

  private:
    double x(std::uint32_t slot, std::size_t f) const { return data_.instances[rows_[slot]].features[f]; }
    double y(std::uint32_t slot) const { return data_.instances[rows_[slot]].target; }

    bool constant_target(std::size_t begin, std::size_t end) const {
        const double first = y(order_[0][begin]);
        for (std::size_t i = begin + 1; i < end; ++i) {
            if (y(order_[0][i]) != first) {
                return false;
            }
        }
        return true;
    }

    void evaluate_feature(std::size_t f, std::size_t begin, std::size_t end, double total, BestSplit& best) const {
        const auto& o = order_[f];
        const std::size_t n = end - begin;
        const std::size_t min_leaf = std::max<std::size_t>(1, params_.min_samples_leaf);
        const double mean_all = total / static_cast<double>(n);
        double left_sum = 0.0;
        for (std::size_t i = begin; i + 1 < end; ++i) {
            left_sum += y(o[i]);
            const std::size_t nl = i + 1 - begin;
            const std::size_t nr = n - nl;
            const double lo = x(o[i], f);
            const double hi = x(o[i + 1], f);
            if (nl < min_leaf || nr < min_leaf || !(lo < hi)) {
                continue;
            }
            // n * (variance reduction) = nl * nr / n * (mean_l - mean_r)^2, computed from deviations.
            const double dl = left_sum / static_cast<double>(nl) - mean_all;
            const double gain = static_cast<double>(nl) * dl * dl * static_cast<double>(n) / static_cast<double>(nr);
            if (gain > best.gain || (gain == best.gain && best.feature >= 0 && static_cast<int>(f) < best.feature)) {
                double threshold = 0.5 * (lo + hi);
                if (!(threshold < hi)) {
                    threshold = lo;
                }
                best = {static_cast<int>(f), threshold, gain, nl};
            }
        }
    }

    bool constant_feature(std::size_t f, std::size_t begin, std::size_t end) const {
        return !(x(order_[f][begin], f) < x(order_[f][end - 1], f));
    }

    BestSplit find_split(std::size_t begin, std::size_t end, double total) {
        BestSplit best;
        if (rng_ == nullptr || k_ >= dim_) {
            for (std::size_t f = 0; f < dim_; ++f) {
                evaluate_feature(f, begin, end, total, best);
            }
            return best;
        }
        std::vector<std::size_t> features(dim_);
        std::iota(features.begin(), features.end(), std::size_t{0});
        std::size_t evaluated = 0;
        for (std::size_t i = 0; i < dim_ && evaluated < k_; ++i) {
            const std::size_t j = i + static_cast<std::size_t>((*rng_)() % (dim_ - i));
            std::swap(features[i], features[j]);
            const std::size_t f = features[i];
            if (constant_feature(f, begin, end)) {
                continue;
            }
            evaluate_feature(f, begin, end, total, best);
            ++evaluated;
        }
        return best;
    }

    void partition(std::size_t begin, std::size_t end, const BestSplit& split) {
        const auto sf = static_cast<std::size_t>(split.feature);
        for (std::size_t i = begin; i < end; ++i) {
            const auto slot = order_[sf][i];
            goes_left_[slot] = x(slot, sf) <= split.threshold ? 1 : 0;
        }
        for (std::size_t f = 0; f < dim_; ++f) {
            auto& o = order_[f];
            std::stable_partition(o.begin() + static_cast<std::ptrdiff_t>(begin),
                                  o.begin() + static_cast<std::ptrdiff_t>(end),
                                  [&](std::uint32_t slot) { return goes_left_[slot] != 0; });
        }
    }

    const LagDataset& data_;
    std::vector<std::size_t> rows_;
    CartParams params_;
    std::size_t k_;
    Rng* rng_;
    std::size_t dim_;
    std::vector<std::vector<std::uint32_t>> order_;
    std::vector<char> goes_left_;
    std::vector<RegressionTree::Node> nodes_;
};

void check_cart_params(const CartParams& p) {
    if (p.max_depth < 1 || p.min_samples_split < 1 || p.min_samples_leaf < 1) {
        throw ValidationError("CART parameters must be positive");
    }
}

CartParams capped(CartParams p) {
    p.max_depth = std::min(p.max_depth, 30);
    return p;
}

}  // namespace

RegressionTree cart_fit(const LagDataset& train, CartParams params) {
    check_dataset(train);
    check_cart_params(params);
    params = capped(params);
    std::vector<std::size_t> rows(train.size());
    std::iota(rows.begin(), rows.end(), std::size_t{0});
    TreeBuilder builder(train, std::move(rows), params, train.window_size, nullptr);
    return RegressionTree(train.window_size, params, builder.build());
}

// --- Random forest ---------------------------------------------------------

RandomForest::RandomForest(std::size_t dim, ForestParams params, std::vector<RegressionTree> trees)
    : dim_(dim), params_(params), trees_(std::move(trees)) {}

double RandomForest::predict(std::span<const double> x) const {
    std::vector<double> preds(trees_.size());
    for (std::size_t t = 0; t < trees_.size(); ++t) {
        preds[t] = trees_[t].predict(x);
    }
    std::sort(preds.begin(), preds.end());
    double s = 0.0;
    for (double p : preds) {
        s += p;
    }
    return s / static_cast<double>(preds.size());
}

nlohmann::json RandomForest::snapshot() const {
    nlohmann::json trees = nlohmann::json::array();
    for (const auto& t : trees_) {
        trees.push_back(t.snapshot());
    }
    return {{"format_version", 1},
            {"model", "rf"},
            {"dim", dim_},
            {"seed", params_.seed},
            {"params",
             {{"n_trees", params_.n_trees},
              {"bootstrap", params_.bootstrap},
              {"features_per_split", params_.features_per_split},
              {"max_depth", params_.tree.max_depth},
              {"min_samples_split", params_.tree.min_samples_split},
              {"min_samples_leaf", params_.tree.min_samples_leaf}}},
            {"trees", std::move(trees)}};
}

std::size_t RandomForest::logical_bytes() const noexcept {
    std::size_t bytes = 16 + 3 * 8 + (16 + 5 * 8 + 1);
    for (const auto& t : trees_) {
        bytes += t.logical_bytes();
    }
    return bytes;
}

RandomForest rf_fit(const LagDataset& train, ForestParams params) {
    check_dataset(train);
    check_cart_params(params.tree);
    params.tree = capped(params.tree);
    const std::size_t L = train.window_size;
    if (params.n_trees < 1) {
        throw ValidationError("forest needs at least one tree");
    }
    if (params.features_per_split == 0) {
        params.features_per_split = std::max<std::size_t>(1, (L + 2) / 3);
    }
    if (params.features_per_split > L) {
        throw ValidationError("features_per_split must lie in [1, L]");
    }
    const std::size_t n = train.size();
    std::vector<RegressionTree> trees(params.n_trees);
    for_each_index(
        params.n_trees, params.execution,
        [&](std::size_t t) {
            Rng rng(mix_seed({params.seed, t}));
            std::vector<std::size_t> rows(n);
            if (params.bootstrap) {
                for (auto& r : rows) {
                    r = static_cast<std::size_t>(rng() % n);
                }
            } else {
                std::iota(rows.begin(), rows.end(), std::size_t{0});
            }
            TreeBuilder builder(train, std::move(rows), params.tree, params.features_per_split, &rng);
            trees[t] = RegressionTree(L, params.tree, builder.build());
        },
        params.threads);
    return RandomForest(L, params, std::move(trees));
}

}  // namespace edgecast
