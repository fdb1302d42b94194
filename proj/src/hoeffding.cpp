#include "edgecast/hoeffding.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <numeric>

#include <nlohmann/json.hpp>

#include "edgecast/error.hpp"

namespace edgecast {

double hoeffding_bound(double range, double delta, double n) {
    if (!(range > 0.0) || !(delta > 0.0 && delta <= 1.0) || !(n >= 1.0)) {
        throw ValidationError("Hoeffding bound needs R > 0, delta in (0, 1] and n >= 1");
    }
    return std::sqrt(range * range * std::log(1.0 / delta) / (2.0 * n));
}

// --- VarianceStats ---------------------------------------------------------

void VarianceStats::add(double y, double w) {
    if (!(w > 0.0)) {
        return;
    }
    const double n = n_ + w;
    const double d = y - mean_;
    mean_ += d * w / n;
    m2_ += w * d * (y - mean_);
    n_ = n;
}

void VarianceStats::merge(const VarianceStats& other) {
    if (!(other.n_ > 0.0)) {
        return;
    }
    if (!(n_ > 0.0)) {
        *this = other;
        return;
    }
    const double n = n_ + other.n_;
    const double d = other.mean_ - mean_;
    mean_ += d * other.n_ / n;
    m2_ += other.m2_ + d * d * n_ * other.n_ / n;
    n_ = n;
}

VarianceStats VarianceStats::scaled(double factor) const {
    VarianceStats out = *this;
    out.n_ *= factor;
    out.m2_ *= factor;
    return out;
}

double VarianceStats::variance() const noexcept {
    return n_ > 0.0 ? std::max(0.0, m2_ / n_) : 0.0;
}

double variance_reduction(const VarianceStats& left, const VarianceStats& right) {
    const double nl = left.weight();
    const double nr = right.weight();
    if (!(nl > 0.0) || !(nr > 0.0)) {
        return 0.0;
    }
    const double n = nl + nr;
    const double d = left.mean() - right.mean();
    return (nl / n) * (nr / n) * d * d;
}

// --- SplitObserver ---------------------------------------------------------

SplitObserver::SplitObserver(std::size_t capacity) : capacity_(capacity) {
    if (capacity_ < 2) {
        throw ValidationError("split observer capacity must be at least 2");
    }
}

void SplitObserver::add(double x, double y, double w) {
    auto it = std::lower_bound(bins_.begin(), bins_.end(), x, [](const Bin& b, double v) { return b.hi < v; });
    if (it != bins_.end() && it->lo <= x) {
        it->stats.add(y, w);
        return;
    }
    Bin fresh{x, x, {}};
    fresh.stats.add(y, w);
    bins_.insert(it, fresh);
    if (bins_.size() <= capacity_) {
        return;
    }
    std::size_t best = 0;
    double best_weight = bins_[0].stats.weight() + bins_[1].stats.weight();
    for (std::size_t i = 1; i + 1 < bins_.size(); ++i) {
        const double wsum = bins_[i].stats.weight() + bins_[i + 1].stats.weight();
        if (wsum < best_weight) {
            best_weight = wsum;
            best = i;
        }
    }
    bins_[best].hi = bins_[best + 1].hi;
    bins_[best].stats.merge(bins_[best + 1].stats);
    bins_.erase(bins_.begin() + static_cast<std::ptrdiff_t>(best + 1));
}

VarianceStats SplitObserver::total() const {
    VarianceStats t;
    for (const auto& b : bins_) {
        t.merge(b.stats);
    }
    return t;
}

std::optional<SplitCandidate> SplitObserver::best_split(std::size_t feature) const {
    if (bins_.size() < 2) {
        return std::nullopt;
    }
    std::vector<VarianceStats> suffix(bins_.size());
    suffix.back() = bins_.back().stats;
    for (std::size_t i = bins_.size() - 1; i-- > 0;) {
        suffix[i] = suffix[i + 1];
        suffix[i].merge(bins_[i].stats);
    }
    std::optional<SplitCandidate> best;
    VarianceStats left;
    for (std::size_t i = 0; i + 1 < bins_.size(); ++i) {
        left.merge(bins_[i].stats);
        const double merit = variance_reduction(left, suffix[i + 1]);
        if (!best || merit > best->merit) {
            double threshold = 0.5 * (bins_[i].hi + bins_[i + 1].lo);
            if (!(threshold < bins_[i + 1].lo)) {
                threshold = bins_[i].hi;
            }
            best = SplitCandidate{feature, threshold, merit, left, suffix[i + 1]};
        }
    }
    return best;
}

// --- LeafStats -------------------------------------------------------------

void LeafStats::add(std::span<const double> x, double y, double w) {
    observed.add(y, w);
    for (std::size_t k = 0; k < features.size(); ++k) {
        observers[k].add(x[features[k]], y, w);
    }
}

VarianceStats LeafStats::total() const {
    VarianceStats t = prior;
    t.merge(observed);
    return t;
}

std::vector<SplitCandidate> ranked_splits(const LeafStats& stats) {
    std::vector<SplitCandidate> out;
    if (stats.observed.weight() < 2.0) {
        return out;
    }
    for (std::size_t k = 0; k < stats.features.size(); ++k) {
        if (auto c = stats.observers[k].best_split(stats.features[k])) {
            out.push_back(*c);
        }
    }
    std::stable_sort(out.begin(), out.end(), [](const SplitCandidate& a, const SplitCandidate& b) {
        if (a.merit != b.merit) {
            return a.merit > b.merit;
        }
        return a.feature < b.feature;
    });
    return out;
}

std::optional<SplitCandidate> best_split(const LeafStats& stats) {
    auto ranked = ranked_splits(stats);
    if (ranked.empty()) {
        return std::nullopt;
    }
    return ranked.front();
}

// --- Tree nodes ------------------------------------------------------------

namespace detail {

/// Paired recent absolute errors of a node's subtree and its alternate.
struct ErrorTracker {
    std::size_t window = 1000;
    std::uint64_t age = 0;
    std::deque<double> node_errors;
    std::deque<double> alt_errors;
    double node_sum = 0.0;
    double alt_sum = 0.0;

    void record(double node_err, double alt_err) {
        ++age;
        node_errors.push_back(node_err);
        alt_errors.push_back(alt_err);
        node_sum += node_err;
        alt_sum += alt_err;
        if (node_errors.size() > window) {
            node_sum -= node_errors.front();
            alt_sum -= alt_errors.front();
            node_errors.pop_front();
            alt_errors.pop_front();
        }
    }
    double node_mae() const { return node_errors.empty() ? 0.0 : node_sum / static_cast<double>(node_errors.size()); }
    double alt_mae() const { return alt_errors.empty() ? 0.0 : alt_sum / static_cast<double>(alt_errors.size()); }
};

struct Leaf {
    LeafStats stats;
    double last_attempt = 0.0;  // observed weight at the last split attempt
    std::optional<SgdRegressor> model;
    // Adaptive mode: weighted absolute errors of the mean and of the model, measured before learning.
    bool adaptive = false;
    double mean_error = 0.0;
    double model_error = 0.0;

    bool use_model() const { return model && (!adaptive || model_error < mean_error); }
};

struct Node {
    int depth = 0;
    // internal
    std::size_t feature = 0;
    double threshold = 0.0;
    std::unique_ptr<Node> left;
    std::unique_ptr<Node> right;
    // leaf
    std::unique_ptr<Leaf> leaf;
    // adaptive trees only
    std::unique_ptr<AdwinDetector> detector;
    std::unique_ptr<Node> alternate;
    std::unique_ptr<ErrorTracker> tracker;

    bool is_leaf() const noexcept { return leaf != nullptr; }
    const Node& child(std::span<const double> x) const { return x[feature] <= threshold ? *left : *right; }
    std::unique_ptr<Node>& child_slot(std::span<const double> x) { return x[feature] <= threshold ? left : right; }
};

}  // namespace detail

namespace {

using detail::Node;

double predict_node(const Node& start, std::span<const double> x) {
    const Node* node = &start;
    while (!node->is_leaf()) {
        node = &node->child(x);
    }
    const auto& leaf = *node->leaf;
    if (leaf.use_model()) {
        return leaf.model->predict(x);
    }
    return leaf.stats.total().mean();
}

std::size_t count_nodes(const Node& node) {
    std::size_t n = 1;
    if (!node.is_leaf()) {
        n += count_nodes(*node.left) + count_nodes(*node.right);
    }
    if (node.alternate) {
        n += count_nodes(*node.alternate);
    }
    return n;
}

std::size_t count_alternates(const Node& node) {
    std::size_t n = node.alternate ? 1 + count_alternates(*node.alternate) : 0;
    if (!node.is_leaf()) {
        n += count_alternates(*node.left) + count_alternates(*node.right);
    }
    return n;
}

void visit_leaves(const Node& node, const std::function<void(const LeafStats&, int)>& fn) {
    if (node.is_leaf()) {
        fn(node.leaf->stats, node.depth);
        return;
    }
    visit_leaves(*node.left, fn);
    visit_leaves(*node.right, fn);
}

nlohmann::json stats_json(const VarianceStats& s) {
    return {{"n", s.weight()}, {"mean", s.mean()}, {"m2", s.m2()}};
}
constexpr std::size_t kStatsBytes = 16 + 3 * 8;

nlohmann::json observer_json(std::size_t feature, const SplitObserver& obs) {
    nlohmann::json bins = nlohmann::json::array();
    for (const auto& b : obs.bins()) {
        bins.push_back({b.lo, b.hi, b.stats.weight(), b.stats.mean(), b.stats.m2()});
    }
    return {{"feature", feature}, {"capacity", obs.capacity()}, {"bins", std::move(bins)}};
}
// Observers are charged for their reserved capacity, five reals per interval.
std::size_t observer_bytes(const SplitObserver& obs) {
    return 16 + 8 + 8 + obs.capacity() * 5 * 8;
}

nlohmann::json node_json(const Node& node) {
    nlohmann::json j;
    if (node.is_leaf()) {
        const auto& leaf = *node.leaf;
        nlohmann::json observers = nlohmann::json::array();
        for (std::size_t k = 0; k < leaf.stats.features.size(); ++k) {
            observers.push_back(observer_json(leaf.stats.features[k], leaf.stats.observers[k]));
        }
        j = {{"kind", "leaf"},
             {"depth", node.depth},
             {"prior", stats_json(leaf.stats.prior)},
             {"observed", stats_json(leaf.stats.observed)},
             {"last_attempt", leaf.last_attempt},
             {"features", leaf.stats.features},
             {"observers", std::move(observers)}};
        if (leaf.model) {
            j["model"] = leaf.model->snapshot();
        }
        if (leaf.adaptive) {
            j["mean_error"] = leaf.mean_error;
            j["model_error"] = leaf.model_error;
        }
    } else {
        j = {{"kind", "split"},
             {"depth", node.depth},
             {"feature", node.feature},
             {"threshold", node.threshold},
             {"left", node_json(*node.left)},
             {"right", node_json(*node.right)}};
    }
    if (node.detector) {
        j["detector"] = node.detector->snapshot();
    }
    if (node.alternate) {
        j["alternate"] = node_json(*node.alternate);
    }
    if (node.tracker) {
        j["tracker"] = {{"age", node.tracker->age},
                        {"node_errors", node.tracker->node_errors},
                        {"alt_errors", node.tracker->alt_errors}};
    }
    return j;
}

std::size_t node_bytes(const Node& node) {
    std::size_t bytes = 0;
    if (node.is_leaf()) {
        const auto& leaf = *node.leaf;
        bytes += 16 + 8 + 2 * kStatsBytes + 8 + 8 * leaf.stats.features.size();
        for (const auto& obs : leaf.stats.observers) {
            bytes += observer_bytes(obs);
        }
        if (leaf.model) {
            bytes += leaf.model->logical_bytes();
        }
        if (leaf.adaptive) {
            bytes += 2 * 8;
        }
    } else {
        bytes += 16 + 3 * 8 + node_bytes(*node.left) + node_bytes(*node.right);
    }
    if (node.detector) {
        bytes += node.detector->logical_bytes();
    }
    if (node.alternate) {
        bytes += node_bytes(*node.alternate);
    }
    if (node.tracker) {
        bytes += 16 + 8 + 16 * node.tracker->node_errors.size();
    }
    return bytes;
}

const char* leaf_mode_name(LeafMode m) {
    switch (m) {
        case LeafMode::TargetMean: return "target_mean";
        case LeafMode::Perceptron: return "perceptron";
        default: return "adaptive";
    }
}

}  // namespace

// --- HoeffdingTree ---------------------------------------------------------

HoeffdingTree::HoeffdingTree(std::size_t dim, HoeffdingParams params, std::uint64_t seed)
    : HoeffdingTree(dim, params, seed, std::nullopt) {}

HoeffdingTree::HoeffdingTree(std::size_t dim, HoeffdingParams params, std::uint64_t seed, std::optional<HatParams> hat)
    : dim_(dim), params_(params), seed_(seed), hat_(hat), rng_(seed) {
    if (dim_ == 0) {
        throw ValidationError("tree dimension must be positive");
    }
    if (!(params_.delta > 0.0 && params_.delta < 1.0) || !(params_.grace_period >= 1.0) ||
        !(params_.tie_threshold >= 0.0) || params_.depth_limit < 0 || params_.threshold_cap < 2) {
        throw ValidationError("invalid Hoeffding tree parameters");
    }
    if (hat_ && hat_->adjudication_window == 0) {
        throw ValidationError("adjudication window must be positive");
    }
    root_ = make_leaf(0);
}

HoeffdingTree::~HoeffdingTree() = default;
HoeffdingTree::HoeffdingTree(HoeffdingTree&&) noexcept = default;
HoeffdingTree& HoeffdingTree::operator=(HoeffdingTree&&) noexcept = default;

std::unique_ptr<Node> HoeffdingTree::make_leaf(int depth) {
    auto node = std::make_unique<Node>();
    node->depth = depth;
    node->leaf = std::make_unique<detail::Leaf>();
    auto& features = node->leaf->stats.features;
    features.resize(dim_);
    std::iota(features.begin(), features.end(), std::size_t{0});
    const std::size_t k = params_.subspace_size;
    if (k > 0 && k < dim_) {
        for (std::size_t i = 0; i < k; ++i) {
            const std::size_t j = i + static_cast<std::size_t>(rng_() % (dim_ - i));
            std::swap(features[i], features[j]);
        }
        features.resize(k);
        std::sort(features.begin(), features.end());
    }
    node->leaf->stats.observers.assign(features.size(), SplitObserver(params_.threshold_cap));
    node->leaf->adaptive = params_.leaf_mode == LeafMode::Adaptive;
    if (params_.leaf_mode != LeafMode::TargetMean) {
        node->leaf->model.emplace(dim_, SgdParams{params_.perceptron_rate, LearningSchedule::Constant, 0.25, true});
    }
    return node;
}

double HoeffdingTree::predict(std::span<const double> x) const {
    if (x.size() != dim_) {
        throw ValidationError("feature dimension mismatch: tree expects " + std::to_string(dim_) + ", got " +
                              std::to_string(x.size()));
    }
    return predict_node(*root_, x);
}

double HoeffdingTree::normalized_error(double abs_err) const {
    const double range = target_max_ - target_min_;
    if (!(range > 0.0)) {
        return 0.0;
    }
    return std::clamp(abs_err / range, 0.0, 1.0);
}

void HoeffdingTree::learn(std::span<const double> x, double y, double weight) {
    if (x.size() != dim_) {
        throw ValidationError("feature dimension mismatch: tree expects " + std::to_string(dim_) + ", got " +
                              std::to_string(x.size()));
    }
    if (!std::isfinite(y) || !std::all_of(x.begin(), x.end(), [](double v) { return std::isfinite(v); })) {
        throw ValidationError("tree input must be finite");
    }
    if (!(weight >= 0.0)) {
        throw ValidationError("instance weight must be non-negative");
    }
    if (weight == 0.0) {
        return;
    }
    if (learned_weight_ == 0.0) {
        target_min_ = target_max_ = y;
    } else {
        target_min_ = std::min(target_min_, y);
        target_max_ = std::max(target_max_, y);
    }
    learned_weight_ += weight;
    const double abs_err = hat_ ? std::fabs(predict_node(*root_, x) - y) : 0.0;
    learn_node(root_, x, y, weight, abs_err);
}

void HoeffdingTree::learn_node(std::unique_ptr<Node>& slot, std::span<const double> x, double y, double w,
                               double abs_err) {
    Node& node = *slot;
    if (hat_ && !node.is_leaf()) {
        const double before = node.detector->mean();
        const bool changed = node.detector->update(normalized_error(abs_err)) == DriftSignal::Change;
        // Only an increase of the error is treated as drift.
        const bool worse = changed && node.detector->mean() > before;
        bool replaced = false;
        if (worse && !node.alternate) {
            node.alternate = make_leaf(node.depth);
            node.tracker = std::make_unique<detail::ErrorTracker>();
            node.tracker->window = hat_->adjudication_window;
            ++alternates_started_;
        } else if (node.alternate && node.tracker->age > 0 &&
                   (worse || node.tracker->age % static_cast<std::uint64_t>(params_.grace_period) == 0)) {
            replaced = adjudicate(slot);
        }
        if (replaced) {
            learn_node(slot, x, y, w, std::fabs(predict_node(*slot, x) - y));
            return;
        }
    }
    if (node.alternate) {
        const double alt_err = std::fabs(predict_node(*node.alternate, x) - y);
        node.tracker->record(abs_err, alt_err);
        learn_node(node.alternate, x, y, w, alt_err);
    }
    if (node.is_leaf()) {
        learn_leaf(node, x, y, w);
    } else {
        learn_node(node.child_slot(x), x, y, w, abs_err);
    }
}

bool HoeffdingTree::adjudicate(std::unique_ptr<Node>& slot) {
    Node& node = *slot;
    const auto& tracker = *node.tracker;
    if (static_cast<double>(tracker.age) < params_.grace_period) {
        return false;
    }
    if (tracker.alt_mae() < tracker.node_mae()) {
        auto alternate = std::move(node.alternate);
        slot = std::move(alternate);
        ++replacements_;
        return true;
    }
    if (tracker.age >= hat_->adjudication_window) {
        node.alternate.reset();
        node.tracker.reset();
    }
    return false;
}

void HoeffdingTree::learn_leaf(Node& node, std::span<const double> x, double y, double w) {
    auto& leaf = *node.leaf;
    if (leaf.adaptive) {
        leaf.mean_error += w * std::fabs(leaf.stats.total().mean() - y);
        leaf.model_error += w * std::fabs(leaf.model->predict(x) - y);
    }
    leaf.stats.add(x, y, w);
    if (leaf.model) {
        leaf.model->learn(x, y, w);
    }
    if (node.depth >= params_.depth_limit) {
        return;
    }
    if (leaf.stats.observed.weight() - leaf.last_attempt >= params_.grace_period) {
        leaf.last_attempt = leaf.stats.observed.weight();
        attempt_split(node);
    }
}

void HoeffdingTree::attempt_split(Node& node) {
    auto& leaf = *node.leaf;
    const auto ranked = ranked_splits(leaf.stats);
    if (ranked.empty() || !(ranked.front().merit > 0.0)) {
        return;
    }
    const auto& best = ranked.front();
    const double second = ranked.size() > 1 ? ranked[1].merit : 0.0;
    const double eps = hoeffding_bound(1.0, params_.delta, leaf.stats.observed.weight());
    if (!(second / best.merit < 1.0 - eps || eps < params_.tie_threshold)) {
        return;
    }

    const double observed = leaf.stats.observed.weight();
    auto left = make_leaf(node.depth + 1);
    auto right = make_leaf(node.depth + 1);
    left->leaf->stats.prior = best.left;
    left->leaf->stats.prior.merge(leaf.stats.prior.scaled(best.left.weight() / observed));
    right->leaf->stats.prior = best.right;
    right->leaf->stats.prior.merge(leaf.stats.prior.scaled(best.right.weight() / observed));
    if (leaf.model) {
        left->leaf->model = leaf.model;
        right->leaf->model = leaf.model;
    }
    node.feature = best.feature;
    node.threshold = best.threshold;
    node.left = std::move(left);
    node.right = std::move(right);
    node.leaf.reset();
    if (hat_) {
        node.detector = std::make_unique<AdwinDetector>(hat_->detector);
    }
}

std::size_t HoeffdingTree::node_count() const {
    return count_nodes(*root_);
}

std::size_t HoeffdingTree::leaf_count() const {
    std::size_t n = 0;
    visit_leaves(*root_, [&](const LeafStats&, int) { ++n; });
    return n;
}

int HoeffdingTree::depth() const {
    int d = 0;
    visit_leaves(*root_, [&](const LeafStats&, int depth) { d = std::max(d, depth); });
    return d;
}

std::vector<double> HoeffdingTree::leaf_weights() const {
    std::vector<double> out;
    visit_leaves(*root_, [&](const LeafStats& s, int) { out.push_back(s.total().weight()); });
    return out;
}

void HoeffdingTree::for_each_leaf(const std::function<void(const LeafStats&, int)>& fn) const {
    visit_leaves(*root_, fn);
}

std::optional<std::pair<std::size_t, double>> HoeffdingTree::root_split() const {
    if (root_->is_leaf()) {
        return std::nullopt;
    }
    return std::make_pair(root_->feature, root_->threshold);
}

std::size_t HoeffdingTree::active_alternates() const {
    return count_alternates(*root_);
}

nlohmann::json HoeffdingTree::snapshot() const {
    nlohmann::json hat = nullptr;
    if (hat_) {
        hat = {{"delta", hat_->detector.delta},
               {"max_buckets", hat_->detector.max_buckets},
               {"min_clock", hat_->detector.min_clock},
               {"adjudication_window", hat_->adjudication_window}};
    }
    return {{"format_version", 1},
            {"model", hat_ ? "hat" : "ht"},
            {"dim", dim_},
            {"seed", seed_},
            {"params",
             {{"delta", params_.delta},
              {"grace_period", params_.grace_period},
              {"tie_threshold", params_.tie_threshold},
              {"depth_limit", params_.depth_limit},
              {"threshold_cap", params_.threshold_cap},
              {"leaf_mode", leaf_mode_name(params_.leaf_mode)},
              {"perceptron_rate", params_.perceptron_rate},
              {"subspace_size", params_.subspace_size}}},
            {"learned_weight", learned_weight_},
            {"target_min", target_min_},
            {"target_max", target_max_},
            {"replacements", replacements_},
            {"alternates_started", alternates_started_},
            {"hat", std::move(hat)},
            {"root", node_json(*root_)}};
}

std::size_t HoeffdingTree::logical_bytes() const {
    // header: 3 scalars, params object with 7 reals, 5 run scalars, optional hat object
    std::size_t bytes = 16 + 3 * 8 + (16 + 7 * 8) + 5 * 8;
    if (hat_) {
        bytes += 16 + 4 * 8;
    }
    return bytes + node_bytes(*root_);
}

// --- HatTree ---------------------------------------------------------------

HatTree::HatTree(std::size_t dim, HoeffdingParams params, HatParams hat, std::uint64_t seed)
    : tree_(dim, params, seed, hat) {}

nlohmann::json HatTree::snapshot() const {
    return tree_.snapshot();
}

}  // namespace edgecast
