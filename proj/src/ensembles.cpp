#include "edgecast/ensembles.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <nlohmann/json.hpp>

#include "edgecast/error.hpp"

namespace edgecast {

unsigned poisson_weight(Rng& rng, double lambda) {
    if (!(lambda >= 0.0) || !std::isfinite(lambda)) {
        throw ValidationError("Poisson rate must be finite and non-negative");
    }
    const double u = uniform01(rng);
    double p = std::exp(-lambda);
    double cdf = p;
    unsigned k = 0;
    while (u >= cdf) {
        ++k;
        p *= lambda / k;
        cdf += p;
        if (p == 0.0 && k > lambda) {
            break;
        }
    }
    return k;
}

namespace {

constexpr std::uint64_t kTreeStream = 0x74726565;
constexpr std::uint64_t kPatchStream = 0x7061746368;
constexpr std::uint64_t kWeightStream = 0x706f6973;

std::vector<double> project(std::span<const double> x, const std::vector<std::size_t>& patch) {
    std::vector<double> out(patch.size());
    for (std::size_t i = 0; i < patch.size(); ++i) {
        out[i] = x[patch[i]];
    }
    return out;
}

// Sum after sorting so the mean does not depend on member order.
double order_free_mean(std::vector<double> values) {
    std::sort(values.begin(), values.end());
    double s = 0.0;
    for (double v : values) {
        s += v;
    }
    return s / static_cast<double>(values.size());
}

}  // namespace

struct StreamingEnsemble::Member {
    std::size_t index = 0;
    std::uint64_t generation = 0;
    std::vector<std::size_t> patch;
    std::optional<HoeffdingTree> tree;
    std::optional<HoeffdingTree> background;
    AdwinDetector warning;
    AdwinDetector drift;
    Rng weight_rng;
    std::uint64_t replacements = 0;
    std::uint64_t warnings = 0;
    unsigned last_weight = 0;
};

std::size_t resolve_subspace(EnsembleKind kind, const EnsembleConfig& cfg, std::size_t dim) {
    if (dim == 0) {
        throw ValidationError("ensemble dimension must be positive");
    }
    std::size_t m = 0;
    if (cfg.subspace == 0.0) {
        if (kind == EnsembleKind::Arf) {
            m = static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(dim)))) + 1;
            m = std::min(m, dim);
        } else {
            m = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(0.6 * static_cast<double>(dim))));
        }
    } else if (cfg.subspace > 0.0 && cfg.subspace < 1.0) {
        m = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(cfg.subspace * static_cast<double>(dim))));
    } else if (cfg.subspace >= 1.0 && cfg.subspace == std::floor(cfg.subspace)) {
        m = static_cast<std::size_t>(cfg.subspace);
    } else {
        throw ValidationError("subspace must be 0, a fraction in (0, 1) or a whole feature count");
    }
    if (m < 1 || m > dim) {
        throw ValidationError("subspace size " + std::to_string(m) + " outside [1, " + std::to_string(dim) + "]");
    }
    return m;
}

StreamingEnsemble::StreamingEnsemble(EnsembleKind kind, std::size_t dim, EnsembleConfig cfg)
    : kind_(kind), dim_(dim), cfg_(cfg), subspace_(resolve_subspace(kind, cfg, dim)) {
    if (cfg_.n_models < 1) {
        throw ValidationError("ensemble needs at least one member");
    }
    if (!(cfg_.lambda > 0.0) || !std::isfinite(cfg_.lambda)) {
        throw ValidationError("Poisson rate lambda must be positive");
    }
    if (!(cfg_.warning_delta > cfg_.drift_delta) || !(cfg_.drift_delta > 0.0) || !(cfg_.warning_delta < 1.0)) {
        throw ValidationError("need 0 < drift_delta < warning_delta < 1");
    }
    members_.resize(cfg_.n_models);
    for (std::size_t i = 0; i < members_.size(); ++i) {
        Member& m = members_[i];
        m.index = i;
        m.warning = AdwinDetector(AdwinParams{cfg_.warning_delta, 5, 32});
        m.drift = AdwinDetector(AdwinParams{cfg_.drift_delta, 5, 32});
        m.weight_rng.seed(mix_seed({cfg_.seed, i, kWeightStream}));
        draw_patch(m);
        m.tree.emplace(make_tree(i, 0, m.patch.size()));
    }
}

StreamingEnsemble::~StreamingEnsemble() = default;
StreamingEnsemble::StreamingEnsemble(StreamingEnsemble&&) noexcept = default;
StreamingEnsemble& StreamingEnsemble::operator=(StreamingEnsemble&&) noexcept = default;

void StreamingEnsemble::draw_patch(Member& m) {
    if (kind_ != EnsembleKind::Srp) {
        m.patch.resize(dim_);
        std::iota(m.patch.begin(), m.patch.end(), std::size_t{0});
        return;
    }
    Rng rng(mix_seed({cfg_.seed, m.index, kPatchStream, m.generation}));
    std::vector<std::size_t> all(dim_);
    std::iota(all.begin(), all.end(), std::size_t{0});
    for (std::size_t i = 0; i < subspace_; ++i) {
        const std::size_t j = i + static_cast<std::size_t>(rng() % (dim_ - i));
        std::swap(all[i], all[j]);
    }
    all.resize(subspace_);
    std::sort(all.begin(), all.end());
    m.patch = std::move(all);
}

HoeffdingTree StreamingEnsemble::make_tree(std::size_t index, std::uint64_t generation, std::size_t patch_size) const {
    HoeffdingParams params = cfg_.tree;
    const std::uint64_t seed = mix_seed({cfg_.seed, index, kTreeStream, generation});
    if (kind_ == EnsembleKind::Arf) {
        params.subspace_size = subspace_;
        return HoeffdingTree(dim_, params, seed);
    }
    params.subspace_size = 0;
    return HoeffdingTree(patch_size, params, seed);
}

std::size_t StreamingEnsemble::size() const noexcept {
    return members_.size();
}

double StreamingEnsemble::normalized_error(double abs_err) const {
    const double range = target_max_ - target_min_;
    if (!(range > 0.0)) {
        return 0.0;
    }
    return std::clamp(abs_err / range, 0.0, 1.0);
}

std::vector<double> StreamingEnsemble::member_predictions(std::span<const double> x) const {
    if (x.size() != dim_) {
        throw ValidationError("feature dimension mismatch: ensemble expects " + std::to_string(dim_) + ", got " +
                              std::to_string(x.size()));
    }
    std::vector<double> out(members_.size());
    for (std::size_t i = 0; i < members_.size(); ++i) {
        const Member& m = members_[i];
        out[i] = kind_ == EnsembleKind::Srp ? m.tree->predict(project(x, m.patch)) : m.tree->predict(x);
    }
    return out;
}

double StreamingEnsemble::predict(std::span<const double> x) const {
    return order_free_mean(member_predictions(x));
}

void StreamingEnsemble::learn(std::span<const double> x, double y) {
    if (x.size() != dim_) {
        throw ValidationError("feature dimension mismatch: ensemble expects " + std::to_string(dim_) + ", got " +
                              std::to_string(x.size()));
    }
    if (!std::isfinite(y) || !std::all_of(x.begin(), x.end(), [](double v) { return std::isfinite(v); })) {
        throw ValidationError("ensemble input must be finite");
    }
    if (seen_ == 0) {
        target_min_ = target_max_ = y;
    } else {
        target_min_ = std::min(target_min_, y);
        target_max_ = std::max(target_max_, y);
    }
    ++seen_;
    for_each_index(
        members_.size(), cfg_.execution, [&](std::size_t i) { learn_member(members_[i], x, y); }, cfg_.threads);
    last_total_weight_ = 0;
    for (const auto& m : members_) {
        last_total_weight_ += m.last_weight;
    }
}

void StreamingEnsemble::learn_member(Member& m, std::span<const double> x, double y) {
    std::vector<double> projected;
    std::span<const double> input = x;
    if (kind_ == EnsembleKind::Srp) {
        projected = project(x, m.patch);
        input = projected;
    }
    const unsigned k = cfg_.fixed_weight ? *cfg_.fixed_weight : poisson_weight(m.weight_rng, cfg_.lambda);
    m.last_weight = k;
    const double err = cfg_.detectors_enabled ? normalized_error(std::fabs(m.tree->predict(input) - y)) : 0.0;

    if (k > 0) {
        m.tree->learn(input, y, static_cast<double>(k));
        if (m.background) {
            m.background->learn(input, y, static_cast<double>(k));
        }
    }
    if (!cfg_.detectors_enabled) {
        return;
    }

    const double warn_before = m.warning.mean();
    if (m.warning.update(err) == DriftSignal::Change && m.warning.mean() > warn_before && !m.background) {
        ++m.warnings;
        m.background.emplace(make_tree(m.index, m.generation + 1, m.patch.size()));
    }
    const double drift_before = m.drift.mean();
    if (m.drift.update(err) == DriftSignal::Change && m.drift.mean() > drift_before) {
        ++m.replacements;
        ++m.generation;
        if (m.background) {
            m.tree = std::move(m.background);
            m.background.reset();
        } else {
            draw_patch(m);
            m.tree.emplace(make_tree(m.index, m.generation, m.patch.size()));
        }
        m.warning.reset();
        m.drift.reset();
    }
}

const std::vector<std::size_t>& StreamingEnsemble::patch(std::size_t i) const {
    return members_.at(i).patch;
}

const HoeffdingTree& StreamingEnsemble::member_tree(std::size_t i) const {
    return *members_.at(i).tree;
}

bool StreamingEnsemble::has_background(std::size_t i) const {
    return members_.at(i).background.has_value();
}

std::uint64_t StreamingEnsemble::replacements() const noexcept {
    std::uint64_t n = 0;
    for (const auto& m : members_) {
        n += m.replacements;
    }
    return n;
}

std::uint64_t StreamingEnsemble::warnings() const noexcept {
    std::uint64_t n = 0;
    for (const auto& m : members_) {
        n += m.warnings;
    }
    return n;
}

std::size_t StreamingEnsemble::member_bytes(std::size_t i) const {
    const Member& m = members_.at(i);
    const std::size_t patch_bytes = kind_ == EnsembleKind::Srp ? 8 * m.patch.size() : 0;
    return 16 + 2 * 8 + patch_bytes + m.tree->logical_bytes() +
           (m.background ? m.background->logical_bytes() : 0) + m.warning.logical_bytes() + m.drift.logical_bytes();
}

nlohmann::json StreamingEnsemble::snapshot() const {
    nlohmann::json members = nlohmann::json::array();
    for (const auto& m : members_) {
        members.push_back({{"index", m.index},
                           {"generation", m.generation},
                           {"patch", kind_ == EnsembleKind::Srp ? nlohmann::json(m.patch) : nlohmann::json(nullptr)},
                           {"tree", m.tree->snapshot()},
                           {"background", m.background ? m.background->snapshot() : nlohmann::json(nullptr)},
                           {"warning", m.warning.snapshot()},
                           {"drift", m.drift.snapshot()}});
    }
    return {{"format_version", 1},
            {"model", kind_ == EnsembleKind::Arf ? "arf" : "srp"},
            {"dim", dim_},
            {"seed", cfg_.seed},
            {"config",
             {{"n_models", cfg_.n_models},
              {"lambda", cfg_.lambda},
              {"subspace", subspace_},
              {"warning_delta", cfg_.warning_delta},
              {"drift_delta", cfg_.drift_delta}}},
            {"target_min", target_min_},
            {"target_max", target_max_},
            {"seen", seen_},
            {"members", std::move(members)}};
}

std::size_t StreamingEnsemble::logical_bytes() const {
    std::size_t bytes = 16 + 3 * 8 + (16 + 5 * 8) + 3 * 8;
    for (std::size_t i = 0; i < members_.size(); ++i) {
        bytes += member_bytes(i);
    }
    return bytes;
}

}  // namespace edgecast
