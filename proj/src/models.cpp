#include "edgecast/models.hpp"

#include <algorithm>
#include <optional>

#include <nlohmann/json.hpp>

#include "edgecast/error.hpp"

namespace edgecast {

namespace {

template <typename Model>
class OnlineAdapter : public Regressor {
  public:
    OnlineAdapter(std::string name, Model model) : name_(std::move(name)), model_(std::move(model)) {}

    std::string name() const override { return name_; }
    bool is_online() const override { return true; }
    double predict(std::span<const double> x) const override { return model_.predict(x); }
    void learn(const LagInstance& inst) override { model_.learn(inst.features, inst.target); }
    void fit(const LagDataset& data) override {
        for (const auto& inst : data.instances) {
            learn(inst);
        }
    }
    nlohmann::json snapshot() const override { return model_.snapshot(); }
    std::size_t logical_bytes() const override { return model_.logical_bytes(); }

  private:
    std::string name_;
    Model model_;
};

class PersistenceModel : public Regressor {
  public:
    explicit PersistenceModel(std::size_t dim) : dim_(dim) {}

    std::string name() const override { return "persistence"; }
    bool is_online() const override { return true; }
    double predict(std::span<const double> x) const override {
        if (x.size() != dim_) {
            throw ValidationError("feature dimension mismatch");
        }
        return x.back();
    }
    void learn(const LagInstance&) override {}
    void fit(const LagDataset&) override {}
    nlohmann::json snapshot() const override {
        return {{"format_version", 1}, {"model", "persistence"}, {"dim", dim_}};
    }
    std::size_t logical_bytes() const override { return 16 + 2 * 8; }

  private:
    std::size_t dim_;
};

class BatchModel : public Regressor {
  public:
    bool is_online() const override { return false; }
    void learn(const LagInstance&) override {
        throw ConfigError(name() + " is a batch model; use fit or a refit interval");
    }

  protected:
    static void require(bool fitted, const std::string& name) {
        if (!fitted) {
            throw ValidationError(name + " has not been fitted");
        }
    }
};

class OlsModel : public BatchModel {
  public:
    explicit OlsModel(std::size_t dim) : dim_(dim) {}

    std::string name() const override { return "ols"; }
    double predict(std::span<const double> x) const override {
        require(model_.has_value(), "ols");
        return model_->predict(x);
    }
    void fit(const LagDataset& data) override { model_ = ols_fit(data); }
    nlohmann::json snapshot() const override {
        return {{"format_version", 1},
                {"model", "ols"},
                {"dim", dim_},
                {"fitted", model_.has_value()},
                {"weights", model_ ? model_->weights : std::vector<double>{}},
                {"bias", model_ ? model_->bias : 0.0}};
    }
    std::size_t logical_bytes() const override {
        return 16 + 2 * 8 + 1 + 8 * (model_ ? model_->weights.size() : 0) + 8;
    }

  private:
    std::size_t dim_;
    std::optional<LinearModel> model_;
};

class CartModel : public BatchModel {
  public:
    CartModel(std::size_t dim, CartParams params) : dim_(dim), params_(params) {}

    std::string name() const override { return "cart"; }
    double predict(std::span<const double> x) const override {
        require(tree_.has_value(), "cart");
        return tree_->predict(x);
    }
    void fit(const LagDataset& data) override { tree_ = cart_fit(data, params_); }
    nlohmann::json snapshot() const override {
        return tree_ ? tree_->snapshot() : RegressionTree(dim_, params_, {}).snapshot();
    }
    std::size_t logical_bytes() const override {
        return tree_ ? tree_->logical_bytes() : RegressionTree(dim_, params_, {}).logical_bytes();
    }

  private:
    std::size_t dim_;
    CartParams params_;
    std::optional<RegressionTree> tree_;
};

class ForestModel : public BatchModel {
  public:
    ForestModel(std::size_t dim, ForestParams params) : dim_(dim), params_(params) {}

    std::string name() const override { return "rf"; }
    double predict(std::span<const double> x) const override {
        require(forest_.has_value(), "rf");
        return forest_->predict(x);
    }
    void fit(const LagDataset& data) override { forest_ = rf_fit(data, params_); }
    nlohmann::json snapshot() const override {
        return forest_ ? forest_->snapshot() : RandomForest(dim_, params_, {}).snapshot();
    }
    std::size_t logical_bytes() const override {
        return forest_ ? forest_->logical_bytes() : RandomForest(dim_, params_, {}).logical_bytes();
    }

  private:
    std::size_t dim_;
    ForestParams params_;
    std::optional<RandomForest> forest_;
};

class FrozenModel : public Regressor {
  public:
    explicit FrozenModel(std::unique_ptr<Regressor> inner) : inner_(std::move(inner)) {}

    std::string name() const override { return inner_->name(); }
    bool is_online() const override { return true; }
    double predict(std::span<const double> x) const override { return inner_->predict(x); }
    void learn(const LagInstance&) override {}
    void fit(const LagDataset& data) override { inner_->fit(data); }
    nlohmann::json snapshot() const override { return inner_->snapshot(); }
    std::size_t logical_bytes() const override { return inner_->logical_bytes(); }

  private:
    std::unique_ptr<Regressor> inner_;
};

}  // namespace

const std::vector<std::string>& known_models() {
    static const std::vector<std::string> names{"ht",  "hat", "arf",  "srp", "sgd",
                                                "pa",  "ols", "cart", "rf",  "persistence"};
    return names;
}

bool is_batch_model(const std::string& name) {
    return name == "ols" || name == "cart" || name == "rf";
}

std::unique_ptr<Regressor> make_regressor(const std::string& name, std::size_t window_size, std::uint64_t seed,
                                          const ModelOptions& options) {
    if (window_size == 0) {
        throw ConfigError("window size must be positive");
    }
    if (name == "ht") {
        return std::make_unique<OnlineAdapter<HoeffdingTree>>(name, HoeffdingTree(window_size, options.tree, seed));
    }
    if (name == "hat") {
        return std::make_unique<OnlineAdapter<HatTree>>(name, HatTree(window_size, options.tree, options.hat, seed));
    }
    if (name == "arf" || name == "srp") {
        EnsembleConfig cfg = options.ensemble;
        cfg.seed = seed;
        cfg.tree = options.tree;
        cfg.execution = options.execution;
        const auto kind = name == "arf" ? EnsembleKind::Arf : EnsembleKind::Srp;
        return std::make_unique<OnlineAdapter<StreamingEnsemble>>(name, StreamingEnsemble(kind, window_size, cfg));
    }
    if (name == "sgd") {
        return std::make_unique<OnlineAdapter<SgdRegressor>>(name, SgdRegressor(window_size, options.sgd));
    }
    if (name == "pa") {
        return std::make_unique<OnlineAdapter<PaRegressor>>(name, PaRegressor(window_size, options.pa));
    }
    if (name == "ols") {
        return std::make_unique<OlsModel>(window_size);
    }
    if (name == "cart") {
        return std::make_unique<CartModel>(window_size, options.cart);
    }
    if (name == "rf") {
        ForestParams params = options.forest;
        params.seed = seed;
        params.execution = options.execution;
        return std::make_unique<ForestModel>(window_size, params);
    }
    if (name == "persistence") {
        return std::make_unique<PersistenceModel>(window_size);
    }
    throw ConfigError("unknown model '" + name + "'");
}

std::unique_ptr<Regressor> make_frozen(std::unique_ptr<Regressor> inner) {
    if (!inner) {
        throw ValidationError("frozen wrapper needs a model");
    }
    return std::make_unique<FrozenModel>(std::move(inner));
}

}  // namespace edgecast
