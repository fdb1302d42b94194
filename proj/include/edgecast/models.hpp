#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "edgecast/batch.hpp"
#include "edgecast/data.hpp"
#include "edgecast/ensembles.hpp"
#include "edgecast/hoeffding.hpp"
#include "edgecast/linear.hpp"

namespace edgecast {

/// Common face of every forecaster the harness can run.
class Regressor {
  public:
    virtual ~Regressor() = default;

    virtual std::string name() const = 0;
    /// Online models learn one instance at a time; batch models only support fit().
    virtual bool is_online() const = 0;
    virtual double predict(std::span<const double> x) const = 0;
    /// Throws ConfigError for batch models.
    virtual void learn(const LagInstance& inst) = 0;
    /// Batch models refit from scratch; online models learn the instances in order.
    virtual void fit(const LagDataset& data) = 0;

    virtual nlohmann::json snapshot() const = 0;
    virtual std::size_t logical_bytes() const = 0;
};

/// Hyperparameters for every model family. Defaults are the documented ones.
struct ModelOptions {
    HoeffdingParams tree{};
    HatParams hat{};
    EnsembleConfig ensemble{};
    SgdParams sgd{};
    PaParams pa{};
    CartParams cart{};
    ForestParams forest{};
    Execution execution = Execution::Parallel;
};

/// ht, hat, arf, srp, sgd, pa, ols, cart, rf and the persistence baseline.
const std::vector<std::string>& known_models();
bool is_batch_model(const std::string& name);

/// Throws ConfigError for unknown names.
std::unique_ptr<Regressor> make_regressor(const std::string& name, std::size_t window_size, std::uint64_t seed,
                                          const ModelOptions& options = {});

/// Delegates fit() and predictions to `inner` but ignores learn(). Used to check that a
/// model which stops learning after pretraining scores the same under both protocols.
std::unique_ptr<Regressor> make_frozen(std::unique_ptr<Regressor> inner);

}  // namespace edgecast
