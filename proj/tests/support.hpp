#pragma once

#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "edgecast/data.hpp"
#include "edgecast/rng.hpp"

namespace edgecast::testing {

/// Instances with features uniform in [0, scale)^dim and target f(x) plus Gaussian noise.
inline LagDataset random_dataset(std::uint64_t seed, std::size_t n, std::size_t dim,
                                 const std::function<double(const std::vector<double>&)>& f, double noise = 0.0,
                                 double scale = 1.0) {
    Rng rng(seed);
    std::normal_distribution<double> nd(0.0, 1.0);
    LagDataset d;
    d.window_size = dim;
    d.instances.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        LagInstance inst;
        inst.features.resize(dim);
        for (auto& v : inst.features) {
            v = scale * uniform01(rng);
        }
        inst.target = f(inst.features) + (noise > 0.0 ? noise * nd(rng) : 0.0);
        d.instances.push_back(std::move(inst));
    }
    return d;
}

inline double step_target(const std::vector<double>& x) {
    return x[0] > 0.5 ? 10.0 : 2.0;
}

}  // namespace edgecast::testing
