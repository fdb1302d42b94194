#pragma once

#include <cstddef>
#include <exception>
#include <vector>

#include <omp.h>

namespace edgecast {

/// Selects the serial reference path or the OpenMP kernel. Both produce identical results.
enum class Execution { Serial, Parallel };

/// Runs body(i) for i in [0, n). Iterations must not share mutable state.
/// In parallel mode an exception from any iteration is rethrown after the loop
/// (the one with the lowest index wins, matching what the serial path would throw first).
template <typename Body>
void for_each_index(std::size_t n, Execution exec, Body&& body, int threads = 0) {
    if (exec == Execution::Serial || n < 2) {
        for (std::size_t i = 0; i < n; ++i) {
            body(i);
        }
        return;
    }
    std::vector<std::exception_ptr> errors(n);
    const int nt = threads > 0 ? threads : omp_get_max_threads();
    const auto count = static_cast<long long>(n);
#pragma omp parallel for schedule(dynamic, 1) num_threads(nt)
    for (long long i = 0; i < count; ++i) {
        try {
            body(static_cast<std::size_t>(i));
        } catch (...) {
            errors[static_cast<std::size_t>(i)] = std::current_exception();
        }
    }
    for (auto& e : errors) {
        if (e) {
            std::rethrow_exception(e);
        }
    }
}

}  // namespace edgecast
