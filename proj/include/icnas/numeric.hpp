#pragma once

#include <cstddef>
#include <exception>
#include <functional>
#include <mutex>
#include <span>
#include <thread>
#include <vector>

namespace icnas {

// Correctly rounded sum of doubles (Shewchuk partials).
double fsum(std::span<const double> xs);
// fsum(xs) / n; throws on empty input.
double exact_mean(std::span<const double> xs);

// Runs fn(index, worker) for index in [0, n) on `threads` workers. Indices
// are handed out in order; the first exception is rethrown after joining.
void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t, int)>& fn);

}  // namespace icnas
