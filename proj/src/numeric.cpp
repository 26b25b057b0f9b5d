#include "icnas/numeric.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <stdexcept>

namespace icnas {

double fsum(std::span<const double> xs) {
    std::vector<double> partials;
    for (double x : xs) {
        if (!std::isfinite(x)) throw std::invalid_argument("fsum: non-finite input");
        std::size_t i = 0;
        for (double y : partials) {
            if (std::fabs(x) < std::fabs(y)) std::swap(x, y);
            const double hi = x + y;
            const double lo = y - (hi - x);
            if (lo != 0.0) partials[i++] = lo;
            x = hi;
        }
        partials.resize(i);
        partials.push_back(x);
    }
    // Add partials from the top, with the half-way rounding correction.
    if (partials.empty()) return 0.0;
    std::size_t n = partials.size();
    double hi = partials[--n];
    double lo = 0.0;
    while (n > 0) {
        const double x = hi;
        const double y = partials[--n];
        hi = x + y;
        const double yr = hi - x;
        lo = y - yr;
        if (lo != 0.0) break;
    }
    if (n > 0 && ((lo < 0 && partials[n - 1] < 0) || (lo > 0 && partials[n - 1] > 0))) {
        const double y = lo * 2.0;
        const double x = hi + y;
        if (y == x - hi) hi = x;
    }
    return hi;
}

double exact_mean(std::span<const double> xs) {
    if (xs.empty()) throw std::invalid_argument("mean of an empty sequence");
    return fsum(xs) / static_cast<double>(xs.size());
}

void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t, int)>& fn) {
    const int workers = std::max(1, std::min<int>(threads, static_cast<int>(n)));
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i, 0);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::mutex error_mu;
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) {
        pool.emplace_back([&, w] {
            for (std::size_t i; (i = next.fetch_add(1)) < n;) {
                try {
                    fn(i, w);
                } catch (...) {
                    std::lock_guard lock(error_mu);
                    if (!error) error = std::current_exception();
                    next = n;
                }
            }
        });
    }
    for (auto& t : pool) t.join();
    if (error) std::rethrow_exception(error);
}

}  // namespace icnas
