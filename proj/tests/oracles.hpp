#pragma once

// Definitional reference implementations for metric checks.

#include <boost/multiprecision/cpp_bin_float.hpp>

#include <cmath>
#include <vector>

namespace icnas::oracles {

using big = boost::multiprecision::cpp_bin_float_100;

// Definitional tau-b over all pairs.
inline double brute_tau_b(const std::vector<double>& x, const std::vector<double>& y) {
    long long conc = 0, disc = 0, tx = 0, ty = 0;
    const std::size_t n = x.size();
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            const double dx = x[i] - x[j], dy = y[i] - y[j];
            if (dx == 0) ++tx;
            if (dy == 0) ++ty;
            if (dx == 0 || dy == 0) continue;
            ((dx > 0) == (dy > 0) ? conc : disc)++;
        }
    }
    const long long n0 = static_cast<long long>(n * (n - 1) / 2);
    return static_cast<double>(conc - disc) / std::sqrt(static_cast<double>(n0 - tx) * static_cast<double>(n0 - ty));
}

inline double brute_pearson(const std::vector<double>& x, const std::vector<double>& y) {
    big mx = 0, my = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= x.size();
    my /= y.size();
    big sxy = 0, sxx = 0, syy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
        syy += (y[i] - my) * (y[i] - my);
    }
    return static_cast<double>(sxy / sqrt(sxx * syy));
}

inline std::vector<double> brute_ranks(const std::vector<double>& x) {
    std::vector<double> r(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        double less = 0, equal = 0;
        for (double v : x) {
            less += v < x[i];
            equal += v == x[i];
        }
        r[i] = less + (equal + 1) / 2;
    }
    return r;
}

inline double brute_spearman(const std::vector<double>& x, const std::vector<double>& y) {
    return brute_pearson(brute_ranks(x), brute_ranks(y));
}

// Correctly rounded sum divided once by n.
inline double oracle_mean(std::vector<double>::const_iterator a, std::vector<double>::const_iterator b) {
    big s = 0;
    for (auto it = a; it != b; ++it) s += *it;
    return static_cast<double>(s) / static_cast<double>(b - a);
}

}  // namespace icnas::oracles
