#include "icnas/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "icnas/numeric.hpp"

namespace icnas {

namespace {

void check_pair(std::span<const double> x, std::span<const double> y, const char* what) {
    if (x.size() != y.size()) throw std::invalid_argument(std::string(what) + ": series lengths differ");
    if (x.size() < 2) throw std::invalid_argument(std::string(what) + ": needs at least 2 points");
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (!std::isfinite(x[i]) || !std::isfinite(y[i])) {
            throw std::invalid_argument(std::string(what) + ": non-finite value");
        }
    }
}

std::int64_t tie_pairs(std::span<const double> sorted) {
    std::int64_t total = 0;
    for (std::size_t i = 0; i < sorted.size();) {
        std::size_t j = i + 1;
        while (j < sorted.size() && sorted[j] == sorted[i]) ++j;
        const auto t = static_cast<std::int64_t>(j - i);
        total += t * (t - 1) / 2;
        i = j;
    }
    return total;
}

// Sorts v ascending and returns the number of strict inversions.
std::int64_t count_inversions(std::vector<double>& v) {
    std::vector<double> buf(v.size());
    std::int64_t inv = 0;
    for (std::size_t width = 1; width < v.size(); width *= 2) {
        for (std::size_t lo = 0; lo < v.size(); lo += 2 * width) {
            const std::size_t mid = std::min(lo + width, v.size());
            const std::size_t hi = std::min(lo + 2 * width, v.size());
            std::size_t i = lo, j = mid, k = lo;
            while (i < mid && j < hi) {
                if (v[j] < v[i]) {
                    inv += static_cast<std::int64_t>(mid - i);
                    buf[k++] = v[j++];
                } else {
                    buf[k++] = v[i++];
                }
            }
            while (i < mid) buf[k++] = v[i++];
            while (j < hi) buf[k++] = v[j++];
        }
        std::swap(v, buf);
    }
    return inv;
}

}  // namespace

void PairedSeries::validate(std::size_t min_size) const {
    if (predictions.size() != truths.size()) throw std::invalid_argument("predictions and truths differ in length");
    if (!ids.empty() && ids.size() != truths.size()) throw std::invalid_argument("ids and truths differ in length");
    if (truths.size() < min_size) {
        throw std::invalid_argument("series has " + std::to_string(truths.size()) + " points, needs " +
                                    std::to_string(min_size));
    }
    for (std::size_t i = 0; i < truths.size(); ++i) {
        if (!std::isfinite(predictions[i]) || !std::isfinite(truths[i])) {
            throw std::invalid_argument("series contains a non-finite value");
        }
    }
}

double kendall_tau(std::span<const double> x, std::span<const double> y) {
    check_pair(x, y, "kendall_tau");
    const std::size_t n = x.size();
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
        return x[a] != x[b] ? x[a] < x[b] : y[a] < y[b];
    });
    std::vector<double> xs(n), ys(n);
    for (std::size_t i = 0; i < n; ++i) {
        xs[i] = x[idx[i]];
        ys[i] = y[idx[i]];
    }
    const auto n0 = static_cast<std::int64_t>(n) * static_cast<std::int64_t>(n - 1) / 2;
    const std::int64_t n1 = tie_pairs(xs);
    std::int64_t n3 = 0;  // pairs tied in both
    for (std::size_t i = 0; i < n;) {
        std::size_t j = i + 1;
        while (j < n && xs[j] == xs[i] && ys[j] == ys[i]) ++j;
        const auto t = static_cast<std::int64_t>(j - i);
        n3 += t * (t - 1) / 2;
        i = j;
    }
    const std::int64_t swaps = count_inversions(ys);
    const std::int64_t n2 = tie_pairs(ys);
    if (n0 == n1 || n0 == n2) throw std::invalid_argument("kendall_tau: undefined for a constant series");
    const double num = static_cast<double>(n0 - n1 - n2 + n3 - 2 * swaps);
    const double den = std::sqrt(static_cast<double>(n0 - n1) * static_cast<double>(n0 - n2));
    return std::clamp(num / den, -1.0, 1.0);
}

double pearson(std::span<const double> x, std::span<const double> y) {
    check_pair(x, y, "pearson");
    const double mx = exact_mean(x), my = exact_mean(y);
    double sxx = 0, syy = 0, sxy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double dx = x[i] - mx, dy = y[i] - my;
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    if (sxx == 0 || syy == 0) throw std::invalid_argument("pearson: zero variance");
    return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

std::vector<double> average_ranks(std::span<const double> x) {
    std::vector<std::size_t> idx(x.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
    std::vector<double> r(x.size());
    for (std::size_t i = 0; i < idx.size();) {
        std::size_t j = i + 1;
        while (j < idx.size() && x[idx[j]] == x[idx[i]]) ++j;
        const double rank = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
        for (std::size_t k = i; k < j; ++k) r[idx[k]] = rank;
        i = j;
    }
    return r;
}

double spearman(std::span<const double> x, std::span<const double> y) {
    check_pair(x, y, "spearman");
    const auto rx = average_ranks(x), ry = average_ranks(y);
    return pearson(rx, ry);
}

double kendall_tau(const PairedSeries& s) {
    s.validate();
    return kendall_tau(s.predictions, s.truths);
}
double pearson(const PairedSeries& s) {
    s.validate();
    return pearson(s.predictions, s.truths);
}
double spearman(const PairedSeries& s) {
    s.validate();
    return spearman(s.predictions, s.truths);
}

const char* to_string(Coefficient c) {
    switch (c) {
        case Coefficient::kt: return "KT";
        case Coefficient::pcc: return "PCC";
        case Coefficient::scc: return "SCC";
    }
    return "KT";
}

Coefficient parse_coefficient(const std::string& s) {
    if (s == "KT" || s == "kt") return Coefficient::kt;
    if (s == "PCC" || s == "pcc") return Coefficient::pcc;
    if (s == "SCC" || s == "scc") return Coefficient::scc;
    throw std::invalid_argument("unknown coefficient '" + s + "' (KT, PCC or SCC)");
}

double coefficient(Coefficient c, std::span<const double> x, std::span<const double> y) {
    switch (c) {
        case Coefficient::kt: return kendall_tau(x, y);
        case Coefficient::pcc: return pearson(x, y);
        case Coefficient::scc: return spearman(x, y);
    }
    return 0;
}

namespace {

// Index order by key ascending, ties by genotype (or index).
std::vector<std::size_t> removal_order(const std::vector<double>& key, const std::vector<Genotype>& ids) {
    std::vector<std::size_t> idx(key.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
        if (key[a] != key[b]) return key[a] < key[b];
        if (!ids.empty()) return ids[a] < ids[b];
        return a < b;
    });
    return idx;
}

}  // namespace

MetricCurve improvement_curve(const PairedSeries& s, int stop_at_remaining) {
    if (stop_at_remaining < 1) throw std::invalid_argument("stop_at_remaining must be >= 1");
    s.validate(static_cast<std::size_t>(stop_at_remaining));
    const auto order = removal_order(s.predictions, s.ids);
    std::vector<double> remaining_truths;
    MetricCurve c;
    const int n = static_cast<int>(s.size());
    for (int removed = 0; removed <= n - stop_at_remaining; ++removed) {
        remaining_truths.clear();
        for (std::size_t i = static_cast<std::size_t>(removed); i < order.size(); ++i) {
            remaining_truths.push_back(s.truths[order[i]]);
        }
        c.points.push_back({removed, exact_mean(remaining_truths), 0.0, 0.0});
    }
    return c;
}

MetricCurve normalize_improvement(MetricCurve curve, std::span<const double> truths) {
    if (truths.empty()) throw std::invalid_argument("normalize_improvement: no truths");
    const double mean = exact_mean(truths);
    const double best = *std::max_element(truths.begin(), truths.end());
    if (!(best > mean)) throw std::invalid_argument("normalize_improvement: degenerate truths (max == mean)");
    for (auto& p : curve.points) p.norm_improvement = (p.mean_acc - mean) / (best - mean);
    return curve;
}

std::vector<std::pair<int, double>> correlation_decay(const PairedSeries& s, Coefficient c, int stop_at_remaining) {
    if (stop_at_remaining < 2) throw std::invalid_argument("stop_at_remaining must be >= 2");
    s.validate(std::max<std::size_t>(12, static_cast<std::size_t>(stop_at_remaining)));
    const auto order = removal_order(s.truths, s.ids);
    std::vector<std::pair<int, double>> out;
    std::vector<double> p, t;
    const int n = static_cast<int>(s.size());
    for (int k = 0; k <= n - stop_at_remaining; ++k) {
        p.clear();
        t.clear();
        // Keep the survivors in their original order.
        std::vector<std::size_t> keep(order.begin() + k, order.end());
        std::sort(keep.begin(), keep.end());
        for (auto i : keep) {
            p.push_back(s.predictions[i]);
            t.push_back(s.truths[i]);
        }
        out.emplace_back(k, coefficient(c, p, t));
    }
    return out;
}

MetricCurve mean_across_runs(const std::vector<MetricCurve>& curves) {
    if (curves.empty()) throw std::invalid_argument("mean_across_runs: no curves");
    const std::size_t len = curves[0].points.size();
    for (const auto& c : curves) {
        if (c.points.size() != len) throw std::invalid_argument("mean_across_runs: curves differ in length");
    }
    MetricCurve out;
    std::vector<double> acc(curves.size()), norm(curves.size());
    for (std::size_t i = 0; i < len; ++i) {
        for (std::size_t r = 0; r < curves.size(); ++r) {
            if (curves[r].points[i].n_removed != curves[0].points[i].n_removed) {
                throw std::invalid_argument("mean_across_runs: curves disagree on n_removed");
            }
            acc[r] = curves[r].points[i].mean_acc;
            norm[r] = curves[r].points[i].norm_improvement;
        }
        const double m = exact_mean(norm);
        std::vector<double> sq(norm.size());
        for (std::size_t r = 0; r < norm.size(); ++r) sq[r] = (norm[r] - m) * (norm[r] - m);
        out.points.push_back({curves[0].points[i].n_removed, exact_mean(acc), m, std::sqrt(exact_mean(sq))});
    }
    return out;
}

SelfConsistency self_consistency(const std::vector<std::vector<double>>& predictions,
                                 const std::vector<std::vector<Genotype>>& ids, std::vector<std::string> names) {
    const std::size_t k = predictions.size();
    if (k < 2) throw std::invalid_argument("self_consistency needs at least 2 super-networks");
    if (ids.size() != k) throw std::invalid_argument("self_consistency: one genotype list per super-network");
    for (std::size_t i = 0; i < k; ++i) {
        if (ids[i] != ids[0]) throw std::invalid_argument("self_consistency: genotype sets differ");
        if (predictions[i].size() != ids[i].size()) {
            throw std::invalid_argument("self_consistency: prediction count does not match genotype count");
        }
    }
    if (names.empty()) {
        for (std::size_t i = 0; i < k; ++i) names.push_back(std::to_string(i));
    }
    if (names.size() != k) throw std::invalid_argument("self_consistency: one name per super-network");
    SelfConsistency sc;
    sc.names = std::move(names);
    auto unit = [k] {
        std::vector<std::vector<double>> m(k, std::vector<double>(k, 0.0));
        for (std::size_t i = 0; i < k; ++i) m[i][i] = 1.0;
        return m;
    };
    sc.kt = unit();
    sc.pcc = unit();
    sc.scc = unit();
    std::vector<double> kts, pccs, sccs;
    for (std::size_t a = 0; a < k; ++a) {
        for (std::size_t b = a + 1; b < k; ++b) {
            PairCoefficients p{static_cast<int>(a), static_cast<int>(b), kendall_tau(predictions[a], predictions[b]),
                               pearson(predictions[a], predictions[b]), spearman(predictions[a], predictions[b])};
            sc.kt[a][b] = sc.kt[b][a] = p.kt;
            sc.pcc[a][b] = sc.pcc[b][a] = p.pcc;
            sc.scc[a][b] = sc.scc[b][a] = p.scc;
            kts.push_back(p.kt);
            pccs.push_back(p.pcc);
            sccs.push_back(p.scc);
            sc.pairs.push_back(p);
        }
    }
    sc.mean_kt = exact_mean(kts);
    sc.mean_pcc = exact_mean(pccs);
    sc.mean_scc = exact_mean(sccs);
    return sc;
}

namespace {

std::string g17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

}  // namespace

void write_curve_csv(const MetricCurve& c, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write '" + path + "'");
    out << "n_removed,mean_acc,norm_improvement,std\n";
    for (const auto& p : c.points) {
        out << p.n_removed << ',' << g17(p.mean_acc) << ',' << g17(p.norm_improvement) << ',' << g17(p.std) << '\n';
    }
}

MetricCurve read_curve_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read '" + path + "'");
    std::string line;
    if (!std::getline(in, line) || line != "n_removed,mean_acc,norm_improvement,std") {
        throw std::runtime_error("'" + path + "' is not a curve CSV");
    }
    MetricCurve c;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string f[4];
        for (auto& s : f) {
            if (!std::getline(ss, s, ',')) throw std::runtime_error("malformed curve row '" + line + "'");
        }
        c.points.push_back({std::stoi(f[0]), std::stod(f[1]), std::stod(f[2]), std::stod(f[3])});
    }
    return c;
}

void write_self_consistency_csv(const SelfConsistency& sc, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write '" + path + "'");
    out << "metric,a,b,value\n";
    const std::pair<const char*, double PairCoefficients::*> metrics[] = {
        {"KT", &PairCoefficients::kt}, {"PCC", &PairCoefficients::pcc}, {"SCC", &PairCoefficients::scc}};
    const double means[] = {sc.mean_kt, sc.mean_pcc, sc.mean_scc};
    for (int m = 0; m < 3; ++m) {
        for (const auto& p : sc.pairs) {
            out << metrics[m].first << ',' << sc.names[p.a] << ',' << sc.names[p.b] << ',' << g17(p.*metrics[m].second)
                << '\n';
        }
        out << metrics[m].first << ",mean,," << g17(means[m]) << '\n';
    }
}

}  // namespace icnas
