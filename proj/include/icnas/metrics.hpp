#pragma once

#include <span>
#include <string>
#include <utility>
#include <vector>

#include "icnas/search_space.hpp"

namespace icnas {

// Predictions and ground truths over one architecture set. `ids` may be
// empty; it then acts as the index order for tie-breaking.
struct PairedSeries {
    std::vector<double> predictions;
    std::vector<double> truths;
    std::vector<Genotype> ids;

    std::size_t size() const { return truths.size(); }
    void validate(std::size_t min_size = 2) const;
};

// Tau-b, O(n log n). Throws when either side is constant.
double kendall_tau(std::span<const double> x, std::span<const double> y);
// Product-moment coefficient. Throws on zero variance.
double pearson(std::span<const double> x, std::span<const double> y);
// Pearson on average ranks.
double spearman(std::span<const double> x, std::span<const double> y);
// 1-based ranks, ties get the mean of their positions.
std::vector<double> average_ranks(std::span<const double> x);

double kendall_tau(const PairedSeries& s);
double pearson(const PairedSeries& s);
double spearman(const PairedSeries& s);

enum class Coefficient { kt, pcc, scc };
const char* to_string(Coefficient c);
Coefficient parse_coefficient(const std::string& s);
double coefficient(Coefficient c, std::span<const double> x, std::span<const double> y);

struct CurvePoint {
    int n_removed = 0;
    double mean_acc = 0;
    double norm_improvement = 0;
    double std = 0;  // across runs, of norm_improvement
    bool operator==(const CurvePoint&) const = default;
};

struct MetricCurve {
    std::vector<CurvePoint> points;
    bool operator==(const MetricCurve&) const = default;
};

// Removes the n worst-predicted architectures for n = 0..size-stop and
// records the mean truth of the rest. Equal predictions are removed in
// ascending genotype order (index order without ids). Means are exact.
MetricCurve improvement_curve(const PairedSeries& s, int stop_at_remaining = 10);

// norm = (mean_acc - mean(truths)) / (max(truths) - mean(truths)).
MetricCurve normalize_improvement(MetricCurve curve, std::span<const double> truths);

// Drops the k lowest-truth entries for k = 0..size-stop and recomputes
// the coefficient on the remainder. Truth ties drop in genotype order.
std::vector<std::pair<int, double>> correlation_decay(const PairedSeries& s, Coefficient c,
                                                      int stop_at_remaining = 10);

// Pointwise mean of mean_acc and norm_improvement; std is the population
// standard deviation of norm_improvement across the curves.
MetricCurve mean_across_runs(const std::vector<MetricCurve>& curves);

struct PairCoefficients {
    int a = 0;
    int b = 0;
    double kt = 0;
    double pcc = 0;
    double scc = 0;
};

struct SelfConsistency {
    std::vector<std::string> names;
    std::vector<PairCoefficients> pairs;          // every unordered pair, a < b
    std::vector<std::vector<double>> kt, pcc, scc;  // symmetric, unit diagonal
    double mean_kt = 0;
    double mean_pcc = 0;
    double mean_scc = 0;
};

// Prediction vectors of several super-networks over one genotype list.
SelfConsistency self_consistency(const std::vector<std::vector<double>>& predictions,
                                 const std::vector<std::vector<Genotype>>& ids,
                                 std::vector<std::string> names = {});

// CSV: n_removed,mean_acc,norm_improvement,std
void write_curve_csv(const MetricCurve& c, const std::string& path);
MetricCurve read_curve_csv(const std::string& path);
// CSV: metric,a,b,value with one row per pair and metric, then a mean row per metric.
void write_self_consistency_csv(const SelfConsistency& sc, const std::string& path);

}  // namespace icnas
