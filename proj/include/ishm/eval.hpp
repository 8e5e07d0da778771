#pragma once

#include "ishm/benchmark.hpp"

#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace ishm {

// Mann-Whitney AUC with half credit for ties, via average ranks.
// Throws UndefinedMetric unless both classes are present.
double auc(std::span<const double> scores, const std::vector<bool>& labels);
// O(n^2) pairwise reference.
double auc_bruteforce(std::span<const double> scores, const std::vector<bool>& labels);

struct RocCurve {
    // Start at (0, 0), end at (1, 1); one point per distinct score.
    std::vector<double> fpr;
    std::vector<double> tpr;
    std::vector<double> thresholds;  // score at or above which instances are flagged; +inf for the origin
    double auc = 0.0;                // trapezoidal area
};

RocCurve roc_points(std::span<const double> scores, const std::vector<bool>& labels);

inline const std::vector<double> kDefaultThresholds{0.005, 0.010, 0.015, 0.020, 0.10, 0.20, 0.30};

struct ThresholdRow {
    double q = 0.0;
    std::size_t flagged = 0;
    std::size_t true_positives = 0;
    double precision = 0.0;  // 0 when nothing is flagged
    double recall = 0.0;     // 0 when there are no positives
    double f1 = 0.0;
};

struct MetricsReport {
    std::size_t n = 0;
    std::size_t positives = 0;
    std::vector<ThresholdRow> rows;
};

// Flags the top round(q * n) scores; equal scores keep instance order.
// q must lie in (0, 1]. Throws InvalidConfig for an empty or invalid q list.
MetricsReport threshold_metrics(std::span<const double> scores, const std::vector<bool>& labels,
                                const std::vector<double>& q_list = kDefaultThresholds);

struct DropRow {
    int stage = 1;
    double auc = 0.0;
    std::optional<double> delta;  // auc(stage) - auc(stage - 1); absent for the first stage
    bool significant = false;     // delta <= -0.02
};

inline constexpr double kSignificantDrop = -0.02;

// Stages must be contiguous from 1. Throws InvalidConfig otherwise.
std::vector<DropRow> drop_table(const std::map<int, double>& auc_by_stage);
// "(-0.004)" for negative deltas rounded to three decimals, "(--)" otherwise.
std::string format_drop(const DropRow& row);

struct TimingReport {
    double total_seconds = 0.0;
    std::size_t instances = 0;
    std::size_t batch_size = 0;
    std::size_t batches = 0;
    double batch_mean_seconds = 0.0;
    double batch_std_seconds = 0.0;
    std::vector<double> batch_seconds;
};

using BatchScorer = std::function<std::vector<double>(std::span<const SignalMatrix>)>;

// Sequential batches over in-memory windows after one untimed warm-up batch.
TimingReport timing_benchmark(const BatchScorer& scorer, std::span<const SignalMatrix> windows,
                              std::size_t batch_size = 32);

}  // namespace ishm
