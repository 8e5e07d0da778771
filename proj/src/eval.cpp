#include "ishm/eval.hpp"

#include "ishm/error.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>

namespace ishm {

namespace {

std::pair<std::size_t, std::size_t> class_counts(std::span<const double> scores, const std::vector<bool>& labels) {
    if (scores.size() != labels.size())
        throw ShapeError("scores and labels differ in length (" + std::to_string(scores.size()) + " vs " +
                         std::to_string(labels.size()) + ")");
    const auto pos = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), true));
    const std::size_t neg = labels.size() - pos;
    if (pos == 0 || neg == 0) throw UndefinedMetric("AUC needs at least one positive and one negative instance");
    for (double s : scores)
        if (std::isnan(s)) throw UndefinedMetric("NaN score");
    return {pos, neg};
}

// Indices sorted by descending score; equal scores keep index order.
std::vector<std::size_t> descending_order(std::span<const double> scores) {
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
    return order;
}

}  // namespace

double auc(std::span<const double> scores, const std::vector<bool>& labels) {
    const auto [pos, neg] = class_counts(scores, labels);
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
    // Sum of (doubled) average ranks of the positives; doubling keeps tie ranks integral.
    double rank_sum2 = 0.0;
    for (std::size_t i = 0; i < order.size();) {
        std::size_t j = i;
        while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
        const double avg_rank2 = static_cast<double>(i + 1 + j);  // 2 * mean of ranks i+1 .. j
        for (std::size_t k = i; k < j; ++k)
            if (labels[order[k]]) rank_sum2 += avg_rank2;
        i = j;
    }
    const double p = static_cast<double>(pos), n = static_cast<double>(neg);
    const double u = 0.5 * rank_sum2 - p * (p + 1.0) / 2.0;
    return u / (p * n);
}

double auc_bruteforce(std::span<const double> scores, const std::vector<bool>& labels) {
    const auto [pos, neg] = class_counts(scores, labels);
    double wins = 0.0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        if (!labels[i]) continue;
        for (std::size_t j = 0; j < scores.size(); ++j) {
            if (labels[j]) continue;
            if (scores[i] > scores[j]) wins += 1.0;
            else if (scores[i] == scores[j]) wins += 0.5;
        }
    }
    return wins / (static_cast<double>(pos) * static_cast<double>(neg));
}

RocCurve roc_points(std::span<const double> scores, const std::vector<bool>& labels) {
    const auto [pos, neg] = class_counts(scores, labels);
    const std::vector<std::size_t> order = descending_order(scores);
    RocCurve roc;
    roc.fpr.push_back(0.0);
    roc.tpr.push_back(0.0);
    roc.thresholds.push_back(std::numeric_limits<double>::infinity());
    std::size_t tp = 0, fp = 0;
    for (std::size_t i = 0; i < order.size();) {
        const double s = scores[order[i]];
        for (; i < order.size() && scores[order[i]] == s; ++i) (labels[order[i]] ? tp : fp)++;
        roc.fpr.push_back(static_cast<double>(fp) / static_cast<double>(neg));
        roc.tpr.push_back(static_cast<double>(tp) / static_cast<double>(pos));
        roc.thresholds.push_back(s);
    }
    // Integrate in counts so the area is exact up to one final division.
    double area2 = 0.0;
    std::size_t prev_tp = 0, prev_fp = 0;
    tp = fp = 0;
    for (std::size_t i = 0; i < order.size();) {
        const double s = scores[order[i]];
        for (; i < order.size() && scores[order[i]] == s; ++i) (labels[order[i]] ? tp : fp)++;
        area2 += static_cast<double>(fp - prev_fp) * static_cast<double>(tp + prev_tp);
        prev_tp = tp;
        prev_fp = fp;
    }
    roc.auc = area2 / (2.0 * static_cast<double>(pos) * static_cast<double>(neg));
    return roc;
}

MetricsReport threshold_metrics(std::span<const double> scores, const std::vector<bool>& labels,
                                const std::vector<double>& q_list) {
    if (q_list.empty()) throw InvalidConfig("threshold_metrics: empty threshold list");
    if (scores.size() != labels.size()) throw ShapeError("scores and labels differ in length");
    for (double q : q_list)
        if (!(q > 0.0 && q <= 1.0)) throw InvalidConfig("threshold fraction " + std::to_string(q) + " outside (0, 1]");
    MetricsReport rep;
    rep.n = scores.size();
    rep.positives = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), true));
    const std::vector<std::size_t> order = descending_order(scores);
    for (double q : q_list) {
        ThresholdRow row;
        row.q = q;
        row.flagged = static_cast<std::size_t>(std::llround(q * static_cast<double>(rep.n)));
        for (std::size_t i = 0; i < row.flagged; ++i)
            if (labels[order[i]]) ++row.true_positives;
        const double tp = static_cast<double>(row.true_positives);
        row.precision = row.flagged ? tp / static_cast<double>(row.flagged) : 0.0;
        row.recall = rep.positives ? tp / static_cast<double>(rep.positives) : 0.0;
        row.f1 = row.precision + row.recall > 0.0 ? 2.0 * row.precision * row.recall / (row.precision + row.recall) : 0.0;
        rep.rows.push_back(row);
    }
    return rep;
}

std::vector<DropRow> drop_table(const std::map<int, double>& auc_by_stage) {
    std::vector<DropRow> rows;
    int expected = 1;
    for (const auto& [stage, value] : auc_by_stage) {
        if (stage != expected)
            throw InvalidConfig("drop table stages must be contiguous from 1; missing stage " + std::to_string(expected));
        DropRow row;
        row.stage = stage;
        row.auc = value;
        if (!rows.empty()) {
            row.delta = value - rows.back().auc;
            // Tolerance absorbs the representation error of decimal AUCs.
            row.significant = *row.delta <= kSignificantDrop + 1e-12;
        }
        rows.push_back(row);
        ++expected;
    }
    return rows;
}

std::string format_drop(const DropRow& row) {
    if (!row.delta) return "";
    const double rounded = std::round(*row.delta * 1000.0) / 1000.0;
    if (rounded >= 0.0) return "(--)";
    char buf[32];
    std::snprintf(buf, sizeof buf, "(%.3f)", rounded);
    return buf;
}

TimingReport timing_benchmark(const BatchScorer& scorer, std::span<const SignalMatrix> windows, std::size_t batch_size) {
    if (batch_size == 0) throw InvalidConfig("batch_size must be positive");
    if (windows.empty()) throw InvalidConfig("timing_benchmark: no instances");
    using clock = std::chrono::steady_clock;
    TimingReport rep;
    rep.instances = windows.size();
    rep.batch_size = batch_size;
    scorer(windows.subspan(0, std::min(batch_size, windows.size())));
    for (std::size_t start = 0; start < windows.size(); start += batch_size) {
        const std::size_t end = std::min(windows.size(), start + batch_size);
        const auto t0 = clock::now();
        const std::vector<double> s = scorer(windows.subspan(start, end - start));
        const auto t1 = clock::now();
        if (s.size() != end - start) throw ShapeError("scorer returned the wrong number of scores");
        rep.batch_seconds.push_back(std::chrono::duration<double>(t1 - t0).count());
    }
    rep.batches = rep.batch_seconds.size();
    rep.total_seconds = std::accumulate(rep.batch_seconds.begin(), rep.batch_seconds.end(), 0.0);
    rep.batch_mean_seconds = rep.total_seconds / static_cast<double>(rep.batches);
    double var = 0.0;
    for (double t : rep.batch_seconds) var += (t - rep.batch_mean_seconds) * (t - rep.batch_mean_seconds);
    rep.batch_std_seconds = std::sqrt(var / static_cast<double>(rep.batches));
    return rep;
}

}  // namespace ishm
