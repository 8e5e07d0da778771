#include "ishm/error.hpp"
#include "ishm/eval.hpp"
#include "ishm/report.hpp"

#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <thread>

#include <unistd.h>

using namespace ishm;
namespace fs = std::filesystem;

namespace {

struct Sample {
    std::vector<double> scores;
    std::vector<bool> labels;
};

// Random scores with ties on a coarse grid; both classes present.
Sample random_sample(SeededRng& r, std::size_t n, bool coarse) {
    Sample s;
    for (std::size_t i = 0; i < n; ++i) {
        s.scores.push_back(coarse ? static_cast<double>(r.next_below(7)) : r.next_gaussian(0.0, 1.0));
        s.labels.push_back(r.next_unit() < 0.3);
    }
    s.labels[0] = true;
    s.labels[1] = false;
    return s;
}

const std::map<int, double> kReferenceAucs{{1, 0.992}, {2, 0.988}, {3, 0.989}, {4, 0.982},
                                        {5, 0.979}, {6, 0.971}, {7, 0.844}, {8, 0.815}};

}  // namespace

TEST_CASE("auc examples") {
    const std::vector<double> s{0.9, 0.8, 0.2, 0.1};
    const std::vector<bool> y{true, true, false, false};
    CHECK(auc(s, y) == 1.0);
    CHECK(auc(std::vector<double>(4, 0.3), y) == 0.5);
    CHECK_THROWS_AS(auc(s, std::vector<bool>(4, true)), UndefinedMetric);
    CHECK_THROWS_AS(auc(s, std::vector<bool>(3, true)), ShapeError);
    CHECK_THROWS_AS(auc(std::vector<double>{NAN, 1, 2, 3}, y), UndefinedMetric);
}

TEST_CASE("auc equals the pairwise oracle") {
    SeededRng r(1);
    for (int trial = 0; trial < 200; ++trial) {
        const Sample s = random_sample(r, 2 + r.next_below(499), trial % 2 == 0);
        REQUIRE(std::abs(auc(s.scores, s.labels) - auc_bruteforce(s.scores, s.labels)) <= 1e-12);
    }
}

TEST_CASE("auc is invariant under increasing transforms and flips under negation") {
    SeededRng r(2);
    for (int trial = 0; trial < 50; ++trial) {
        const Sample s = random_sample(r, 300, trial % 2 == 0);
        std::vector<double> t, neg;
        for (double x : s.scores) t.push_back(std::exp(2.0 * x) + 5.0), neg.push_back(-x);
        const double a = auc(s.scores, s.labels);
        REQUIRE(auc(t, s.labels) == a);
        REQUIRE(std::abs(auc(neg, s.labels) - (1.0 - a)) < 1e-12);
    }
}

TEST_CASE("roc curve") {
    const std::vector<double> s{0.9, 0.8, 0.2, 0.1};
    const std::vector<bool> y{true, true, false, false};
    const RocCurve roc = roc_points(s, y);
    bool corner = false;
    for (std::size_t i = 0; i < roc.fpr.size(); ++i) corner = corner || (roc.fpr[i] == 0.0 && roc.tpr[i] == 1.0);
    CHECK(corner);
    CHECK(roc.fpr.front() == 0.0);
    CHECK(roc.tpr.back() == 1.0);
    CHECK(roc.auc == 1.0);

    SeededRng r(3);
    for (int trial = 0; trial < 50; ++trial) {
        const Sample smp = random_sample(r, 400, trial % 2 == 0);
        const RocCurve c = roc_points(smp.scores, smp.labels);
        REQUIRE(std::abs(c.auc - auc(smp.scores, smp.labels)) < 1e-12);
        REQUIRE(std::is_sorted(c.fpr.begin(), c.fpr.end()));
        REQUIRE(std::is_sorted(c.tpr.begin(), c.tpr.end()));
    }
}

TEST_CASE("threshold metrics") {
    std::vector<double> s;
    std::vector<bool> y;
    for (int i = 0; i < 100; ++i) {
        s.push_back(i < 10 ? 10.0 + i : static_cast<double>(i) / 1000.0);
        y.push_back(i < 10);
    }
    const MetricsReport perfect = threshold_metrics(s, y, {0.10, 1.0});
    CHECK(perfect.rows[0].flagged == 10);
    CHECK(perfect.rows[0].precision == 1.0);
    CHECK(perfect.rows[0].recall == 1.0);
    CHECK(perfect.rows[0].f1 == 1.0);
    CHECK(perfect.rows[1].recall == 1.0);
    CHECK(perfect.rows[1].precision == doctest::Approx(0.10));

    SeededRng r(4);
    std::vector<double> rs(3000);
    std::vector<bool> ry(3000);
    for (std::size_t i = 0; i < 3000; ++i) rs[i] = r.next_unit(), ry[i] = r.next_unit() < 0.1;
    const MetricsReport rep = threshold_metrics(rs, ry, {0.10});
    CHECK(rep.rows[0].flagged == 300);

    // Ties are resolved by instance order, so repeated calls agree.
    const std::vector<double> tied(50, 1.0);
    std::vector<bool> ty(50, false);
    ty[3] = ty[40] = true;
    const MetricsReport t1 = threshold_metrics(tied, ty, {0.1});
    CHECK(t1.rows[0].flagged == 5);
    CHECK(t1.rows[0].true_positives == 1);

    CHECK_THROWS_AS(threshold_metrics(s, y, {0.0}), InvalidConfig);
    CHECK_THROWS_AS(threshold_metrics(s, y, {}), InvalidConfig);
    CHECK(kDefaultThresholds.size() == 7);
}

TEST_CASE("drop table") {
    const auto same = drop_table({{1, 0.99}, {2, 0.99}});
    CHECK(*same[1].delta == 0.0);
    CHECK_FALSE(same[1].significant);
    CHECK(format_drop(same[1]) == "(--)");

    const auto rows = drop_table(kReferenceAucs);
    const std::vector<std::string> expected{"", "(-0.004)", "(--)", "(-0.007)", "(-0.003)", "(-0.008)", "(-0.127)", "(-0.029)"};
    for (std::size_t i = 0; i < rows.size(); ++i) CHECK(format_drop(rows[i]) == expected[i]);
    CHECK(rows[6].significant);
    CHECK(rows[7].significant);
    for (std::size_t i = 1; i < 6; ++i) CHECK_FALSE(rows[i].significant);

    const auto pair = drop_table({{1, 0.5}, {2, 0.5}, {3, 0.5}, {4, 0.5}, {5, 0.5}, {6, 0.971}, {7, 0.844}});
    CHECK(format_drop(pair[6]) == "(-0.127)");
    CHECK(pair[6].significant);

    std::map<int, double> decreasing;
    for (int s = 1; s <= 8; ++s) decreasing[s] = 1.0 - 0.01 * s * s;
    for (const DropRow& d : drop_table(decreasing))
        if (d.delta) CHECK(*d.delta <= 0.0);

    CHECK_THROWS_AS(drop_table({{1, 0.9}, {3, 0.8}}), InvalidConfig);
    CHECK_THROWS_AS(drop_table({{2, 0.9}}), InvalidConfig);
}

TEST_CASE("timing runs one warm-up then every batch in order") {
    std::vector<SignalMatrix> windows(3000, SignalMatrix(1, 4));
    std::size_t calls = 0, scored = 0;
    const TimingReport rep = timing_benchmark(
        [&](std::span<const SignalMatrix> b) {
            ++calls;
            scored += b.size();
            return std::vector<double>(b.size(), 0.0);
        },
        windows, 32);
    CHECK(rep.batches == 94);
    CHECK(calls == 95);
    CHECK(scored == 3000 + 32);
    CHECK(rep.batch_seconds.size() == 94);
    CHECK(rep.total_seconds >= 0.0);
    CHECK_THROWS_AS(timing_benchmark([](std::span<const SignalMatrix> b) { return std::vector<double>(b.size() + 1); },
                                     windows, 32),
                    ShapeError);
}

TEST_CASE("timing grows with work") {
    auto scorer_for = [](int reps) {
        return [reps](std::span<const SignalMatrix> b) {
            std::vector<double> out(b.size(), 0.0);
            for (std::size_t i = 0; i < b.size(); ++i)
                for (int k = 0; k < reps; ++k)
                    for (double v : b[i].values()) out[i] += std::sqrt(std::abs(v) + k);
            return out;
        };
    };
    std::vector<SignalMatrix> windows(256, SignalMatrix(1, 200, 1.0));
    const double t1 = timing_benchmark(scorer_for(20), windows).total_seconds;
    const double t2 = timing_benchmark(scorer_for(80), windows).total_seconds;
    CHECK(t2 > t1);
}

TEST_CASE("metrics csv round-trip and markdown report") {
    const fs::path dir = fs::temp_directory_path() / ("ishm_report_" + std::to_string(::getpid()));
    fs::create_directories(dir);
    std::vector<MetricsRow> rows;
    SeededRng r(5);
    for (const auto& [stage, value] : kReferenceAucs) {
        MetricsRow row;
        row.stage = stage;
        row.model = "attn";
        row.variant = "attn";
        row.auc = value;
        std::vector<double> s(200);
        std::vector<bool> y(200);
        for (std::size_t i = 0; i < 200; ++i) s[i] = r.next_unit(), y[i] = i % 10 == 0;
        row.thresholds = threshold_metrics(s, y);
        rows.push_back(row);
    }
    attach_drops(rows);
    CHECK(rows[6].drop == "(-0.127)");
    write_metrics_csv(dir / "metrics.csv", rows);
    const std::vector<MetricsRow> back = read_metrics_csv(dir / "metrics.csv");
    REQUIRE(back.size() == rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        CHECK(back[i].auc == rows[i].auc);
        CHECK(back[i].drop == rows[i].drop);
        CHECK(back[i].thresholds.rows.size() == rows[i].thresholds.rows.size());
        CHECK(back[i].thresholds.rows[3].f1 == rows[i].thresholds.rows[3].f1);
    }

    const std::string md = markdown_report(back);
    std::istringstream in(md);
    int auc_rows = 0, drop_rows = 0;
    for (std::string line; std::getline(in, line);) {
        if (line.rfind("| Step ", 0) == 0) ++auc_rows;
        if (line.rfind("| (Drop)", 0) == 0) ++drop_rows;
    }
    CHECK(auc_rows == 8);
    CHECK(drop_rows == 7);
    CHECK(md.find("**(-0.127)**") != std::string::npos);
    CHECK(md.find("**(-0.004)**") == std::string::npos);

    const RocCurve roc = roc_points(std::vector<double>{0.1, 0.4, 0.35, 0.8}, {false, false, true, true});
    write_roc_csv(dir / "roc.csv", roc);
    write_roc_svg(dir / "roc.svg", {{"x", roc}}, "ROC");
    std::ifstream svg(dir / "roc.svg");
    std::string first;
    std::getline(svg, first);
    CHECK(first.find("<svg") != std::string::npos);
    fs::remove_all(dir);
}
