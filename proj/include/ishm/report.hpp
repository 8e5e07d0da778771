#pragma once

#include "ishm/benchmark.hpp"
#include "ishm/eval.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace ishm {

// One line of metrics.csv.
struct MetricsRow {
    int stage = 1;
    std::string model;    // attn | cnnae
    std::string variant;  // recon | attn | combined
    double auc = 0.0;
    std::string drop;     // format_drop() text; empty for the first stage
    MetricsReport thresholds;
};

struct TimingRow {
    int stage = 1;
    std::string model;
    std::string variant;
    std::size_t n_channels = 1;
    TimingReport timing;
};

// Doubles are written with 17 significant digits so files round-trip.
void write_metrics_csv(const std::filesystem::path& file, const std::vector<MetricsRow>& rows);
std::vector<MetricsRow> read_metrics_csv(const std::filesystem::path& file);
void write_roc_csv(const std::filesystem::path& file, const RocCurve& roc);
void write_timing_csv(const std::filesystem::path& file, const std::vector<TimingRow>& rows);

// Fills in `drop` for every (model, variant) series that covers stages 1..k.
void attach_drops(std::vector<MetricsRow>& rows);

// Markdown table with one AUC row per stage and a (Drop) row beneath every
// stage after the first; one column per (model, variant).
std::string markdown_report(const std::vector<MetricsRow>& rows);

struct RocSeries {
    std::string label;
    RocCurve roc;
};
void write_roc_svg(const std::filesystem::path& file, const std::vector<RocSeries>& series, const std::string& title);
// Grid of example windows, one panel per instance, every channel overlaid.
void write_signals_svg(const std::filesystem::path& file, const std::vector<SignalInstance>& examples,
                       double sample_rate_hz);

}  // namespace ishm
