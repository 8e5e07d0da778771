#include "ishm/report.hpp"

#include "ishm/error.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace ishm {

namespace {

std::string num(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string fixed(double v, int digits) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

std::ofstream open_out(const std::filesystem::path& file) {
    std::ofstream out(file, std::ios::trunc);
    if (!out) throw IoError("cannot open " + file.string() + " for writing");
    return out;
}

void finish(std::ofstream& out, const std::filesystem::path& file) {
    out.flush();
    if (!out) throw IoError("write failed: " + file.string());
}

std::string q_label(double q) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%g", q * 100.0);
    return std::string(buf) + "pct";
}

std::vector<std::string> split(const std::string& line, char sep) {
    std::vector<std::string> out;
    std::string cur;
    std::istringstream in(line);
    while (std::getline(in, cur, sep)) out.push_back(cur);
    if (!line.empty() && line.back() == sep) out.emplace_back();
    return out;
}

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"};

}  // namespace

void write_metrics_csv(const std::filesystem::path& file, const std::vector<MetricsRow>& rows) {
    std::ofstream out = open_out(file);
    std::vector<double> qs;
    if (!rows.empty())
        for (const ThresholdRow& t : rows.front().thresholds.rows) qs.push_back(t.q);
    out << "stage,model,variant,auc,drop,n,positives";
    for (double q : qs) {
        const std::string l = q_label(q);
        out << ",flagged_" << l << ",precision_" << l << ",recall_" << l << ",f1_" << l;
    }
    out << "\n";
    for (const MetricsRow& r : rows) {
        if (r.thresholds.rows.size() != qs.size()) throw InvalidConfig("metrics rows use different threshold lists");
        out << r.stage << "," << r.model << "," << r.variant << "," << num(r.auc) << "," << r.drop << ","
            << r.thresholds.n << "," << r.thresholds.positives;
        for (const ThresholdRow& t : r.thresholds.rows)
            out << "," << t.flagged << "," << num(t.precision) << "," << num(t.recall) << "," << num(t.f1);
        out << "\n";
    }
    finish(out, file);
}

std::vector<MetricsRow> read_metrics_csv(const std::filesystem::path& file) {
    std::ifstream in(file);
    if (!in) throw IoError("cannot open " + file.string());
    std::string line;
    if (!std::getline(in, line)) throw IoError(file.string() + ": empty file");
    const std::vector<std::string> header = split(line, ',');
    if (header.size() < 7 || header[0] != "stage" || header[3] != "auc")
        throw IoError(file.string() + ": not a metrics.csv file");
    std::vector<double> qs;
    for (std::size_t c = 7; c + 3 < header.size(); c += 4) {
        const std::string& h = header[c];
        const std::string pct = h.substr(h.find('_') + 1);
        qs.push_back(std::stod(pct.substr(0, pct.size() - 3)) / 100.0);
    }
    std::vector<MetricsRow> rows;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        const std::vector<std::string> f = split(line, ',');
        if (f.size() != header.size()) throw IoError(file.string() + ":" + std::to_string(lineno) + ": wrong field count");
        try {
            MetricsRow r;
            r.stage = std::stoi(f[0]);
            r.model = f[1];
            r.variant = f[2];
            r.auc = std::stod(f[3]);
            r.drop = f[4];
            r.thresholds.n = std::stoul(f[5]);
            r.thresholds.positives = std::stoul(f[6]);
            for (std::size_t k = 0; k < qs.size(); ++k) {
                ThresholdRow t;
                t.q = qs[k];
                t.flagged = std::stoul(f[7 + 4 * k]);
                t.precision = std::stod(f[8 + 4 * k]);
                t.recall = std::stod(f[9 + 4 * k]);
                t.f1 = std::stod(f[10 + 4 * k]);
                r.thresholds.rows.push_back(t);
            }
            rows.push_back(std::move(r));
        } catch (const std::logic_error& e) {
            throw IoError(file.string() + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
    return rows;
}

void write_roc_csv(const std::filesystem::path& file, const RocCurve& roc) {
    std::ofstream out = open_out(file);
    out << "fpr,tpr,threshold\n";
    for (std::size_t i = 0; i < roc.fpr.size(); ++i)
        out << num(roc.fpr[i]) << "," << num(roc.tpr[i]) << "," << num(roc.thresholds[i]) << "\n";
    finish(out, file);
}

void write_timing_csv(const std::filesystem::path& file, const std::vector<TimingRow>& rows) {
    std::ofstream out = open_out(file);
    out << "stage,model,variant,n_channels,instances,batch_size,batches,total_seconds,batch_mean_seconds,batch_std_seconds\n";
    for (const TimingRow& r : rows)
        out << r.stage << "," << r.model << "," << r.variant << "," << r.n_channels << "," << r.timing.instances << ","
            << r.timing.batch_size << "," << r.timing.batches << "," << num(r.timing.total_seconds) << ","
            << num(r.timing.batch_mean_seconds) << "," << num(r.timing.batch_std_seconds) << "\n";
    finish(out, file);
}

void attach_drops(std::vector<MetricsRow>& rows) {
    std::map<std::pair<std::string, std::string>, std::map<int, double>> series;
    for (const MetricsRow& r : rows) series[{r.model, r.variant}][r.stage] = r.auc;
    for (MetricsRow& r : rows) {
        const std::map<int, double>& s = series[{r.model, r.variant}];
        r.drop.clear();
        if (r.stage <= 1 || !s.contains(r.stage - 1)) continue;
        DropRow row;
        row.stage = r.stage;
        row.auc = r.auc;
        row.delta = r.auc - s.at(r.stage - 1);
        r.drop = format_drop(row);
    }
}

std::string markdown_report(const std::vector<MetricsRow>& rows) {
    std::vector<std::pair<std::string, std::string>> columns;
    std::set<int> stages;
    std::map<std::pair<int, std::pair<std::string, std::string>>, double> cell;
    for (const MetricsRow& r : rows) {
        const auto key = std::make_pair(r.model, r.variant);
        if (std::find(columns.begin(), columns.end(), key) == columns.end()) columns.push_back(key);
        stages.insert(r.stage);
        cell[{r.stage, key}] = r.auc;
    }
    std::ostringstream md;
    md << "| Stage |";
    for (const auto& [m, v] : columns) md << " " << m << " (" << v << ") |";
    md << "\n|---|";
    for (std::size_t i = 0; i < columns.size(); ++i) md << "---:|";
    md << "\n";
    for (int stage : stages) {
        md << "| Step " << stage << " |";
        for (const auto& col : columns) {
            auto it = cell.find({stage, col});
            md << " " << (it == cell.end() ? std::string("n/a") : fixed(it->second, 3)) << " |";
        }
        md << "\n";
        if (!stages.contains(stage - 1)) continue;
        md << "| (Drop) |";
        for (const auto& col : columns) {
            auto cur = cell.find({stage, col});
            auto prev = cell.find({stage - 1, col});
            std::string text = "n/a";
            if (cur != cell.end() && prev != cell.end()) {
                DropRow d;
                d.delta = cur->second - prev->second;
                d.significant = *d.delta <= kSignificantDrop + 1e-12;
                text = format_drop(d);
                if (d.significant) text = "**" + text + "**";
            }
            md << " " << text << " |";
        }
        md << "\n";
    }
    md << "\nBold drops are at least 0.02 AUC.\n";
    return md.str();
}

void write_roc_svg(const std::filesystem::path& file, const std::vector<RocSeries>& series, const std::string& title) {
    constexpr double W = 420, H = 420, M = 50, P = W - 2 * M;
    std::ofstream out = open_out(file);
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H + 20 * series.size()
        << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
    out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    out << "<text x=\"" << W / 2 << "\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">" << title << "</text>\n";
    out << "<rect x=\"" << M << "\" y=\"" << M << "\" width=\"" << P << "\" height=\"" << P
        << "\" fill=\"none\" stroke=\"black\"/>\n";
    out << "<line x1=\"" << M << "\" y1=\"" << M + P << "\" x2=\"" << M + P << "\" y2=\"" << M
        << "\" stroke=\"#bbb\" stroke-dasharray=\"4 4\"/>\n";
    for (int k = 0; k <= 4; ++k) {
        const double f = k / 4.0;
        out << "<text x=\"" << M + f * P << "\" y=\"" << M + P + 15 << "\" text-anchor=\"middle\">" << fixed(f, 2) << "</text>\n";
        out << "<text x=\"" << M - 5 << "\" y=\"" << M + P - f * P + 4 << "\" text-anchor=\"end\">" << fixed(f, 2) << "</text>\n";
    }
    out << "<text x=\"" << W / 2 << "\" y=\"" << M + P + 32 << "\" text-anchor=\"middle\">false positive rate</text>\n";
    out << "<text x=\"14\" y=\"" << H / 2 << "\" transform=\"rotate(-90 14 " << H / 2
        << ")\" text-anchor=\"middle\">true positive rate</text>\n";
    for (std::size_t s = 0; s < series.size(); ++s) {
        const char* color = kPalette[s % std::size(kPalette)];
        out << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
        const RocCurve& r = series[s].roc;
        for (std::size_t i = 0; i < r.fpr.size(); ++i)
            out << fixed(M + r.fpr[i] * P, 2) << "," << fixed(M + P - r.tpr[i] * P, 2) << " ";
        out << "\"/>\n";
        out << "<text x=\"" << M << "\" y=\"" << H + 20 * s << "\" fill=\"" << color << "\">" << series[s].label
            << " (AUC " << fixed(r.auc, 3) << ")</text>\n";
    }
    out << "</svg>\n";
    finish(out, file);
}

void write_signals_svg(const std::filesystem::path& file, const std::vector<SignalInstance>& examples,
                       double sample_rate_hz) {
    constexpr double W = 900, PH = 140, M = 40;
    std::ofstream out = open_out(file);
    const double H = M + examples.size() * (PH + 30);
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
        << "\" font-family=\"sans-serif\" font-size=\"12\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    for (std::size_t e = 0; e < examples.size(); ++e) {
        const SignalInstance& inst = examples[e];
        const double top = M / 2 + e * (PH + 30) + 20;
        double lo = 0.0, hi = 0.0;
        for (double v : inst.data.values()) {
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
        if (hi - lo < 1e-12) hi = lo + 1.0;
        std::string caption = "Stage " + std::to_string(inst.stage) + ", instance " + std::to_string(inst.instance_id);
        if (inst.anomaly) {
            caption += ": " + to_string(inst.anomaly->kind) + " on channel " + std::to_string(inst.anomaly->channel + 1) +
                       " at t=" + fixed(inst.anomaly->t_start_s, 2) + " s";
        } else {
            caption += ": normal";
        }
        out << "<text x=\"" << M << "\" y=\"" << top - 5 << "\">" << caption << "</text>\n";
        out << "<rect x=\"" << M << "\" y=\"" << top << "\" width=\"" << W - 2 * M << "\" height=\"" << PH
            << "\" fill=\"none\" stroke=\"#999\"/>\n";
        const std::size_t T = inst.data.samples();
        if (inst.anomaly) {
            const double t0 = inst.anomaly->t_start_s, t1 = t0 + std::max(inst.anomaly->duration_s, 1.0 / sample_rate_hz);
            const double span = T / sample_rate_hz;
            out << "<rect x=\"" << fixed(M + t0 / span * (W - 2 * M), 2) << "\" y=\"" << top << "\" width=\""
                << fixed(std::max(2.0, (t1 - t0) / span * (W - 2 * M)), 2) << "\" height=\"" << PH
                << "\" fill=\"#f4cccc\"/>\n";
        }
        for (std::size_t c = 0; c < inst.data.channels(); ++c) {
            out << "<polyline fill=\"none\" stroke=\"" << kPalette[c % std::size(kPalette)]
                << "\" stroke-width=\"1\" points=\"";
            for (std::size_t n = 0; n < T; ++n) {
                const double x = M + (W - 2 * M) * static_cast<double>(n) / static_cast<double>(T - 1);
                const double y = top + PH - (inst.data.at(c, n) - lo) / (hi - lo) * PH;
                out << fixed(x, 1) << "," << fixed(y, 1) << " ";
            }
            out << "\"/>\n";
        }
    }
    out << "</svg>\n";
    finish(out, file);
}

}  // namespace ishm
