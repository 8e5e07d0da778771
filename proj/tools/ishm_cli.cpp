// ishm: generate benchmark data, train detectors, score, evaluate, time, report.
//
// Exit codes: 0 success, 1 runtime failure, 2 invalid configuration or usage,
// 3 missing input.

#include "ishm/benchmark.hpp"
#include "ishm/checkpoint.hpp"
#include "ishm/cnn_ae.hpp"
#include "ishm/dataset_io.hpp"
#include "ishm/error.hpp"
#include "ishm/eval.hpp"
#include "ishm/report.hpp"
#include "ishm/transformer.hpp"

#include "CLI11.hpp"
#include "json.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

namespace fs = std::filesystem;
using nlohmann::json;
using namespace ishm;

namespace {

constexpr int kExitRuntime = 1;
constexpr int kExitConfig = 2;
constexpr int kExitMissing = 3;
constexpr const char* kOutputRootEnv = "ISHM_OUTPUT_ROOT";
constexpr const char* kConfigEcho = "config.toml";
constexpr const char* kTrainInfo = "train.json";

class MissingInput : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

void require_exists(const fs::path& p, const char* what) {
    if (!fs::exists(p)) throw MissingInput(std::string(what) + " not found: " + p.string());
}

fs::path default_out(const std::string& leaf) {
    const char* root = std::getenv(kOutputRootEnv);
    return fs::path(root && *root ? root : "ishm-runs") / leaf;
}

std::vector<double> parse_probs(const std::string& text) {
    std::vector<double> out;
    std::stringstream in(text);
    std::string item;
    while (std::getline(in, item, ',')) {
        try {
            std::size_t used = 0;
            out.push_back(std::stod(item, &used));
            if (used != item.size()) throw std::invalid_argument(item);
        } catch (const std::logic_error&) {
            throw InvalidConfig("not a number in probability list: '" + item + "'");
        }
    }
    return out;
}

std::vector<std::string> split_list(const std::string& text) {
    std::vector<std::string> out;
    std::stringstream in(text);
    std::string item;
    while (std::getline(in, item, ','))
        if (!item.empty()) out.push_back(item);
    return out;
}

void ensure_dir(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create directory " + dir.string() + ": " + ec.message());
}

// Resolved options of the active subcommand plus version strings; loadable
// again with --config.
void echo_config(const CLI::App& app, const fs::path& dir) {
    std::ofstream out(dir / kConfigEcho, std::ios::trunc);
    if (!out) throw IoError("cannot write " + (dir / kConfigEcho).string());
    out << "# generator_version = \"" << kGeneratorVersion << "\"\n";
    out << "# attn_model_version = \"" << kAttnModelVersion << "\"\n";
    out << "# cnnae_model_version = \"" << kCnnModelVersion << "\"\n";
    out << "[" << app.get_name() << "]\n" << app.config_to_str(true, false);
}

json read_json(const fs::path& file) {
    std::ifstream in(file);
    if (!in) throw MissingInput("cannot open " + file.string());
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw IoError(file.string() + ": " + e.what());
    }
}

void write_json(const fs::path& file, const json& j) {
    std::ofstream out(file, std::ios::trunc);
    if (!out) throw IoError("cannot write " + file.string());
    out << j.dump(2) << "\n";
}

Dataset load_input_dataset(const fs::path& dir) {
    require_exists(dir / kManifestFile, "dataset manifest");
    require_exists(dir / kDataFile, "dataset samples");
    return load_dataset(dir);
}

TrainedModel load_input_model(const fs::path& dir) {
    require_exists(dir / kCheckpointFile, "model checkpoint");
    return load_model(dir);
}

std::vector<bool> labels_of(const Dataset& ds) {
    std::vector<bool> y;
    y.reserve(ds.size());
    for (const SignalInstance& inst : ds.instances) y.push_back(inst.label);
    return y;
}

// --- gen ---------------------------------------------------------------------

struct GenOptions {
    int stage = 1;
    std::size_t n = 3000;
    std::string seed = "0";
    std::string out;
    double anomaly_rate = 0.10;
    std::string spike_probs;
    std::string localdev_probs;
    bool csv = false;
    unsigned threads = 0;
};

GenConfig make_gen_config(int stage, double anomaly_rate, const std::string& spike, const std::string& local) {
    if (stage < 1 || stage > kNumStages) throw InvalidConfig("stage must lie in 1.." + std::to_string(kNumStages));
    GenConfig cfg = GenConfig::for_stage(stage);
    cfg.anomaly_rate = anomaly_rate;
    if (!spike.empty()) cfg.spike_channel_probs = parse_probs(spike);
    if (!local.empty()) cfg.localdev_channel_probs = parse_probs(local);
    cfg.validate();
    return cfg;
}

int run_gen(const GenOptions& o, const CLI::App& app) {
    const GenConfig cfg = make_gen_config(o.stage, o.anomaly_rate, o.spike_probs, o.localdev_probs);
    if (o.n == 0) throw InvalidConfig("--n must be positive");
    const fs::path out = o.out.empty() ? default_out("gen-stage" + std::to_string(o.stage)) : fs::path(o.out);
    const Dataset ds = generate_dataset(cfg, o.n, parse_seed(o.seed), o.threads);
    save_dataset(ds, out);
    if (o.csv) export_csv(ds, out / "data.csv");
    echo_config(app, out);
    std::size_t anomalous = 0;
    for (const auto& inst : ds.instances) anomalous += inst.label;
    std::cout << "wrote " << ds.size() << " stage-" << o.stage << " instances (" << anomalous << " anomalous) to "
              << out.string() << "\n";
    return 0;
}

// --- train -------------------------------------------------------------------

struct TrainOptions {
    std::string data;
    int stage = 1;
    std::size_t n_train = 2000;
    std::string data_seed = "1";
    std::string model = "attn";
    std::string variant = "attn";
    std::string out;
    std::size_t epochs = 30;
    std::size_t batch_size = 32;
    double lr = 1e-3;
    std::string seed = "0";
    AttnTransformerConfig attn{};
    CnnAeConfig cnn{};
};

int run_train(TrainOptions o, const CLI::App& app) {
    const ModelKind kind = parse_model_kind(o.model);
    const ScoreVariant variant = parse_score_variant(o.variant);
    if (kind == ModelKind::CnnAe && variant != ScoreVariant::ReconOnly)
        throw InvalidConfig("the CNN autoencoder only supports --variant recon");

    Dataset train;
    if (!o.data.empty()) {
        train = load_input_dataset(o.data);
    } else {
        const GenConfig cfg = make_gen_config(o.stage, 0.10, "", "");
        train = generate_dataset(cfg, o.n_train, parse_seed(o.data_seed));
    }
    const fs::path out = o.out.empty() ? default_out(o.model + "-stage" + std::to_string(train.meta.stage)) : fs::path(o.out);

    TrainedModel model;
    TrainHistory history;
    if (kind == ModelKind::Attn) {
        o.attn.epochs = o.epochs;
        o.attn.batch_size = o.batch_size;
        o.attn.lr = o.lr;
        o.attn.seed = parse_seed(o.seed);
        AttnTrainResult r = train_attn_transformer(train, o.attn);
        history = r.history;
        model = from_result(std::move(r));
    } else {
        o.cnn.epochs = o.epochs;
        o.cnn.batch_size = o.batch_size;
        o.cnn.lr = o.lr;
        o.cnn.seed = parse_seed(o.seed);
        CnnTrainResult r = cnn_ae_train(train, o.cnn);
        history = r.history;
        model = from_result(std::move(r));
    }
    ensure_dir(out);
    save_model(model, out);
    echo_config(app, out);
    json info;
    info["model"] = o.model;
    info["variant"] = o.variant;
    info["stage"] = train.meta.stage;
    info["train_instances"] = train.size();
    info["train_dataset_hash"] = dataset_hash(train);
    info["model_version"] = kind == ModelKind::Attn ? kAttnModelVersion : kCnnModelVersion;
    info["generator_version"] = train.meta.generator_version;
    info["epoch_loss"] = history.epoch_loss;
    write_json(out / kTrainInfo, info);
    std::cout << "trained " << o.model << " on " << train.size() << " instances; loss " << history.epoch_loss.front()
              << " -> " << history.epoch_loss.back() << "; saved to " << out.string() << "\n";
    return 0;
}

// --- score -------------------------------------------------------------------

std::vector<ScoreVariant> resolve_variants(const TrainedModel& model, const fs::path& model_dir, const std::string& text) {
    if (model.kind == ModelKind::CnnAe) return {ScoreVariant::ReconOnly};
    if (text == "all") return {ScoreVariant::ReconOnly, ScoreVariant::AttnOnly, ScoreVariant::Combined};
    std::vector<ScoreVariant> out;
    if (text.empty()) {
        std::string v = "attn";
        if (fs::exists(model_dir / kTrainInfo)) v = read_json(model_dir / kTrainInfo).value("variant", v);
        out.push_back(parse_score_variant(v));
    } else {
        for (const std::string& v : split_list(text)) out.push_back(parse_score_variant(v));
    }
    if (out.empty()) throw InvalidConfig("no score variant selected");
    return out;
}

struct ScoreOptions {
    std::string model_dir;
    std::string data;
    std::string variant;
    double alpha = 0.5;
    std::string out;
    std::size_t batch_size = 32;
};

int run_score(const ScoreOptions& o, const CLI::App&) {
    const TrainedModel model = load_input_model(o.model_dir);
    const Dataset ds = load_input_dataset(o.data);
    const std::vector<ScoreVariant> variants = resolve_variants(model, o.model_dir, o.variant);
    const fs::path out = o.out.empty() ? default_out("scores.csv") : fs::path(o.out);
    if (out.has_parent_path()) ensure_dir(out.parent_path());
    std::vector<std::vector<double>> scores;
    for (ScoreVariant v : variants) scores.push_back(model.score(ds, {v, o.alpha}, o.batch_size));
    std::ofstream f(out, std::ios::trunc);
    if (!f) throw IoError("cannot write " + out.string());
    f << "id,label";
    for (ScoreVariant v : variants) f << ",score_" << to_string(v);
    f << "\n";
    char buf[40];
    for (std::size_t i = 0; i < ds.size(); ++i) {
        f << ds.instances[i].instance_id << "," << (ds.instances[i].label ? 1 : 0);
        for (const auto& s : scores) {
            std::snprintf(buf, sizeof buf, "%.17g", s[i]);
            f << "," << buf;
        }
        f << "\n";
    }
    if (!f) throw IoError("write failed: " + out.string());
    std::cout << "scored " << ds.size() << " instances into " << out.string() << "\n";
    return 0;
}

// --- eval --------------------------------------------------------------------

struct EvalOptions {
    std::string model_dir;
    std::string data;
    std::string variant;
    double alpha = 0.5;
    std::string thresholds;
    std::string out;
    std::size_t batch_size = 32;
    std::size_t examples = 4;
};

int run_eval(const EvalOptions& o, const CLI::App& app) {
    const TrainedModel model = load_input_model(o.model_dir);
    const Dataset ds = load_input_dataset(o.data);
    const std::vector<ScoreVariant> variants = resolve_variants(model, o.model_dir, o.variant);
    std::vector<double> qs = kDefaultThresholds;
    if (!o.thresholds.empty()) qs = parse_probs(o.thresholds);
    const fs::path out = o.out.empty() ? default_out("eval") : fs::path(o.out);
    ensure_dir(out);

    const std::vector<bool> labels = labels_of(ds);
    const int stage = ds.meta.stage;
    const std::string model_name = to_string(model.kind);

    std::vector<MetricsRow> rows;
    if (fs::exists(out / "metrics.csv")) rows = read_metrics_csv(out / "metrics.csv");
    std::vector<RocSeries> curves;
    for (ScoreVariant v : variants) {
        const std::vector<double> scores = model.score(ds, {v, o.alpha}, o.batch_size);
        MetricsRow row;
        row.stage = stage;
        row.model = model_name;
        row.variant = to_string(v);
        row.auc = auc(scores, labels);
        row.thresholds = threshold_metrics(scores, labels, qs);
        std::erase_if(rows, [&](const MetricsRow& r) {
            return r.stage == row.stage && r.model == row.model && r.variant == row.variant;
        });
        rows.push_back(row);
        curves.push_back({model_name + "/" + row.variant, roc_points(scores, labels)});
        std::cout << "stage " << stage << " " << model_name << "/" << row.variant << ": AUC " << row.auc << "\n";
    }
    std::stable_sort(rows.begin(), rows.end(), [](const MetricsRow& a, const MetricsRow& b) {
        return std::tie(a.stage, a.model, a.variant) < std::tie(b.stage, b.model, b.variant);
    });
    attach_drops(rows);
    write_metrics_csv(out / "metrics.csv", rows);

    const std::string tag = std::to_string(stage) + "_" + model_name;
    {
        std::ofstream f(out / ("roc_" + tag + ".csv"), std::ios::trunc);
        if (!f) throw IoError("cannot write ROC file in " + out.string());
        f << "series,fpr,tpr,threshold\n";
        char buf[120];
        for (const RocSeries& s : curves)
            for (std::size_t i = 0; i < s.roc.fpr.size(); ++i) {
                std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g", s.roc.fpr[i], s.roc.tpr[i], s.roc.thresholds[i]);
                f << s.label << "," << buf << "\n";
            }
    }
    write_roc_svg(out / ("roc_" + tag + ".svg"), curves, "Stage " + std::to_string(stage) + " ROC");

    std::vector<SignalInstance> examples;
    for (bool want : {false, true})
        for (const SignalInstance& inst : ds.instances)
            if (inst.label == want && examples.size() < (want ? o.examples : o.examples / 2)) examples.push_back(inst);
    if (!examples.empty()) write_signals_svg(out / ("signals_" + std::to_string(stage) + ".svg"), examples, ds.meta.sample_rate_hz);
    echo_config(app, out);
    return 0;
}

// --- bench-time --------------------------------------------------------------

struct BenchOptions {
    std::string model_dir;
    std::string data;
    std::string variant;
    std::size_t n = 3000;
    std::size_t batch_size = 32;
    std::string out;
};

int run_bench(const BenchOptions& o, const CLI::App& app) {
    const TrainedModel model = load_input_model(o.model_dir);
    const Dataset ds = load_input_dataset(o.data);
    if (o.n == 0 || o.n > ds.size())
        throw InvalidConfig("--n " + std::to_string(o.n) + " exceeds the dataset's " + std::to_string(ds.size()) + " instances");
    const ScoreVariant v = resolve_variants(model, o.model_dir, o.variant).front();
    std::vector<SignalMatrix> windows;
    for (std::size_t i = 0; i < o.n; ++i) windows.push_back(ds.instances[i].data);
    const BatchScorer scorer = [&](std::span<const SignalMatrix> batch) { return model.score(batch, {v, 0.5}, batch.size()); };
    const TimingReport rep = timing_benchmark(scorer, windows, o.batch_size);

    const fs::path out = o.out.empty() ? default_out("bench") : fs::path(o.out);
    ensure_dir(out);
    TimingRow row{ds.meta.stage, to_string(model.kind), to_string(v), ds.meta.n_channels, rep};
    std::vector<TimingRow> rows;
    // Rows of earlier runs are kept; same (stage, model, variant) is replaced.
    if (fs::exists(out / "timing.csv")) {
        std::ifstream in(out / "timing.csv");
        std::string line;
        std::getline(in, line);
        while (std::getline(in, line)) {
            std::vector<std::string> f = split_list(line);
            if (f.size() != 10) continue;
            TimingRow r;
            r.stage = std::stoi(f[0]);
            r.model = f[1];
            r.variant = f[2];
            r.n_channels = std::stoul(f[3]);
            r.timing.instances = std::stoul(f[4]);
            r.timing.batch_size = std::stoul(f[5]);
            r.timing.batches = std::stoul(f[6]);
            r.timing.total_seconds = std::stod(f[7]);
            r.timing.batch_mean_seconds = std::stod(f[8]);
            r.timing.batch_std_seconds = std::stod(f[9]);
            if (!(r.stage == row.stage && r.model == row.model && r.variant == row.variant)) rows.push_back(r);
        }
    }
    rows.push_back(row);
    std::stable_sort(rows.begin(), rows.end(), [](const TimingRow& a, const TimingRow& b) {
        return std::tie(a.stage, a.model, a.variant) < std::tie(b.stage, b.model, b.variant);
    });
    write_timing_csv(out / "timing.csv", rows);
    echo_config(app, out);
    std::cout << "stage " << row.stage << " " << row.model << ": " << rep.total_seconds << " s over " << rep.batches
              << " batches of " << rep.batch_size << "\n";
    return 0;
}

// --- report ------------------------------------------------------------------

struct ReportOptions {
    std::vector<std::string> inputs;
    std::string out;
};

int run_report(const ReportOptions& o, const CLI::App&) {
    std::vector<MetricsRow> rows;
    for (const std::string& in : o.inputs) {
        fs::path file = in;
        if (fs::is_directory(file)) file /= "metrics.csv";
        require_exists(file, "metrics file");
        for (MetricsRow& r : read_metrics_csv(file)) rows.push_back(std::move(r));
    }
    const std::string md = "# AUC by benchmark stage\n\n" + markdown_report(rows);
    if (o.out.empty() || o.out == "-") {
        std::cout << md;
    } else {
        const fs::path out = o.out;
        if (out.has_parent_path()) ensure_dir(out.parent_path());
        std::ofstream f(out, std::ios::trunc);
        if (!f) throw IoError("cannot write " + out.string());
        f << md;
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Incremental iSHM benchmark: data generation, detectors and evaluation"};
    app.set_config("--config", "", "TOML-style key = value file; command-line flags take precedence");
    app.require_subcommand(1);
    app.fallthrough();
    app.failure_message(CLI::FailureMessage::help);
    app.footer(std::string("Default output root: $") + kOutputRootEnv + " (else ./ishm-runs).");

    GenOptions gen;
    CLI::App* g = app.add_subcommand("gen", "Generate a benchmark dataset");
    g->add_option("--stage", gen.stage, "Benchmark stage 1-8")->capture_default_str();
    g->add_option("--n", gen.n, "Number of instances")->capture_default_str();
    g->add_option("--seed", gen.seed, "Dataset seed (decimal or 0x-hex)")->capture_default_str();
    g->add_option("--out", gen.out, "Output directory");
    g->add_option("--anomaly-rate", gen.anomaly_rate, "Per-instance anomaly probability")->capture_default_str();
    g->add_option("--spike-probs", gen.spike_probs, "Comma-separated spike channel probabilities (stage >= 6)");
    g->add_option("--localdev-probs", gen.localdev_probs, "Comma-separated local-deviation channel probabilities");
    g->add_flag("--csv", gen.csv, "Also write data.csv");
    g->add_option("--threads", gen.threads, "Worker threads (0 = all cores)")->capture_default_str();

    TrainOptions tr;
    CLI::App* t = app.add_subcommand("train", "Train a detector");
    t->add_option("--data", tr.data, "Training dataset directory (else generated from --stage)");
    t->add_option("--stage", tr.stage, "Stage to generate when --data is absent")->capture_default_str();
    t->add_option("--n-train", tr.n_train, "Instances to generate when --data is absent")->capture_default_str();
    t->add_option("--data-seed", tr.data_seed, "Seed for generated training data")->capture_default_str();
    t->add_option("--model", tr.model, "attn | cnnae")->capture_default_str();
    t->add_option("--variant", tr.variant, "Default scoring variant: recon | attn | combined")->capture_default_str();
    t->add_option("--out", tr.out, "Model directory");
    t->add_option("--epochs", tr.epochs)->capture_default_str();
    t->add_option("--batch-size", tr.batch_size)->capture_default_str();
    t->add_option("--lr", tr.lr)->capture_default_str();
    t->add_option("--seed", tr.seed, "Initialisation and shuffling seed")->capture_default_str();
    t->add_option("--patch-len", tr.attn.patch_len)->capture_default_str();
    t->add_option("--d-model", tr.attn.d_model)->capture_default_str();
    t->add_option("--n-heads", tr.attn.n_heads)->capture_default_str();
    t->add_option("--n-layers", tr.attn.n_layers)->capture_default_str();
    t->add_option("--ffn-hidden", tr.attn.ffn_hidden)->capture_default_str();
    t->add_option("--decoder-hidden", tr.attn.decoder_hidden)->capture_default_str();
    t->add_option("--pos-init-std", tr.attn.pos_init_std)->capture_default_str();
    t->add_option("--kernel", tr.cnn.kernel, "CNN kernel length")->capture_default_str();
    t->add_option("--channels1", tr.cnn.channels1, "CNN first-layer filters")->capture_default_str();
    t->add_option("--channels2", tr.cnn.channels2, "CNN second-layer filters")->capture_default_str();

    ScoreOptions sc;
    CLI::App* s = app.add_subcommand("score", "Score a dataset with a trained model");
    s->add_option("--model-dir", sc.model_dir)->required();
    s->add_option("--data", sc.data)->required();
    s->add_option("--variant", sc.variant, "recon,attn,combined or all (default: trained variant)");
    s->add_option("--alpha", sc.alpha, "Combined-variant weight on the attention term")->capture_default_str();
    s->add_option("--out", sc.out, "CSV file");
    s->add_option("--batch-size", sc.batch_size)->capture_default_str();

    EvalOptions ev;
    CLI::App* e = app.add_subcommand("eval", "AUC, ROC and threshold metrics; merges into <out>/metrics.csv");
    e->add_option("--model-dir", ev.model_dir)->required();
    e->add_option("--data", ev.data)->required();
    e->add_option("--variant", ev.variant, "recon,attn,combined or all (default: trained variant)");
    e->add_option("--alpha", ev.alpha)->capture_default_str();
    e->add_option("--thresholds", ev.thresholds, "Comma-separated flagged fractions");
    e->add_option("--out", ev.out, "Output directory");
    e->add_option("--batch-size", ev.batch_size)->capture_default_str();
    e->add_option("--examples", ev.examples, "Anomalous example windows in signals_<stage>.svg")->capture_default_str();

    BenchOptions bt;
    CLI::App* b = app.add_subcommand("bench-time", "Inference timing over sequential batches");
    b->add_option("--model-dir", bt.model_dir)->required();
    b->add_option("--data", bt.data)->required();
    b->add_option("--variant", bt.variant);
    b->add_option("--n", bt.n, "Instances to time")->capture_default_str();
    b->add_option("--batch-size", bt.batch_size)->capture_default_str();
    b->add_option("--out", bt.out, "Output directory");

    ReportOptions rp;
    CLI::App* r = app.add_subcommand("report", "Markdown AUC/drop table from metrics.csv files");
    r->add_option("--in", rp.inputs, "metrics.csv files or eval directories")->required();
    r->add_option("--out", rp.out, "Markdown file (default: stdout)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& err) {
        return app.exit(err);
    } catch (const CLI::CallForAllHelp& err) {
        return app.exit(err);
    } catch (const CLI::FileError& err) {
        std::cerr << "error: " << err.what() << "\n";
        return kExitMissing;
    } catch (const CLI::ParseError& err) {
        app.exit(err);
        return kExitConfig;
    }

    try {
        if (g->parsed()) return run_gen(gen, *g);
        if (t->parsed()) return run_train(tr, *t);
        if (s->parsed()) return run_score(sc, *s);
        if (e->parsed()) return run_eval(ev, *e);
        if (b->parsed()) return run_bench(bt, *b);
        if (r->parsed()) return run_report(rp, *r);
    } catch (const MissingInput& err) {
        std::cerr << "error: " << err.what() << "\n";
        return kExitMissing;
    } catch (const InvalidConfig& err) {
        std::cerr << "error: " << err.what() << "\n";
        return kExitConfig;
    } catch (const InvalidDistribution& err) {
        std::cerr << "error: " << err.what() << "\n";
        return kExitConfig;
    } catch (const InvalidParameter& err) {
        std::cerr << "error: " << err.what() << "\n";
        return kExitConfig;
    } catch (const std::exception& err) {
        std::cerr << "error: " << err.what() << "\n";
        return kExitRuntime;
    }
    return kExitRuntime;
}
