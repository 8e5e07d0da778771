// Acceptance runner: one PASS/FAIL line per criterion.
//
//   ishm_acceptance [--only 1,2,...] [--known-failures 7,9] [--work DIR]
//
// Exit status is 0 when every failing criterion is listed in
// --known-failures, 1 otherwise. Listed criteria still print FAIL.

#include "ishm/benchmark.hpp"
#include "ishm/checkpoint.hpp"
#include "ishm/cnn_ae.hpp"
#include "ishm/error.hpp"
#include "ishm/eval.hpp"
#include "ishm/transformer.hpp"

#include "support.hpp"

#include "CLI11.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <sstream>

#include <sys/wait.h>
#include <unistd.h>

using namespace ishm;
using namespace ishm::testing;
namespace fs = std::filesystem;

namespace {

// --- pinned tolerances ---------------------------------------------------------

constexpr std::size_t kC1Instances = 100'000;
constexpr double kC1RateTarget = 0.10, kC1RateTol = 0.003;
constexpr double kC1RatioTol = 0.05;
constexpr double kC1NoiseRelTol = 0.05;
constexpr double kC1MaxSeconds = 60.0;

constexpr std::size_t kC2Instances = 1000;
constexpr double kC2MaxJump = 1e-9;

constexpr std::size_t kC3GridPoints = 1000;
constexpr double kC3Tol = 1e-14;

constexpr int kC4OpCases = 100;
constexpr double kC4OpTol = 1e-12;
constexpr int kC4ModelConfigs = 20;
constexpr double kC4GradTol = 1e-4;
constexpr double kC4MaxSeconds = 120.0;

constexpr int kC5Cases = 200;
constexpr std::size_t kC5MaxN = 500;
constexpr double kC5Tol = 1e-12;

constexpr std::size_t kTrainN = 2000, kTestN = 1000;
constexpr std::uint64_t kTrainSeed = 1, kTestSeed = 2;
constexpr double kC7MinAuc = 0.95;
constexpr double kC7MaxSeconds = 15 * 60.0;
constexpr double kC8MinDrop = 0.05;
constexpr double kC9MaxGap = 0.05;

constexpr std::size_t kC10Instances = 3000, kC10Batch = 32;
constexpr int kC10Repeats = 5;
constexpr double kC10MaxRatio = 1.5;

constexpr const char* kCli = ISHM_CLI_PATH;

using clock_type = std::chrono::steady_clock;

double seconds_since(clock_type::time_point t0) {
    return std::chrono::duration<double>(clock_type::now() - t0).count();
}

std::string fmt(const char* f, auto... args) {
    char buf[1024];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::vector<bool> labels_of(const Dataset& ds) {
    std::vector<bool> y;
    for (const SignalInstance& inst : ds.instances) y.push_back(inst.label);
    return y;
}

// --- criterion 1 ---------------------------------------------------------------

Outcome generator_statistics() {
    const GenConfig cfg = GenConfig::for_stage(1);
    const auto t0 = clock_type::now();
    const Dataset ds = generate_dataset(cfg, kC1Instances, 20240101);
    const double gen_seconds = seconds_since(t0);

    std::size_t anomalous = 0, spikes = 0, local = 0, normal = 0;
    double ratio_sum = 0.0;
    for (const SignalInstance& inst : ds.instances) {
        if (inst.anomaly) {
            ++anomalous;
            ++(inst.anomaly->kind == AnomalyKind::Spike ? spikes : local);
            continue;
        }
        ++normal;
        const SignalMatrix det = render_deterministic(inst.params, cfg);
        double ss = 0.0;
        for (std::size_t k = 0; k < det.samples(); ++k) ss += std::pow(inst.data.at(0, k) - det.at(0, k), 2);
        ratio_sum += ss / static_cast<double>(det.samples()) / std::pow(inst.params.channels[0].noise_std, 2);
    }
    const double rate = static_cast<double>(anomalous) / static_cast<double>(ds.size());
    const double ratio = static_cast<double>(spikes) / static_cast<double>(local);
    const double noise = std::sqrt(ratio_sum / static_cast<double>(normal));
    Outcome o;
    o.pass = std::abs(rate - kC1RateTarget) <= kC1RateTol && std::abs(ratio - 1.0) <= kC1RatioTol &&
             std::abs(noise - 1.0) <= kC1NoiseRelTol && gen_seconds < kC1MaxSeconds;
    o.detail = fmt("anomalous %.4f, spike:local %.4f, residual std / sigma %.4f, %.1f s for %zu instances", rate, ratio,
                   noise, gen_seconds, kC1Instances);
    return o;
}

// --- criterion 2 ---------------------------------------------------------------

Outcome phase_continuity() {
    const GenConfig cfg = GenConfig::for_stage(2);
    double worst = 0.0;
    for (std::uint64_t id = 0; id < kC2Instances; ++id) {
        SeededRng r = instance_stream(77, cfg.stage, id).fork(static_cast<std::uint64_t>(StreamRole::Params));
        InstanceParams p = sample_params(cfg, r);
        ChannelParams& c = p.channels.at(0);
        c.speed->amp_factor = 1.0;
        const double t = c.speed->t_change_s;
        worst = std::max(worst, std::abs(sinusoid_before_change(c, t) - sinusoid_after_change(c, t)));
        // The rendered signal switches branch at the same point.
        worst = std::max(worst, std::abs(deterministic_value(c, t, cfg.duration_s) - sinusoid_before_change(c, t)));
    }
    return {worst < kC2MaxJump, fmt("max |s(t_change-) - s(t_change+)| = %.3g over %zu instances", worst, kC2Instances)};
}

// --- criterion 3 ---------------------------------------------------------------

Outcome impulse_kernel_check() {
    SeededRng r(3);
    double worst = 0.0;
    bool edge_ok = true;
    for (int trial = 0; trial < 10; ++trial) {
        const double beta = r.next_uniform(0.2, 2.0), omega = r.next_uniform(0.01, 0.1);
        const double cut = 3.0 * omega;
        for (std::size_t i = 0; i < kC3GridPoints; ++i) {
            // Grid over [-omega, 4 omega]; the point i = 800 lands on 3 omega.
            const double tau = i == 800 ? cut : -omega + 5.0 * omega * static_cast<double>(i) / (kC3GridPoints - 1);
            const double expect = (tau >= 0.0 && tau <= cut) ? beta * std::exp(-(tau / omega) * (tau / omega)) : 0.0;
            worst = std::max(worst, std::abs(impulse_kernel(tau, beta, omega) - expect));
        }
        edge_ok = edge_ok && impulse_kernel(cut, beta, omega) > 0.0 &&
                  impulse_kernel(std::nextafter(cut, INFINITY), beta, omega) == 0.0 && impulse_kernel(0.0, beta, omega) == beta;
    }
    return {worst <= kC3Tol && edge_ok,
            fmt("max error %.3g on %zu-point grids; truncation edge %s", worst, kC3GridPoints, edge_ok ? "exact" : "wrong")};
}

// --- criterion 4 ---------------------------------------------------------------

double op_oracle_case(SeededRng& r) {
    const std::size_t B = 1 + r.next_below(3), M = 1 + r.next_below(6), K = 1 + r.next_below(6), N = 1 + r.next_below(6);
    Tape t(false);
    auto c = [&](const Tensor& x) { return t.constant(x); };
    double worst = 0.0;
    auto track = [&](const Tensor& got, const Tensor& want) { worst = std::max(worst, max_abs_diff(got, want)); };

    const Tensor a = random_tensor({B, M, K}, r), b = random_tensor({B, K, N}, r), bt = random_tensor({B, N, K}, r);
    const Tensor w = random_tensor({K, N}, r), m2 = random_tensor({M, K}, r);
    track(matmul(c(a), c(w)).value(), naive_matmul(a, w));
    track(bmm(c(a), c(b)).value(), naive_bmm(a, b, false));
    track(bmm(c(a), c(bt), true).value(), naive_bmm(a, bt, true));
    track(transpose(c(m2)).value(), naive_transpose(m2));
    const Tensor p4 = random_tensor({B, M, K, N}, r);
    track(permute_0213(c(p4)).value(), naive_permute_0213(p4));

    const Tensor s = random_tensor({B, M, N}, r, 3.0), g = random_tensor({N}, r), bias = random_tensor({N}, r);
    track(softmax_rows(c(s)).value(), naive_softmax(s));
    track(layer_norm(c(s), c(g), c(bias)).value(), naive_layer_norm(s, g, bias));
    Tensor bc(s.shape()), rl(s.shape()), mr(s.shape()), sum(s.shape()), dif(s.shape()), prod(s.shape()), sc(s.shape());
    const Tensor s2 = random_tensor(s.shape(), r), rw = random_tensor({B * M}, r);
    for (std::size_t i = 0; i < s.size(); ++i) {
        bc[i] = s[i] + bias[i % N];
        rl[i] = std::max(0.0, s[i]);
        mr[i] = s[i] * rw[i / N];
        sum[i] = s[i] + s2[i];
        dif[i] = s[i] - s2[i];
        prod[i] = s[i] * s2[i];
        sc[i] = s[i] * 0.37;
    }
    track(add_broadcast(c(s), c(bias)).value(), bc);
    track(relu(c(s)).value(), rl);
    track(mul_rows(c(s), c(rw)).value(), mr);
    track(add(c(s), c(s2)).value(), sum);
    track(sub(c(s), c(s2)).value(), dif);
    track(mul(c(s), c(s2)).value(), prod);
    track(scale(c(s), 0.37).value(), sc);
    worst = std::max(worst, std::abs(mse_loss(c(s), c(s2)).value().item() - naive_mse(s, s2)));

    const std::size_t Ci = 1 + r.next_below(3), Co = 1 + r.next_below(3), Kk = 1 + r.next_below(5);
    const std::size_t stride = 1 + r.next_below(3), T = Kk + r.next_below(12);
    const Tensor x = random_tensor({B, Ci, T}, r), cw = random_tensor({Co, Ci, Kk}, r), cb = random_tensor({Co}, r);
    const Tensor tw = random_tensor({Ci, Co, Kk}, r);
    track(conv1d(c(x), c(cw), c(cb), stride).value(), naive_conv1d(x, cw, cb, stride));
    track(conv_transpose1d(c(x), c(tw), c(cb), stride).value(), naive_conv_transpose1d(x, tw, cb, stride));
    return worst;
}

Outcome numerics_oracle() {
    const auto t0 = clock_type::now();
    SeededRng r(4);
    double op_worst = 0.0;
    for (int i = 0; i < kC4OpCases; ++i) op_worst = std::max(op_worst, op_oracle_case(r));

    double grad_worst = 0.0;
    std::string where;
    std::size_t checked = 0;
    for (int i = 0; i < kC4ModelConfigs; ++i) {
        GradCheck g;
        const std::size_t C = 1 + r.next_below(3);
        if (i % 2 == 0) {
            AttnTransformerConfig cfg;
            cfg.n_channels = C;
            cfg.patch_len = 2 + r.next_below(4);
            cfg.n_samples = cfg.patch_len * (2 + r.next_below(5));
            cfg.n_heads = 1 + r.next_below(3);
            cfg.d_model = cfg.n_heads * (1 + r.next_below(4));
            cfg.n_layers = 1 + r.next_below(2);
            cfg.ffn_hidden = 2 + r.next_below(8);
            cfg.decoder_hidden = 2 + r.next_below(8);
            cfg.seed = r.next_u64();
            AttnTransformer m(cfg);
            // Random saliency and offsets so no parameter sits at its init symmetry.
            for (std::size_t k = 0; k < m.params().size(); ++k)
                for (double& v : m.params().value(k).data()) v += r.next_gaussian(0.0, 0.3);
            g = check_gradients(m.params(), m.loss_fn(), random_tensor({1 + r.next_below(3), C, cfg.n_samples}, r));
        } else {
            CnnAeConfig cfg;
            cfg.n_channels = C;
            cfg.kernel = 2 + r.next_below(4);
            cfg.stride = 1 + r.next_below(2);
            cfg.channels1 = 1 + r.next_below(4);
            cfg.channels2 = 1 + r.next_below(4);
            // Smallest length >= 12 whose encoder lengths mirror back exactly.
            for (cfg.n_samples = 12;; ++cfg.n_samples) {
                try {
                    cfg.validate();
                    break;
                } catch (const InvalidConfig&) {
                }
            }
            cfg.seed = r.next_u64();
            CnnAutoencoder m(cfg);
            g = check_gradients(m.params(), m.loss_fn(), random_tensor({1 + r.next_below(3), C, cfg.n_samples}, r));
        }
        checked += g.checked;
        if (g.max_rel_error > grad_worst) {
            grad_worst = g.max_rel_error;
            where = fmt("config %d %s", i, g.worst.c_str());
        }
    }
    const double secs = seconds_since(t0);
    return {op_worst <= kC4OpTol && grad_worst < kC4GradTol && secs < kC4MaxSeconds,
            fmt("op oracle max error %.3g over %d cases; gradient max rel error %.3g (%s) over %zu parameters in %d "
                "configs; %.1f s",
                op_worst, kC4OpCases, grad_worst, where.empty() ? "-" : where.c_str(), checked, kC4ModelConfigs, secs)};
}

// --- criterion 5 ---------------------------------------------------------------

Outcome auc_oracle() {
    SeededRng r(5);
    double worst = 0.0;
    for (int i = 0; i < kC5Cases; ++i) {
        const std::size_t n = 2 + r.next_below(kC5MaxN - 1);
        std::vector<double> s(n);
        std::vector<bool> y(n);
        const bool ties = i % 2 == 0;
        for (std::size_t k = 0; k < n; ++k) {
            s[k] = ties ? static_cast<double>(r.next_below(10)) : r.next_gaussian(0.0, 1.0);
            y[k] = r.next_unit() < 0.3;
        }
        y[0] = true;
        y[1] = false;
        worst = std::max(worst, std::abs(auc(s, y) - auc_bruteforce(s, y)));
    }
    return {worst <= kC5Tol, fmt("max |sorted - pairwise| = %.3g over %d inputs (n <= %zu, half with ties)", worst, kC5Cases, kC5MaxN)};
}

// --- criterion 6 ---------------------------------------------------------------

Outcome drop_arithmetic() {
    const std::map<int, double> column{{1, 0.992}, {2, 0.988}, {3, 0.989}, {4, 0.982},
                                       {5, 0.979}, {6, 0.971}, {7, 0.844}, {8, 0.815}};
    const std::vector<std::string> expected{"", "(-0.004)", "(--)", "(-0.007)", "(-0.003)", "(-0.008)", "(-0.127)", "(-0.029)"};
    const std::vector<bool> flagged{false, false, false, false, false, false, true, true};
    const std::vector<DropRow> rows = drop_table(column);
    bool ok = rows.size() == expected.size();
    std::string got;
    for (std::size_t i = 0; ok && i < rows.size(); ++i) {
        ok = format_drop(rows[i]) == expected[i] && rows[i].significant == flagged[i];
        if (i) got += format_drop(rows[i]) + (rows[i].significant ? "*" : "") + " ";
    }
    return {ok, "drops " + got + "(* = flagged)"};
}

// --- criteria 7-10 share trained models ------------------------------------------

struct StageRun {
    int stage = 0;
    std::map<ScoreVariant, double> auc;
    double train_seconds = 0.0;
    double eval_seconds = 0.0;
    std::optional<TrainedModel> model;
    Dataset test;
};

StageRun run_stage(int stage) {
    StageRun run;
    run.stage = stage;
    const GenConfig cfg = GenConfig::for_stage(stage);
    const Dataset train = generate_dataset(cfg, kTrainN, kTrainSeed);
    run.test = generate_dataset(cfg, kTestN, kTestSeed);
    const auto t0 = clock_type::now();
    run.model = from_result(train_attn_transformer(train, AttnTransformerConfig{}));
    run.train_seconds = seconds_since(t0);
    const auto t1 = clock_type::now();
    const std::vector<bool> y = labels_of(run.test);
    for (ScoreVariant v : {ScoreVariant::ReconOnly, ScoreVariant::AttnOnly, ScoreVariant::Combined})
        run.auc[v] = auc(run.model->score(run.test, {v, 0.5}), y);
    run.eval_seconds = seconds_since(t1);
    std::printf("  stage %d: AUC recon %.4f, attn %.4f, combined %.4f (train %.0f s, eval %.1f s)\n", stage,
                run.auc[ScoreVariant::ReconOnly], run.auc[ScoreVariant::AttnOnly], run.auc[ScoreVariant::Combined],
                run.train_seconds, run.eval_seconds);
    std::fflush(stdout);
    return run;
}

std::string auc_triplet(const StageRun& r) {
    return fmt("recon %.4f, attn %.4f, combined %.4f", r.auc.at(ScoreVariant::ReconOnly), r.auc.at(ScoreVariant::AttnOnly),
               r.auc.at(ScoreVariant::Combined));
}

Outcome stage1_detection(const StageRun& s1) {
    double best = 0.0;
    for (const auto& [v, a] : s1.auc) best = std::max(best, a);
    const double wall = s1.train_seconds + s1.eval_seconds;
    return {best >= kC7MinAuc && wall < kC7MaxSeconds,
            fmt("best AUC %.4f (need >= %.2f): %s; %.0f s train+eval", best, kC7MinAuc, auc_triplet(s1).c_str(), wall)};
}

Outcome noise_bottleneck(const StageRun& s6, const StageRun& s7) {
    const double a6 = s6.auc.at(ScoreVariant::AttnOnly), a7 = s7.auc.at(ScoreVariant::AttnOnly);
    return {a7 <= a6 - kC8MinDrop,
            fmt("attn AUC stage 6 %.4f -> stage 7 %.4f (drop %.4f, need >= %.2f); stage 6: %s; stage 7: %s", a6, a7,
                a6 - a7, kC8MinDrop, auc_triplet(s6).c_str(), auc_triplet(s7).c_str())};
}

Outcome variant_parity(const StageRun& s1) {
    const double gap = std::abs(s1.auc.at(ScoreVariant::AttnOnly) - s1.auc.at(ScoreVariant::ReconOnly));
    return {gap <= kC9MaxGap, fmt("|attn - recon| = %.4f (need <= %.2f): %s", gap, kC9MaxGap, auc_triplet(s1).c_str())};
}

struct TimedModel {
    const TrainedModel* model;
    ScoreVariant variant;
    std::vector<SignalMatrix> windows;
    double best = INFINITY;
};

Outcome timing_protocol(const StageRun& s1) {
    std::vector<TrainedModel> owned;
    owned.reserve(3);
    std::vector<TimedModel> runs;  // stages 1, 3, 5, then the CNN on stage 1
    for (int stage : {1, 3, 5}) {
        const GenConfig cfg = GenConfig::for_stage(stage);
        const Dataset bench = generate_dataset(cfg, kC10Instances, 3);
        std::vector<SignalMatrix> windows;
        for (const SignalInstance& inst : bench.instances) windows.push_back(inst.data);
        if (stage == 1) {
            runs.push_back({&*s1.model, ScoreVariant::AttnOnly, windows});
        } else {
            // Inference cost does not depend on weight values; one epoch suffices.
            AttnTransformerConfig ac;
            ac.epochs = 1;
            owned.push_back(from_result(train_attn_transformer(generate_dataset(cfg, kTrainN, kTrainSeed), ac)));
            runs.push_back({&owned.back(), ScoreVariant::AttnOnly, windows});
        }
    }
    CnnAeConfig cc;
    cc.epochs = 1;
    owned.push_back(from_result(cnn_ae_train(generate_dataset(GenConfig::for_stage(1), kTrainN, kTrainSeed), cc)));
    runs.push_back({&owned.back(), ScoreVariant::ReconOnly, runs[0].windows});

    // Interleaved rounds, minimum per model: drift hits every model alike and
    // contention only ever adds time.
    for (int round = 0; round < kC10Repeats; ++round)
        for (TimedModel& t : runs) {
            const BatchScorer scorer = [&](std::span<const SignalMatrix> b) {
                return t.model->score(b, {t.variant, 0.5}, b.size());
            };
            t.best = std::min(t.best, timing_benchmark(scorer, t.windows, kC10Batch).total_seconds);
        }

    const double a1 = runs[0].best, a3 = runs[1].best, a5 = runs[2].best, cnn = runs[3].best;
    const bool monotone = a1 < a3 && a3 < a5;
    const double ratio = a1 / cnn;
    return {monotone && ratio <= kC10MaxRatio,
            fmt("proposed model %.3f / %.3f / %.3f s on stages 1 / 3 / 5 (%s); CNN autoencoder %.3f s on stage 1, ratio "
                "%.2f (need <= %.1f); best of %d interleaved rounds",
                a1, a3, a5, monotone ? "increasing" : "not increasing", cnn, ratio, kC10MaxRatio, kC10Repeats)};
}

// --- criterion 11 ----------------------------------------------------------------

int sh(const std::string& cmd) {
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& f) {
    std::ifstream in(f, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

Outcome pipeline_determinism(const fs::path& work) {
    std::vector<std::string> metrics;
    for (const char* run : {"run_a", "run_b"}) {
        const fs::path dir = work / run;
        fs::remove_all(dir);
        fs::create_directories(dir);
        const std::string cli = std::string("'") + kCli + "'";
        const std::string log = " >> '" + (dir / "log.txt").string() + "' 2>&1";
        const std::string d = "'" + dir.string() + "/";
        const int rc = sh(cli + " gen --stage 1 --n 500 --seed 11 --out " + d + "train'" + log) |
                       sh(cli + " gen --stage 1 --n 300 --seed 12 --out " + d + "test'" + log) |
                       sh(cli + " train --data " + d + "train' --epochs 3 --seed 5 --out " + d + "model'" + log) |
                       sh(cli + " eval --model-dir " + d + "model' --data " + d + "test' --variant all --out " + d + "eval'" + log);
        if (rc != 0) return {false, fmt("pipeline command failed in %s (see log.txt)", run)};
        metrics.push_back(slurp(dir / "eval" / "metrics.csv"));
    }
    const bool same = !metrics[0].empty() && metrics[0] == metrics[1];
    return {same, fmt("gen -> train -> eval twice: metrics.csv %zu bytes, %s", metrics[0].size(),
                      same ? "bit-identical" : "DIFFERENT")};
}

std::set<int> parse_list(const std::string& text) {
    std::set<int> out;
    std::stringstream in(text);
    std::string item;
    while (std::getline(in, item, ','))
        if (!item.empty()) out.insert(std::stoi(item));
    return out;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Acceptance criteria 1-11"};
    std::string only, known;
    std::string work = (fs::temp_directory_path() / ("ishm_acceptance_" + std::to_string(::getpid()))).string();
    app.add_option("--only", only, "Comma-separated criteria to run (default: all)");
    app.add_option("--known-failures", known, "Criteria whose failure does not fail the run");
    std::string report;
    app.add_option("--work", work, "Scratch directory for the pipeline run");
    app.add_option("--report", report, "Also write the result lines to this file");
    CLI11_PARSE(app, argc, argv);

    std::set<int> selected = parse_list(only);
    if (selected.empty())
        for (int i = 1; i <= 11; ++i) selected.insert(i);
    const std::set<int> known_failures = parse_list(known);
    const std::map<int, std::string> names{{1, "generator statistics"},  {2, "phase continuity"},
                                           {3, "stage-8 impulse kernel"}, {4, "numerics oracle"},
                                           {5, "AUC oracle"},             {6, "drop-table arithmetic"},
                                           {7, "stage-1 detection"},      {8, "noise-bottleneck trend"},
                                           {9, "variant parity"},         {10, "timing protocol"},
                                           {11, "pipeline determinism"}};

    std::optional<StageRun> s1, s6, s7;
    auto need_s1 = [&]() -> const StageRun& {
        if (!s1) s1 = run_stage(1);
        return *s1;
    };

    int failed = 0, unexpected = 0;
    std::string lines;
    for (int c : selected) {
        Outcome o;
        const auto t0 = clock_type::now();
        try {
            switch (c) {
            case 1: o = generator_statistics(); break;
            case 2: o = phase_continuity(); break;
            case 3: o = impulse_kernel_check(); break;
            case 4: o = numerics_oracle(); break;
            case 5: o = auc_oracle(); break;
            case 6: o = drop_arithmetic(); break;
            case 7: o = stage1_detection(need_s1()); break;
            case 8:
                if (!s6) s6 = run_stage(6);
                if (!s7) s7 = run_stage(7);
                o = noise_bottleneck(*s6, *s7);
                break;
            case 9: o = variant_parity(need_s1()); break;
            case 10: o = timing_protocol(need_s1()); break;
            case 11: o = pipeline_determinism(work); break;
            default: o = {false, "no such criterion"};
            }
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        const bool is_known = known_failures.contains(c);
        if (!o.pass) {
            ++failed;
            if (!is_known) ++unexpected;
        }
        const std::string line =
            fmt("[%s] %2d %s: %s (%.1f s)%s\n", o.pass ? "PASS" : "FAIL", c, names.contains(c) ? names.at(c).c_str() : "?",
                o.detail.c_str(), seconds_since(t0), is_known ? (o.pass ? " [listed as known failure, passed]" : " [known failure]") : "");
        lines += line;
        std::fputs(line.c_str(), stdout);
        std::fflush(stdout);
    }
    fs::remove_all(work);
    const std::string summary = fmt("%zu criteria: %zu pass, %d fail (%d known, %d unexpected)\n", selected.size(),
                                    selected.size() - static_cast<std::size_t>(failed), failed, failed - unexpected, unexpected);
    lines += summary;
    std::fputs(summary.c_str(), stdout);
    if (!report.empty()) std::ofstream(report) << lines;
    return unexpected == 0 ? 0 : 1;
}
