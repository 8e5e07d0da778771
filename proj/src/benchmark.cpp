#include "ishm/benchmark.hpp"

#include "ishm/error.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <thread>

namespace ishm {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;
constexpr double kIndexSlack = 1e-9;

void check_probs(const std::vector<double>& probs, int n_channels, const char* name) {
    if (probs.size() != static_cast<std::size_t>(n_channels))
        throw InvalidConfig(std::string(name) + ": expected " + std::to_string(n_channels) + " entries, got " +
                            std::to_string(probs.size()));
    double sum = 0.0;
    for (double p : probs) {
        if (!(p >= 0.0) || !std::isfinite(p)) throw InvalidConfig(std::string(name) + ": negative or non-finite entry");
        sum += p;
    }
    if (std::abs(sum - 1.0) > 1e-12)
        throw InvalidConfig(std::string(name) + ": probabilities sum to " + std::to_string(sum) + ", not 1");
}

int pick_weighted(const std::vector<double>& probs, double u) {
    double cum = 0.0;
    int last_positive = 0;
    for (std::size_t i = 0; i < probs.size(); ++i) {
        if (probs[i] <= 0.0) continue;
        cum += probs[i];
        last_positive = static_cast<int>(i);
        if (u < cum) return last_positive;
    }
    return last_positive;
}

}  // namespace

std::string to_string(SensorGroup group) {
    switch (group) {
    case SensorGroup::Axle: return "axle";
    case SensorGroup::Bogie: return "bogie";
    case SensorGroup::Body: return "body";
    }
    return "?";
}

std::string to_string(AnomalyKind kind) {
    return kind == AnomalyKind::Spike ? "spike" : "local_deviation";
}

Features Features::for_stage(int stage) {
    if (stage < 1 || stage > kNumStages) throw InvalidConfig("unknown stage " + std::to_string(stage));
    Features f;
    f.n_channels = stage <= 2 ? 1 : stage <= 4 ? 2 : 6;
    f.speed_change = stage >= 2;
    f.phase_offset = stage >= 3;
    f.noise_change = stage >= 4;
    f.group_ranges = stage >= 5;
    f.weighted_channels = stage >= 6;
    f.hf_burst = stage >= 7;
    f.impulses = stage >= 8;
    return f;
}

std::array<GroupRanges, 3> GenConfig::default_group_ranges() {
    GroupRanges axle;
    axle.frequency_hz = DistSpec::uniform(1.0, 25.0);
    axle.hf_amplitude = DistSpec::uniform(0.5, 2.0);
    axle.hf_frequency_hz = DistSpec::uniform(25.0, 50.0);
    axle.impulse_period_s = DistSpec::uniform(0.1, 0.3);
    axle.impulse_amplitude = DistSpec::uniform(0.5, 2.0);

    GroupRanges bogie;
    bogie.frequency_hz = DistSpec::uniform(1.0, 15.0);
    bogie.hf_amplitude = DistSpec::uniform(0.3, 1.5);
    bogie.hf_frequency_hz = DistSpec::uniform(15.0, 40.0);
    bogie.impulse_period_s = DistSpec::uniform(0.15, 0.3);
    bogie.impulse_amplitude = DistSpec::uniform(0.3, 1.5);

    GroupRanges body;
    body.frequency_hz = DistSpec::uniform(1.0, 5.0);
    body.hf_amplitude = DistSpec::uniform(0.2, 1.0);
    body.hf_frequency_hz = DistSpec::uniform(5.0, 30.0);
    body.impulse_period_s = DistSpec::uniform(0.2, 0.5);
    body.impulse_amplitude = DistSpec::uniform(0.2, 1.0);

    return {axle, bogie, body};
}

GenConfig GenConfig::for_stage(int stage) {
    GenConfig cfg;
    cfg.stage = stage;
    cfg.validate();
    return cfg;
}

std::size_t GenConfig::n_samples() const {
    return static_cast<std::size_t>(std::llround(sample_rate_hz * duration_s));
}

SensorGroup GenConfig::channel_group(int channel) const {
    if (!features().group_ranges) return SensorGroup::Bogie;
    return static_cast<SensorGroup>(std::clamp(channel / 2, 0, 2));
}

const GroupRanges& GenConfig::ranges_for(int channel) const {
    if (!features().group_ranges) return baseline;
    return groups[static_cast<std::size_t>(channel_group(channel))];
}

void GenConfig::validate() const {
    const Features f = Features::for_stage(stage);
    if (!(sample_rate_hz > 0.0) || !(duration_s > 0.0)) throw InvalidConfig("sample rate and duration must be positive");
    const double samples = sample_rate_hz * duration_s;
    if (std::abs(samples - std::round(samples)) > 1e-9)
        throw InvalidConfig("sample_rate_hz * duration_s must be an integer sample count");
    if (!(anomaly_rate >= 0.0 && anomaly_rate <= 1.0)) throw InvalidConfig("anomaly_rate must lie in [0, 1]");
    if (f.weighted_channels) {
        check_probs(spike_channel_probs, f.n_channels, "spike_channel_probs");
        check_probs(localdev_channel_probs, f.n_channels, "localdev_channel_probs");
    }
    try {
        for (const GroupRanges* g : {&baseline, &groups[0], &groups[1], &groups[2]}) {
            for (const DistSpec* d : {&g->amplitude, &g->frequency_hz, &g->noise_std, &g->hf_amplitude,
                                      &g->hf_frequency_hz, &g->impulse_period_s, &g->impulse_amplitude})
                d->validate();
            if (g->impulse_period_s.p1 <= 0.0) throw InvalidConfig("impulse period must be positive");
        }
        common.spike_offset.validate();
        common.local_offset.validate();
    } catch (const InvalidDistribution& e) {
        throw InvalidConfig(e.what());
    }
    if (common.impulse_width_s.p1 <= 0.0) throw InvalidConfig("impulse width must be positive");
}

SeededRng instance_stream(std::uint64_t dataset_seed, int stage, std::uint64_t instance_id) {
    return SeededRng(dataset_seed).fork(static_cast<std::uint64_t>(stage)).fork(instance_id);
}

InstanceParams sample_params(const GenConfig& cfg, SeededRng& rng) {
    cfg.validate();
    const Features f = cfg.features();
    const CommonRanges& common = cfg.common;
    InstanceParams params;
    params.channels.reserve(static_cast<std::size_t>(f.n_channels));
    for (int ch = 0; ch < f.n_channels; ++ch) {
        // Draw order follows the stage order, so a stage's draws are a prefix
        // of the next stage's.
        SeededRng r = rng.fork(static_cast<std::uint64_t>(ch));
        const GroupRanges& g = cfg.ranges_for(ch);
        ChannelParams p;
        p.group = cfg.channel_group(ch);
        p.amplitude = g.amplitude.sample(r);
        p.frequency_hz = g.frequency_hz.sample(r);
        p.noise_std = g.noise_std.sample(r);
        if (f.speed_change) {
            SpeedChange s;
            s.t_change_s = common.change_time_s.sample(r);
            s.freq_factor = common.freq_factor.sample(r);
            s.amp_factor = common.amp_factor.sample(r);
            p.speed = s;
        }
        if (f.phase_offset) p.phase = common.phase.sample(r);
        if (f.noise_change) {
            NoiseChange n;
            n.t_change_s = common.noise_change_time_s.sample(r);
            n.delta_std = common.noise_increase.sample(r);
            p.noise_change = n;
        }
        if (f.hf_burst) {
            HfBurst h;
            h.t_start_s = common.hf_start_s.sample(r);
            h.duration_s = common.hf_duration_s.sample(r);
            h.phase = common.hf_phase.sample(r);
            h.amplitude = g.hf_amplitude.sample(r);
            h.frequency_hz = g.hf_frequency_hz.sample(r);
            p.hf_burst = h;
        }
        if (f.impulses) {
            ImpulseTrain imp;
            imp.period_s = g.impulse_period_s.sample(r);
            imp.amplitude = g.impulse_amplitude.sample(r);
            imp.width_s = common.impulse_width_s.sample(r);
            imp.count = static_cast<int>(std::floor(cfg.duration_s / imp.period_s));
            p.impulses = imp;
        }
        params.channels.push_back(p);
    }
    return params;
}

double sinusoid_before_change(const ChannelParams& p, double t) {
    return p.amplitude * std::sin(kTwoPi * p.frequency_hz * t + p.phase);
}

double sinusoid_after_change(const ChannelParams& p, double t) {
    const SpeedChange s = p.speed.value_or(SpeedChange{});
    return s.amp_factor * p.amplitude *
           std::sin(kTwoPi * (s.freq_factor * p.frequency_hz) * (t - s.t_change_s) +
                    kTwoPi * p.frequency_hz * s.t_change_s + p.phase);
}

double impulse_kernel(double tau, double beta, double omega) {
    if (!(omega > 0.0)) throw InvalidParameter("impulse_kernel: omega must be positive");
    if (tau < 0.0 || tau > 3.0 * omega) return 0.0;
    const double r = tau / omega;
    return beta * std::exp(-(r * r));
}

double deterministic_value(const ChannelParams& p, double t, double duration_s) {
    double v = (p.speed && t >= p.speed->t_change_s) ? sinusoid_after_change(p, t) : sinusoid_before_change(p, t);
    if (p.hf_burst) {
        const HfBurst& h = *p.hf_burst;
        if (t >= h.t_start_s && t <= std::min(h.t_end_s(), duration_s))
            v += h.amplitude * std::sin(kTwoPi * h.frequency_hz * t + h.phase);
    }
    if (p.impulses) {
        const ImpulseTrain& imp = *p.impulses;
        for (int k = 0; k < imp.count; ++k) v += impulse_kernel(t - k * imp.period_s, imp.amplitude, imp.width_s);
    }
    return v;
}

double noise_std_at(const ChannelParams& p, double t) {
    if (p.noise_change && t >= p.noise_change->t_change_s) return p.noise_std + p.noise_change->delta_std;
    return p.noise_std;
}

SignalMatrix render_deterministic(const InstanceParams& params, const GenConfig& cfg) {
    const std::size_t n = cfg.n_samples();
    SignalMatrix out(params.channels.size(), n);
    for (std::size_t c = 0; c < params.channels.size(); ++c)
        for (std::size_t i = 0; i < n; ++i)
            out.at(c, i) = deterministic_value(params.channels[c], static_cast<double>(i) / cfg.sample_rate_hz,
                                               cfg.duration_s);
    return out;
}

SignalMatrix render_clean(const InstanceParams& params, const GenConfig& cfg, const SeededRng& noise_rng) {
    SignalMatrix out = render_deterministic(params, cfg);
    for (std::size_t c = 0; c < params.channels.size(); ++c) {
        SeededRng r = noise_rng.fork(c);
        auto row = out.channel(c);
        for (std::size_t i = 0; i < row.size(); ++i) {
            const double z = r.next_gaussian(0.0, 1.0);
            row[i] += noise_std_at(params.channels[c], static_cast<double>(i) / cfg.sample_rate_hz) * z;
        }
    }
    return out;
}

std::optional<AnomalySpec> choose_anomaly(const GenConfig& cfg, SeededRng& rng) {
    cfg.validate();
    const Features f = cfg.features();
    if (!(rng.next_unit() < cfg.anomaly_rate)) return std::nullopt;

    AnomalySpec spec;
    spec.kind = rng.next_unit() < 0.5 ? AnomalyKind::Spike : AnomalyKind::LocalDeviation;
    const double u_channel = rng.next_unit();
    if (f.weighted_channels) {
        spec.channel = pick_weighted(
            spec.kind == AnomalyKind::Spike ? cfg.spike_channel_probs : cfg.localdev_channel_probs, u_channel);
    } else {
        spec.channel = std::min(static_cast<int>(u_channel * f.n_channels), f.n_channels - 1);
    }

    const CommonRanges& common = cfg.common;
    if (spec.kind == AnomalyKind::Spike) {
        spec.t_start_s = common.spike_time_s.sample(rng);
        spec.offset = common.spike_offset.sample(rng);
    } else {
        spec.duration_s = common.local_duration_s.sample(rng);
        spec.t_start_s = rng.next_uniform(0.0, cfg.duration_s - spec.duration_s);
        spec.offset = common.local_offset.sample(rng);
    }
    return spec;
}

std::pair<std::size_t, std::size_t> anomaly_sample_range(const AnomalySpec& spec, const GenConfig& cfg) {
    const std::size_t n = cfg.n_samples();
    const double fs = cfg.sample_rate_hz;
    if (spec.t_start_s < 0.0 || spec.duration_s < 0.0 || spec.t_start_s + spec.duration_s > cfg.duration_s + 1e-12)
        throw InvalidParameter("anomaly lies outside the signal window");
    if (spec.kind == AnomalyKind::Spike) {
        const auto idx = static_cast<std::size_t>(std::llround(spec.t_start_s * fs));
        const std::size_t clamped = std::min(idx, n - 1);
        return {clamped, clamped};
    }
    const auto first = static_cast<std::size_t>(std::max(0.0, std::ceil(spec.t_start_s * fs - kIndexSlack)));
    const auto last = static_cast<std::size_t>(std::floor((spec.t_start_s + spec.duration_s) * fs + kIndexSlack));
    return {std::min(first, n - 1), std::min(last, n - 1)};
}

namespace {

void apply_offset(SignalMatrix& data, const AnomalySpec& spec, const GenConfig& cfg, double sign) {
    if (spec.channel < 0 || static_cast<std::size_t>(spec.channel) >= data.channels())
        throw IndexError("anomaly channel " + std::to_string(spec.channel) + " out of range for " +
                         std::to_string(data.channels()) + " channels");
    const auto [first, last] = anomaly_sample_range(spec, cfg);
    for (std::size_t i = first; i <= last && i < data.samples(); ++i)
        data.at(static_cast<std::size_t>(spec.channel), i) += sign * spec.offset;
}

}  // namespace

void inject_anomaly(SignalMatrix& data, const AnomalySpec& spec, const GenConfig& cfg) {
    apply_offset(data, spec, cfg, 1.0);
}

void remove_anomaly(SignalMatrix& data, const AnomalySpec& spec, const GenConfig& cfg) {
    apply_offset(data, spec, cfg, -1.0);
}

SignalInstance generate_instance(const GenConfig& cfg, std::uint64_t dataset_seed, std::uint64_t instance_id) {
    cfg.validate();
    const SeededRng stream = instance_stream(dataset_seed, cfg.stage, instance_id);
    SeededRng param_rng = stream.fork(static_cast<std::uint64_t>(StreamRole::Params));
    SeededRng anomaly_rng = stream.fork(static_cast<std::uint64_t>(StreamRole::Anomaly));

    SignalInstance inst;
    inst.stage = cfg.stage;
    inst.instance_id = instance_id;
    inst.params = sample_params(cfg, param_rng);
    inst.data = render_clean(inst.params, cfg, stream.fork(static_cast<std::uint64_t>(StreamRole::Noise)));
    inst.anomaly = choose_anomaly(cfg, anomaly_rng);
    if (inst.anomaly) inject_anomaly(inst.data, *inst.anomaly, cfg);
    inst.label = inst.anomaly.has_value();
    return inst;
}

Dataset generate_dataset(const GenConfig& cfg, std::size_t n, std::uint64_t dataset_seed, unsigned threads) {
    cfg.validate();
    if (n == 0) throw InvalidConfig("dataset size must be positive");
    Dataset ds;
    ds.meta.stage = cfg.stage;
    ds.meta.seed = dataset_seed;
    ds.meta.n = n;
    ds.meta.n_channels = static_cast<std::size_t>(cfg.n_channels());
    ds.meta.n_samples = cfg.n_samples();
    ds.meta.sample_rate_hz = cfg.sample_rate_hz;
    ds.meta.anomaly_rate = cfg.anomaly_rate;
    if (cfg.features().weighted_channels) {
        ds.meta.spike_channel_probs = cfg.spike_channel_probs;
        ds.meta.localdev_channel_probs = cfg.localdev_channel_probs;
    }
    ds.instances.resize(n);

    if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
    threads = static_cast<unsigned>(std::min<std::size_t>(threads, (n + 255) / 256));
    auto work = [&](std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) ds.instances[i] = generate_instance(cfg, dataset_seed, i);
    };
    if (threads <= 1) {
        work(0, n);
    } else {
        std::vector<std::jthread> pool;
        const std::size_t chunk = (n + threads - 1) / threads;
        for (std::size_t b = 0; b < n; b += chunk) pool.emplace_back(work, b, std::min(n, b + chunk));
    }
    return ds;
}

}  // namespace ishm
