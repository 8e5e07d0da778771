#pragma once

#include "ishm/rng.hpp"

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace ishm {

inline constexpr int kNumStages = 8;
inline constexpr const char* kGeneratorVersion = "ishm-gen/1";

enum class SensorGroup { Axle = 0, Bogie = 1, Body = 2 };
std::string to_string(SensorGroup group);

// Which signal components a generator run renders. Stages are cumulative:
// each stage switches on exactly one more component than the previous one.
struct Features {
    int n_channels = 1;
    bool speed_change = false;       // stage >= 2
    bool phase_offset = false;       // stage >= 3
    bool noise_change = false;       // stage >= 4
    bool group_ranges = false;       // stage >= 5
    bool weighted_channels = false;  // stage >= 6
    bool hf_burst = false;           // stage >= 7
    bool impulses = false;           // stage 8

    static Features for_stage(int stage);
    bool operator==(const Features&) const = default;
};

// Sampling ranges for one sensor group. Groups only differ from the stage-1
// baseline once Features::group_ranges is on.
struct GroupRanges {
    DistSpec amplitude = DistSpec::uniform(0.5, 2.0);
    DistSpec frequency_hz = DistSpec::uniform(1.0, 15.0);
    DistSpec noise_std = DistSpec::uniform(0.1, 0.5);
    DistSpec hf_amplitude = DistSpec::uniform(0.3, 1.5);
    DistSpec hf_frequency_hz = DistSpec::uniform(15.0, 40.0);
    DistSpec impulse_period_s = DistSpec::uniform(0.15, 0.3);
    DistSpec impulse_amplitude = DistSpec::uniform(0.3, 1.5);
};

// Ranges shared by every channel and group.
struct CommonRanges {
    DistSpec phase = DistSpec::uniform(0.0, 6.283185307179586);
    DistSpec change_time_s = DistSpec::uniform(0.4, 1.6);
    DistSpec freq_factor = DistSpec::uniform(0.5, 1.5);
    DistSpec amp_factor = DistSpec::uniform(0.5, 1.5);
    DistSpec noise_change_time_s = DistSpec::uniform(0.4, 1.6);
    DistSpec noise_increase = DistSpec::uniform(0.1, 0.5);
    DistSpec hf_start_s = DistSpec::uniform(0.4, 1.6);
    DistSpec hf_duration_s = DistSpec::uniform(0.05, 0.2);
    DistSpec hf_phase = DistSpec::uniform(0.0, 6.283185307179586);
    DistSpec impulse_width_s = DistSpec::uniform(0.01, 0.1);
    DistSpec spike_time_s = DistSpec::uniform(0.0, 2.0);
    DistSpec spike_offset = DistSpec::signed_uniform(2.0, 4.0);
    DistSpec local_duration_s = DistSpec::uniform(0.05, 0.2);
    DistSpec local_offset = DistSpec::signed_uniform(1.0, 2.0);
};

struct GenConfig {
    int stage = 1;
    double sample_rate_hz = 100.0;
    double duration_s = 2.0;
    double anomaly_rate = 0.10;
    std::vector<double> spike_channel_probs{0.30, 0.30, 0.15, 0.15, 0.05, 0.05};
    std::vector<double> localdev_channel_probs{0.30, 0.30, 0.15, 0.15, 0.05, 0.05};
    // Stage 1-4 channels use `baseline`; from stage 5 on, `groups` indexed by
    // SensorGroup.
    GroupRanges baseline{};
    std::array<GroupRanges, 3> groups = default_group_ranges();
    CommonRanges common{};

    static GenConfig for_stage(int stage);
    static std::array<GroupRanges, 3> default_group_ranges();

    Features features() const { return Features::for_stage(stage); }
    int n_channels() const { return features().n_channels; }
    std::size_t n_samples() const;
    SensorGroup channel_group(int channel) const;
    const GroupRanges& ranges_for(int channel) const;

    // Throws InvalidConfig.
    void validate() const;
};

struct SpeedChange {
    double t_change_s = 0.0;
    double freq_factor = 1.0;
    double amp_factor = 1.0;

    bool operator==(const SpeedChange&) const = default;
};

struct NoiseChange {
    double t_change_s = 0.0;
    double delta_std = 0.0;

    bool operator==(const NoiseChange&) const = default;
};

struct HfBurst {
    double t_start_s = 0.0;
    double duration_s = 0.0;
    double amplitude = 0.0;
    double frequency_hz = 0.0;
    double phase = 0.0;
    double t_end_s() const { return t_start_s + duration_s; }

    bool operator==(const HfBurst&) const = default;
};

struct ImpulseTrain {
    double period_s = 0.0;
    double amplitude = 0.0;
    double width_s = 0.0;
    int count = 0;

    bool operator==(const ImpulseTrain&) const = default;
};

struct ChannelParams {
    SensorGroup group = SensorGroup::Bogie;
    double amplitude = 0.0;
    double frequency_hz = 0.0;
    double noise_std = 0.0;
    double phase = 0.0;
    std::optional<SpeedChange> speed;
    std::optional<NoiseChange> noise_change;
    std::optional<HfBurst> hf_burst;
    std::optional<ImpulseTrain> impulses;

    bool operator==(const ChannelParams&) const = default;
};

struct InstanceParams {
    std::vector<ChannelParams> channels;

    bool operator==(const InstanceParams&) const = default;
};

enum class AnomalyKind { Spike, LocalDeviation };
std::string to_string(AnomalyKind kind);

struct AnomalySpec {
    AnomalyKind kind = AnomalyKind::Spike;
    int channel = 0;
    double t_start_s = 0.0;   // t_spike for spikes
    double duration_s = 0.0;  // zero for spikes
    double offset = 0.0;

    bool operator==(const AnomalySpec&) const = default;
};

// channels x samples, row-major.
class SignalMatrix {
public:
    SignalMatrix() = default;
    SignalMatrix(std::size_t channels, std::size_t samples, double fill = 0.0)
        : channels_(channels), samples_(samples), values_(channels * samples, fill) {}

    std::size_t channels() const { return channels_; }
    std::size_t samples() const { return samples_; }
    double& at(std::size_t c, std::size_t n) { return values_[c * samples_ + n]; }
    double at(std::size_t c, std::size_t n) const { return values_[c * samples_ + n]; }
    std::span<double> channel(std::size_t c) { return {values_.data() + c * samples_, samples_}; }
    std::span<const double> channel(std::size_t c) const { return {values_.data() + c * samples_, samples_}; }
    std::span<double> values() { return values_; }
    std::span<const double> values() const { return values_; }

    bool operator==(const SignalMatrix&) const = default;

private:
    std::size_t channels_ = 0;
    std::size_t samples_ = 0;
    std::vector<double> values_;
};

struct SignalInstance {
    SignalMatrix data;
    bool label = false;
    std::optional<AnomalySpec> anomaly;
    InstanceParams params;
    int stage = 1;
    std::uint64_t instance_id = 0;

    bool operator==(const SignalInstance&) const = default;
};

// Substreams of an instance stream.
enum class StreamRole : std::uint64_t { Params = 0, Noise = 1, Anomaly = 2 };

// Stream keyed by (dataset seed, stage, instance id).
SeededRng instance_stream(std::uint64_t dataset_seed, int stage, std::uint64_t instance_id);

InstanceParams sample_params(const GenConfig& cfg, SeededRng& rng);

// The two branches of the speed-change sinusoid, evaluable on either side of
// the change point.
double sinusoid_before_change(const ChannelParams& p, double t);
double sinusoid_after_change(const ChannelParams& p, double t);

// Truncated Gaussian impulse: beta * exp(-(tau/omega)^2) on [0, 3 omega].
double impulse_kernel(double tau, double beta, double omega);

// Noise-free value of one channel at time t.
double deterministic_value(const ChannelParams& p, double t, double duration_s);
// Noise standard deviation of one channel at time t.
double noise_std_at(const ChannelParams& p, double t);

SignalMatrix render_deterministic(const InstanceParams& params, const GenConfig& cfg);
// Normal signal including noise; the noise stream is forked per channel.
SignalMatrix render_clean(const InstanceParams& params, const GenConfig& cfg, const SeededRng& noise_rng);

std::optional<AnomalySpec> choose_anomaly(const GenConfig& cfg, SeededRng& rng);

// Sample indices touched by an anomaly, inclusive range.
std::pair<std::size_t, std::size_t> anomaly_sample_range(const AnomalySpec& spec, const GenConfig& cfg);
void inject_anomaly(SignalMatrix& data, const AnomalySpec& spec, const GenConfig& cfg);
void remove_anomaly(SignalMatrix& data, const AnomalySpec& spec, const GenConfig& cfg);

SignalInstance generate_instance(const GenConfig& cfg, std::uint64_t dataset_seed, std::uint64_t instance_id);

struct DatasetMeta {
    int stage = 1;
    std::uint64_t seed = 0;
    std::size_t n = 0;
    std::string generator_version = kGeneratorVersion;
    std::size_t n_channels = 1;
    std::size_t n_samples = 200;
    double sample_rate_hz = 100.0;
    double anomaly_rate = 0.10;
    std::vector<double> spike_channel_probs;
    std::vector<double> localdev_channel_probs;

    bool operator==(const DatasetMeta&) const = default;
};

struct Dataset {
    DatasetMeta meta;
    std::vector<SignalInstance> instances;

    std::size_t size() const { return instances.size(); }

    bool operator==(const Dataset&) const = default;
};

// Instances 0..n-1. Work is split across `threads` workers (0 = hardware
// concurrency); the result does not depend on the split.
Dataset generate_dataset(const GenConfig& cfg, std::size_t n, std::uint64_t dataset_seed, unsigned threads = 0);

}  // namespace ishm
