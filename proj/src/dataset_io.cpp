#include "ishm/dataset_io.hpp"

#include "ishm/error.hpp"

#include "json.hpp"

#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <numeric>
#include <sstream>

namespace ishm {

using nlohmann::json;

namespace {

// --- JSON mapping for manifest records -------------------------------------

SensorGroup group_from_string(const std::string& s) {
    if (s == "axle") return SensorGroup::Axle;
    if (s == "bogie") return SensorGroup::Bogie;
    if (s == "body") return SensorGroup::Body;
    throw IoError("unknown sensor group '" + s + "'");
}

json channel_to_json(const ChannelParams& p) {
    json j;
    j["group"] = to_string(p.group);
    j["A"] = p.amplitude;
    j["f"] = p.frequency_hz;
    j["sigma"] = p.noise_std;
    j["phi"] = p.phase;
    if (p.speed) j["speed"] = {{"t_change", p.speed->t_change_s}, {"k_f", p.speed->freq_factor}, {"k_A", p.speed->amp_factor}};
    if (p.noise_change)
        j["noise_change"] = {{"t_noisechange", p.noise_change->t_change_s}, {"delta_sigma", p.noise_change->delta_std}};
    if (p.hf_burst)
        j["hf_burst"] = {{"t_start", p.hf_burst->t_start_s}, {"dt", p.hf_burst->duration_s},
                         {"alpha", p.hf_burst->amplitude},   {"f_hf", p.hf_burst->frequency_hz},
                         {"psi", p.hf_burst->phase}};
    if (p.impulses)
        j["impulses"] = {{"T", p.impulses->period_s},
                         {"beta", p.impulses->amplitude},
                         {"omega", p.impulses->width_s},
                         {"K", p.impulses->count}};
    return j;
}

ChannelParams channel_from_json(const json& j) {
    ChannelParams p;
    p.group = group_from_string(j.at("group").get<std::string>());
    p.amplitude = j.at("A").get<double>();
    p.frequency_hz = j.at("f").get<double>();
    p.noise_std = j.at("sigma").get<double>();
    p.phase = j.at("phi").get<double>();
    if (j.contains("speed")) {
        const json& s = j["speed"];
        p.speed = SpeedChange{s.at("t_change").get<double>(), s.at("k_f").get<double>(), s.at("k_A").get<double>()};
    }
    if (j.contains("noise_change")) {
        const json& n = j["noise_change"];
        p.noise_change = NoiseChange{n.at("t_noisechange").get<double>(), n.at("delta_sigma").get<double>()};
    }
    if (j.contains("hf_burst")) {
        const json& h = j["hf_burst"];
        p.hf_burst = HfBurst{h.at("t_start").get<double>(), h.at("dt").get<double>(), h.at("alpha").get<double>(),
                             h.at("f_hf").get<double>(), h.at("psi").get<double>()};
    }
    if (j.contains("impulses")) {
        const json& i = j["impulses"];
        p.impulses = ImpulseTrain{i.at("T").get<double>(), i.at("beta").get<double>(), i.at("omega").get<double>(),
                                  i.at("K").get<int>()};
    }
    return p;
}

std::string record_line(const SignalInstance& inst) {
    json rec;
    rec["id"] = inst.instance_id;
    rec["stage"] = inst.stage;
    rec["label"] = inst.label;
    if (inst.anomaly) {
        const AnomalySpec& a = *inst.anomaly;
        rec["anomaly"] = {{"kind", to_string(a.kind)}, {"channel", a.channel}, {"t", a.t_start_s},
                          {"dt", a.duration_s},        {"offset", a.offset}};
    } else {
        rec["anomaly"] = nullptr;
    }
    json channels = json::array();
    for (const ChannelParams& p : inst.params.channels) channels.push_back(channel_to_json(p));
    rec["params"] = {{"channels", channels}};
    return rec.dump();
}

void parse_record(const std::string& line, SignalInstance& inst) {
    const json rec = json::parse(line);
    inst.instance_id = rec.at("id").get<std::uint64_t>();
    inst.stage = rec.at("stage").get<int>();
    inst.label = rec.at("label").get<bool>();
    if (!rec.at("anomaly").is_null()) {
        const json& a = rec["anomaly"];
        AnomalySpec spec;
        const std::string kind = a.at("kind").get<std::string>();
        if (kind == "spike") spec.kind = AnomalyKind::Spike;
        else if (kind == "local_deviation") spec.kind = AnomalyKind::LocalDeviation;
        else throw IoError("unknown anomaly kind '" + kind + "'");
        spec.channel = a.at("channel").get<int>();
        spec.t_start_s = a.at("t").get<double>();
        spec.duration_s = a.at("dt").get<double>();
        spec.offset = a.at("offset").get<double>();
        inst.anomaly = spec;
    }
    for (const json& c : rec.at("params").at("channels")) inst.params.channels.push_back(channel_from_json(c));
}

// --- binary layout ----------------------------------------------------------

std::uint64_t to_little_endian(std::uint64_t bits) {
    if constexpr (std::endian::native == std::endian::big) return __builtin_bswap64(bits);
    return bits;
}

std::vector<std::byte> encode_samples(const Dataset& ds) {
    std::size_t total = 0;
    for (const auto& inst : ds.instances) total += inst.data.values().size();
    std::vector<std::byte> bytes(total * sizeof(double));
    std::size_t offset = 0;
    for (const auto& inst : ds.instances) {
        for (double v : inst.data.values()) {
            const std::uint64_t bits = to_little_endian(std::bit_cast<std::uint64_t>(v));
            std::memcpy(bytes.data() + offset, &bits, sizeof bits);
            offset += sizeof bits;
        }
    }
    return bytes;
}

std::string hex64(std::uint64_t v) {
    char buf[19];
    std::snprintf(buf, sizeof buf, "0x%016llx", static_cast<unsigned long long>(v));
    return buf;
}

std::uint64_t manifest_hash(const std::vector<std::string>& lines, std::uint64_t state) {
    for (const auto& line : lines) {
        state = fnv1a64(line, state);
        state = fnv1a64(std::string_view("\n"), state);
    }
    return state;
}

json header_json(const Dataset& ds, std::uint64_t data_hash, std::uint64_t content_hash) {
    json h;
    h["type"] = "header";
    h["format"] = "ishm-dataset";
    h["format_version"] = kDatasetFormatVersion;
    h["generator_version"] = ds.meta.generator_version;
    h["stage"] = ds.meta.stage;
    h["seed"] = ds.meta.seed;
    h["n"] = ds.meta.n;
    h["n_channels"] = ds.meta.n_channels;
    h["n_samples"] = ds.meta.n_samples;
    h["sample_rate_hz"] = ds.meta.sample_rate_hz;
    h["anomaly_rate"] = ds.meta.anomaly_rate;
    h["spike_channel_probs"] = ds.meta.spike_channel_probs;
    h["localdev_channel_probs"] = ds.meta.localdev_channel_probs;
    h["layout"] = "float64-le [instance][channel][sample]";
    h["data_hash"] = hex64(data_hash);
    h["content_hash"] = hex64(content_hash);
    return h;
}

}  // namespace

std::uint64_t fnv1a64(std::span<const std::byte> bytes, std::uint64_t state) noexcept {
    for (std::byte b : bytes) {
        state ^= static_cast<std::uint64_t>(b);
        state *= 0x100000001b3ull;
    }
    return state;
}

std::uint64_t fnv1a64(std::string_view text, std::uint64_t state) noexcept {
    return fnv1a64(std::as_bytes(std::span(text.data(), text.size())), state);
}

std::uint64_t dataset_hash(const Dataset& dataset) {
    std::vector<std::string> lines;
    lines.reserve(dataset.instances.size());
    for (const auto& inst : dataset.instances) lines.push_back(record_line(inst));
    return manifest_hash(lines, fnv1a64(encode_samples(dataset)));
}

std::filesystem::path save_dataset(const Dataset& dataset, const std::filesystem::path& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw IoError("cannot create directory " + dir.string() + ": " + ec.message());

    const std::vector<std::byte> bytes = encode_samples(dataset);
    const std::uint64_t data_hash = fnv1a64(bytes);
    std::vector<std::string> lines;
    lines.reserve(dataset.instances.size());
    for (const auto& inst : dataset.instances) lines.push_back(record_line(inst));
    const std::uint64_t content_hash = manifest_hash(lines, data_hash);

    const auto data_path = dir / kDataFile;
    {
        std::ofstream out(data_path, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot open " + data_path.string() + " for writing");
        out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
        if (!out) throw IoError("write failed: " + data_path.string());
    }
    const auto manifest_path = dir / kManifestFile;
    std::ofstream out(manifest_path, std::ios::trunc);
    if (!out) throw IoError("cannot open " + manifest_path.string() + " for writing");
    out << header_json(dataset, data_hash, content_hash).dump() << '\n';
    for (const auto& line : lines) out << line << '\n';
    if (!out) throw IoError("write failed: " + manifest_path.string());
    return manifest_path;
}

Dataset load_dataset(const std::filesystem::path& dir) {
    const auto manifest_path = dir / kManifestFile;
    const auto data_path = dir / kDataFile;
    std::ifstream in(manifest_path);
    if (!in) throw IoError("cannot open " + manifest_path.string());

    std::string line;
    if (!std::getline(in, line)) throw IoError(manifest_path.string() + ": empty manifest");
    json header;
    try {
        header = json::parse(line);
    } catch (const json::exception& e) {
        throw IoError(manifest_path.string() + ": bad header: " + e.what());
    }
    if (header.value("format", "") != "ishm-dataset")
        throw IoError(manifest_path.string() + ": not an ishm dataset manifest");

    Dataset ds;
    try {
        ds.meta.stage = header.at("stage").get<int>();
        ds.meta.seed = header.at("seed").get<std::uint64_t>();
        ds.meta.n = header.at("n").get<std::size_t>();
        ds.meta.generator_version = header.at("generator_version").get<std::string>();
        ds.meta.n_channels = header.at("n_channels").get<std::size_t>();
        ds.meta.n_samples = header.at("n_samples").get<std::size_t>();
        ds.meta.sample_rate_hz = header.at("sample_rate_hz").get<double>();
        ds.meta.anomaly_rate = header.at("anomaly_rate").get<double>();
        ds.meta.spike_channel_probs = header.at("spike_channel_probs").get<std::vector<double>>();
        ds.meta.localdev_channel_probs = header.at("localdev_channel_probs").get<std::vector<double>>();
    } catch (const json::exception& e) {
        throw IoError(manifest_path.string() + ": bad header: " + e.what());
    }

    std::vector<std::string> lines;
    while (std::getline(in, line)) {
        if (!line.empty()) lines.push_back(line);
    }
    if (lines.size() != ds.meta.n)
        throw ShapeError(manifest_path.string() + ": header says " + std::to_string(ds.meta.n) + " instances, found " +
                         std::to_string(lines.size()) + " records");

    const std::size_t per_instance = ds.meta.n_channels * ds.meta.n_samples;
    const std::uintmax_t expected_bytes = ds.meta.n * per_instance * sizeof(double);
    std::error_code ec;
    const std::uintmax_t actual_bytes = std::filesystem::file_size(data_path, ec);
    if (ec) throw IoError("cannot stat " + data_path.string() + ": " + ec.message());
    if (actual_bytes != expected_bytes)
        throw ShapeError(data_path.string() + ": expected " + std::to_string(expected_bytes) + " bytes, found " +
                         std::to_string(actual_bytes));

    std::vector<std::byte> bytes(expected_bytes);
    {
        std::ifstream data(data_path, std::ios::binary);
        if (!data) throw IoError("cannot open " + data_path.string());
        data.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
        if (!data) throw IoError("read failed: " + data_path.string());
    }

    const std::uint64_t data_hash = fnv1a64(bytes);
    const std::uint64_t content_hash = manifest_hash(lines, data_hash);
    if (hex64(data_hash) != header.value("data_hash", "") || hex64(content_hash) != header.value("content_hash", ""))
        throw HashMismatch(dir.string() + ": content hash mismatch (dataset modified or corrupt)");

    ds.instances.resize(ds.meta.n);
    std::size_t offset = 0;
    for (std::size_t i = 0; i < ds.meta.n; ++i) {
        SignalInstance& inst = ds.instances[i];
        try {
            parse_record(lines[i], inst);
        } catch (const json::exception& e) {
            throw IoError(manifest_path.string() + ": record " + std::to_string(i) + ": " + e.what());
        }
        if (inst.instance_id != i) throw ShapeError(manifest_path.string() + ": instance ids must be 0..n-1");
        if (inst.label != inst.anomaly.has_value()) throw IoError("record " + std::to_string(i) + ": label/anomaly mismatch");
        inst.data = SignalMatrix(ds.meta.n_channels, ds.meta.n_samples);
        for (double& v : inst.data.values()) {
            std::uint64_t bits;
            std::memcpy(&bits, bytes.data() + offset, sizeof bits);
            offset += sizeof bits;
            v = std::bit_cast<double>(to_little_endian(bits));
        }
    }
    return ds;
}

void export_csv(const Dataset& dataset, const std::filesystem::path& file) {
    std::ofstream out(file, std::ios::trunc);
    if (!out) throw IoError("cannot open " + file.string() + " for writing");
    out << "id,channel,label";
    for (std::size_t n = 0; n < dataset.meta.n_samples; ++n) out << ",s" << n;
    out << '\n';
    char buf[32];
    for (const auto& inst : dataset.instances) {
        for (std::size_t c = 0; c < inst.data.channels(); ++c) {
            out << inst.instance_id << ',' << c << ',' << (inst.label ? 1 : 0);
            for (double v : inst.data.channel(c)) {
                std::snprintf(buf, sizeof buf, ",%.17g", v);
                out << buf;
            }
            out << '\n';
        }
    }
    if (!out) throw IoError("write failed: " + file.string());
}

std::pair<Dataset, Dataset> split_dataset(const Dataset& dataset, double train_fraction, std::uint64_t seed) {
    if (!(train_fraction > 0.0 && train_fraction < 1.0)) throw InvalidConfig("train_fraction must lie in (0, 1)");
    const std::size_t n = dataset.instances.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    SeededRng rng(seed, 0x73706c6974ull);
    for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.next_below(i)]);

    const auto n_train = static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(n)));
    Dataset train, test;
    train.meta = test.meta = dataset.meta;
    for (std::size_t k = 0; k < n; ++k) (k < n_train ? train : test).instances.push_back(dataset.instances[order[k]]);
    train.meta.n = train.instances.size();
    test.meta.n = test.instances.size();
    return {std::move(train), std::move(test)};
}

Dataset filter_by_label(const Dataset& dataset, bool label) {
    Dataset out;
    out.meta = dataset.meta;
    for (const auto& inst : dataset.instances)
        if (inst.label == label) out.instances.push_back(inst);
    out.meta.n = out.instances.size();
    return out;
}

NormStats norm_stats(const Dataset& train) {
    if (train.instances.empty()) throw InvalidConfig("norm_stats: empty training set");
    const std::size_t channels = train.instances.front().data.channels();
    NormStats stats;
    stats.mean.assign(channels, 0.0);
    stats.std.assign(channels, 0.0);
    std::vector<double> count(channels, 0.0);
    for (const auto& inst : train.instances) {
        if (inst.data.channels() != channels) throw ShapeError("norm_stats: inconsistent channel counts");
        for (std::size_t c = 0; c < channels; ++c) {
            for (double v : inst.data.channel(c)) stats.mean[c] += v;
            count[c] += static_cast<double>(inst.data.samples());
        }
    }
    for (std::size_t c = 0; c < channels; ++c) stats.mean[c] /= count[c];
    for (const auto& inst : train.instances)
        for (std::size_t c = 0; c < channels; ++c)
            for (double v : inst.data.channel(c)) stats.std[c] += (v - stats.mean[c]) * (v - stats.mean[c]);
    for (std::size_t c = 0; c < channels; ++c) stats.std[c] = std::sqrt(stats.std[c] / count[c]);
    return stats;
}

SignalMatrix apply_norm(const SignalMatrix& data, const NormStats& stats) {
    if (stats.mean.size() != data.channels()) throw ShapeError("apply_norm: channel count mismatch");
    SignalMatrix out = data;
    for (std::size_t c = 0; c < data.channels(); ++c) {
        const double scale = 1.0 / (stats.std[c] + NormStats::kEpsilon);
        for (double& v : out.channel(c)) v = (v - stats.mean[c]) * scale;
    }
    return out;
}

SignalInstance apply_norm(const SignalInstance& instance, const NormStats& stats) {
    SignalInstance out = instance;
    out.data = apply_norm(instance.data, stats);
    return out;
}

}  // namespace ishm
