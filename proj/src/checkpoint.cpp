#include "ishm/checkpoint.hpp"

#include "ishm/error.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

namespace ishm {

using nlohmann::json;

namespace {

constexpr char kMagic[8] = {'I', 'S', 'H', 'M', 'C', 'K', 'P', 'T'};

template <typename T>
T little_endian(T v) {
    if constexpr (std::endian::native == std::endian::big) {
        unsigned char b[sizeof(T)];
        std::memcpy(b, &v, sizeof(T));
        for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(b[i], b[sizeof(T) - 1 - i]);
        std::memcpy(&v, b, sizeof(T));
    }
    return v;
}

class Writer {
public:
    explicit Writer(std::ostream& out) : out_(out) {}
    template <typename T>
    void put(T v) {
        v = little_endian(v);
        out_.write(reinterpret_cast<const char*>(&v), sizeof(T));
    }
    void bytes(const std::string& s) { out_.write(s.data(), static_cast<std::streamsize>(s.size())); }

private:
    std::ostream& out_;
};

class Reader {
public:
    Reader(std::istream& in, std::string path) : in_(in), path_(std::move(path)) {}
    template <typename T>
    T get() {
        T v;
        in_.read(reinterpret_cast<char*>(&v), sizeof(T));
        if (!in_) throw IoError(path_ + ": truncated checkpoint");
        return little_endian(v);
    }
    std::string bytes(std::uint64_t n) {
        if (n > (std::uint64_t{1} << 32)) throw IoError(path_ + ": implausible field length");
        std::string s(n, '\0');
        in_.read(s.data(), static_cast<std::streamsize>(n));
        if (!in_) throw IoError(path_ + ": truncated checkpoint");
        return s;
    }

private:
    std::istream& in_;
    std::string path_;
};

json read_json_file(const std::filesystem::path& file) {
    std::ifstream in(file);
    if (!in) throw IoError("cannot open " + file.string());
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw IoError(file.string() + ": " + e.what());
    }
}

}  // namespace

void write_checkpoint(const std::filesystem::path& file, const std::string& model, const json& config,
                      const NormStats& norm, const ParameterSet& params) {
    json header;
    header["model"] = model;
    header["model_version"] = model == "attn" ? kAttnModelVersion : kCnnModelVersion;
    header["config"] = config;
    header["norm"] = to_json(norm);
    const std::string text = header.dump();

    std::ofstream out(file, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + file.string() + " for writing");
    Writer w(out);
    out.write(kMagic, sizeof kMagic);
    w.put<std::uint32_t>(kCheckpointVersion);
    w.put<std::uint64_t>(text.size());
    w.bytes(text);
    w.put<std::uint64_t>(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
        const Tensor& t = params.value(i);
        w.put<std::uint32_t>(static_cast<std::uint32_t>(params.name(i).size()));
        w.bytes(params.name(i));
        w.put<std::uint32_t>(static_cast<std::uint32_t>(t.rank()));
        for (std::size_t d : t.shape()) w.put<std::uint64_t>(d);
        for (double v : t.data()) w.put<double>(v);
    }
    if (!out) throw IoError("write failed: " + file.string());
}

Checkpoint read_checkpoint(const std::filesystem::path& file) {
    std::ifstream in(file, std::ios::binary);
    if (!in) throw IoError("cannot open " + file.string());
    char magic[sizeof kMagic];
    in.read(magic, sizeof magic);
    if (!in || std::memcmp(magic, kMagic, sizeof kMagic) != 0) throw IoError(file.string() + ": not an ishm checkpoint");
    Reader r(in, file.string());
    const auto version = r.get<std::uint32_t>();
    if (version != kCheckpointVersion)
        throw IoError(file.string() + ": unsupported checkpoint version " + std::to_string(version));
    Checkpoint ck;
    try {
        ck.header = json::parse(r.bytes(r.get<std::uint64_t>()));
        ck.model = ck.header.at("model").get<std::string>();
        ck.norm = norm_from_json(ck.header.at("norm"));
    } catch (const json::exception& e) {
        throw IoError(file.string() + ": bad header: " + e.what());
    }
    const auto n = r.get<std::uint64_t>();
    for (std::uint64_t i = 0; i < n; ++i) {
        std::string name = r.bytes(r.get<std::uint32_t>());
        const auto rank = r.get<std::uint32_t>();
        if (rank > 8) throw IoError(file.string() + ": implausible rank for '" + name + "'");
        Shape shape(rank);
        for (auto& d : shape) d = r.get<std::uint64_t>();
        std::vector<double> values(shape_numel(shape));
        for (double& v : values) v = r.get<double>();
        ck.params.add(std::move(name), Tensor(std::move(shape), std::move(values)));
    }
    return ck;
}

json to_json(const AttnTransformerConfig& c) {
    return {{"n_channels", c.n_channels}, {"n_samples", c.n_samples},       {"patch_len", c.patch_len},
            {"d_model", c.d_model},       {"n_heads", c.n_heads},           {"n_layers", c.n_layers},
            {"ffn_hidden", c.ffn_hidden}, {"decoder_hidden", c.decoder_hidden}, {"pos_init_std", c.pos_init_std},
            {"epochs", c.epochs},         {"batch_size", c.batch_size},     {"lr", c.lr},
            {"seed", c.seed}};
}

AttnTransformerConfig attn_config_from_json(const json& j) {
    AttnTransformerConfig c;
    c.n_channels = j.at("n_channels").get<std::size_t>();
    c.n_samples = j.at("n_samples").get<std::size_t>();
    c.patch_len = j.at("patch_len").get<std::size_t>();
    c.d_model = j.at("d_model").get<std::size_t>();
    c.n_heads = j.at("n_heads").get<std::size_t>();
    c.n_layers = j.at("n_layers").get<std::size_t>();
    c.ffn_hidden = j.at("ffn_hidden").get<std::size_t>();
    c.decoder_hidden = j.at("decoder_hidden").get<std::size_t>();
    c.pos_init_std = j.at("pos_init_std").get<double>();
    c.epochs = j.at("epochs").get<std::size_t>();
    c.batch_size = j.at("batch_size").get<std::size_t>();
    c.lr = j.at("lr").get<double>();
    c.seed = j.at("seed").get<std::uint64_t>();
    return c;
}

json to_json(const CnnAeConfig& c) {
    return {{"n_channels", c.n_channels}, {"n_samples", c.n_samples}, {"kernel", c.kernel},
            {"stride", c.stride},         {"channels1", c.channels1}, {"channels2", c.channels2},
            {"epochs", c.epochs},         {"batch_size", c.batch_size}, {"lr", c.lr},
            {"seed", c.seed}};
}

CnnAeConfig cnn_config_from_json(const json& j) {
    CnnAeConfig c;
    c.n_channels = j.at("n_channels").get<std::size_t>();
    c.n_samples = j.at("n_samples").get<std::size_t>();
    c.kernel = j.at("kernel").get<std::size_t>();
    c.stride = j.at("stride").get<std::size_t>();
    c.channels1 = j.at("channels1").get<std::size_t>();
    c.channels2 = j.at("channels2").get<std::size_t>();
    c.epochs = j.at("epochs").get<std::size_t>();
    c.batch_size = j.at("batch_size").get<std::size_t>();
    c.lr = j.at("lr").get<double>();
    c.seed = j.at("seed").get<std::uint64_t>();
    return c;
}

json to_json(const NormStats& norm) {
    return {{"mean", norm.mean}, {"std", norm.std}};
}

NormStats norm_from_json(const json& j) {
    NormStats n;
    n.mean = j.at("mean").get<std::vector<double>>();
    n.std = j.at("std").get<std::vector<double>>();
    if (n.mean.size() != n.std.size()) throw IoError("norm stats: mean/std length mismatch");
    return n;
}

json to_json(const AttentionProfile& p) {
    return {{"n_layers", p.n_layers},     {"n_heads", p.n_heads},       {"n_tokens", p.n_tokens},
            {"n_reference", p.n_reference}, {"recon_mean", p.recon_mean}, {"recon_std", p.recon_std},
            {"attn_mean", p.attn_mean},   {"attn_std", p.attn_std},     {"mean_rows", p.mean_rows}};
}

AttentionProfile profile_from_json(const json& j) {
    AttentionProfile p;
    p.n_layers = j.at("n_layers").get<std::size_t>();
    p.n_heads = j.at("n_heads").get<std::size_t>();
    p.n_tokens = j.at("n_tokens").get<std::size_t>();
    p.n_reference = j.at("n_reference").get<std::size_t>();
    p.recon_mean = j.at("recon_mean").get<double>();
    p.recon_std = j.at("recon_std").get<double>();
    p.attn_mean = j.at("attn_mean").get<double>();
    p.attn_std = j.at("attn_std").get<double>();
    p.mean_rows = j.at("mean_rows").get<std::vector<double>>();
    if (p.mean_rows.size() != p.n_layers * p.n_heads * p.n_tokens * p.n_tokens)
        throw IoError("attention profile: row table has the wrong size");
    return p;
}

std::string to_string(ModelKind kind) {
    return kind == ModelKind::Attn ? "attn" : "cnnae";
}

ModelKind parse_model_kind(const std::string& text) {
    if (text == "attn") return ModelKind::Attn;
    if (text == "cnnae") return ModelKind::CnnAe;
    throw InvalidConfig("unknown model '" + text + "' (expected attn or cnnae)");
}

std::size_t TrainedModel::n_channels() const {
    return kind == ModelKind::Attn ? attn->config().n_channels : cnn->config().n_channels;
}

std::vector<double> TrainedModel::score(std::span<const SignalMatrix> raw_windows, const ScoreConfig& variant,
                                        std::size_t batch_size) const {
    std::vector<SignalMatrix> windows;
    windows.reserve(raw_windows.size());
    for (const SignalMatrix& w : raw_windows) {
        if (w.channels() != n_channels())
            throw ShapeError("model expects " + std::to_string(n_channels()) + " channels, data has " +
                             std::to_string(w.channels()));
        windows.push_back(apply_norm(w, norm));
    }
    if (kind == ModelKind::Attn) return anomaly_scores(*attn, *profile, windows, variant, batch_size);
    return cnn_ae_scores(*cnn, windows, batch_size);
}

std::vector<double> TrainedModel::score(const Dataset& dataset, const ScoreConfig& variant,
                                        std::size_t batch_size) const {
    std::vector<SignalMatrix> raw;
    raw.reserve(dataset.size());
    for (const SignalInstance& inst : dataset.instances) raw.push_back(inst.data);
    return score(raw, variant, batch_size);
}

TrainedModel from_result(AttnTrainResult result) {
    TrainedModel m;
    m.kind = ModelKind::Attn;
    m.norm = std::move(result.norm);
    m.attn.emplace(std::move(result.model));
    m.profile = std::move(result.profile);
    return m;
}

TrainedModel from_result(CnnTrainResult result) {
    TrainedModel m;
    m.kind = ModelKind::CnnAe;
    m.norm = std::move(result.norm);
    m.cnn.emplace(std::move(result.model));
    return m;
}

void save_model(const TrainedModel& model, const std::filesystem::path& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw IoError("cannot create directory " + dir.string() + ": " + ec.message());
    if (model.kind == ModelKind::Attn) {
        write_checkpoint(dir / kCheckpointFile, "attn", to_json(model.attn->config()), model.norm, model.attn->params());
        std::ofstream out(dir / kProfileFile, std::ios::trunc);
        if (!out) throw IoError("cannot open " + (dir / kProfileFile).string() + " for writing");
        out << to_json(*model.profile).dump() << "\n";
        if (!out) throw IoError("write failed: " + (dir / kProfileFile).string());
    } else {
        write_checkpoint(dir / kCheckpointFile, "cnnae", to_json(model.cnn->config()), model.norm, model.cnn->params());
    }
}

TrainedModel load_model(const std::filesystem::path& dir) {
    Checkpoint ck = read_checkpoint(dir / kCheckpointFile);
    TrainedModel m;
    m.norm = ck.norm;
    try {
        m.kind = parse_model_kind(ck.model);
        if (m.kind == ModelKind::Attn) {
            m.attn.emplace(attn_config_from_json(ck.header.at("config")), std::move(ck.params));
            m.profile = profile_from_json(read_json_file(dir / kProfileFile));
            if (m.profile->n_layers != m.attn->config().n_layers || m.profile->n_heads != m.attn->config().n_heads ||
                m.profile->n_tokens != m.attn->config().n_tokens())
                throw IoError("attention profile does not match the checkpoint's architecture");
        } else {
            m.cnn.emplace(cnn_config_from_json(ck.header.at("config")), std::move(ck.params));
        }
    } catch (const json::exception& e) {
        throw IoError((dir / kCheckpointFile).string() + ": bad config: " + e.what());
    } catch (const InvalidConfig& e) {
        throw IoError((dir / kCheckpointFile).string() + ": " + e.what());
    }
    if (m.norm.mean.size() != m.n_channels()) throw IoError("normalization stats do not match the model's channel count");
    return m;
}

}  // namespace ishm
