#pragma once

#include "ishm/cnn_ae.hpp"
#include "ishm/dataset_io.hpp"
#include "ishm/optim.hpp"
#include "ishm/transformer.hpp"

#include "json.hpp"

#include <filesystem>
#include <optional>
#include <string>

namespace ishm {

inline constexpr const char* kCheckpointFile = "model.ckpt";
inline constexpr const char* kProfileFile = "profile.json";
inline constexpr std::uint32_t kCheckpointVersion = 1;

// Binary layout (little-endian): "ISHMCKPT", u32 version, u64 header length,
// JSON header {model, model_version, config, norm}, u64 parameter count, then
// per parameter: u32 name length, name, u32 rank, u64 dims[rank], f64 data.
struct Checkpoint {
    std::string model;  // "attn" or "cnnae"
    nlohmann::json header;
    NormStats norm;
    ParameterSet params;
};

void write_checkpoint(const std::filesystem::path& file, const std::string& model, const nlohmann::json& config,
                      const NormStats& norm, const ParameterSet& params);
// Throws IoError on a bad magic, version or truncated file.
Checkpoint read_checkpoint(const std::filesystem::path& file);

nlohmann::json to_json(const AttnTransformerConfig& cfg);
AttnTransformerConfig attn_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const CnnAeConfig& cfg);
CnnAeConfig cnn_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const NormStats& norm);
NormStats norm_from_json(const nlohmann::json& j);
nlohmann::json to_json(const AttentionProfile& profile);
AttentionProfile profile_from_json(const nlohmann::json& j);

enum class ModelKind { Attn, CnnAe };
std::string to_string(ModelKind kind);
// Accepts attn | cnnae. Throws InvalidConfig.
ModelKind parse_model_kind(const std::string& text);

// A trained detector of either kind together with its normalization.
struct TrainedModel {
    ModelKind kind = ModelKind::Attn;
    NormStats norm;
    std::optional<AttnTransformer> attn;
    std::optional<AttentionProfile> profile;
    std::optional<CnnAutoencoder> cnn;

    std::size_t n_channels() const;
    // Normalizes raw windows, then scores them in batches. `variant` is
    // ignored by the CNN autoencoder, whose score is always reconstruction MSE.
    std::vector<double> score(std::span<const SignalMatrix> raw_windows, const ScoreConfig& variant,
                              std::size_t batch_size = 32) const;
    std::vector<double> score(const Dataset& dataset, const ScoreConfig& variant, std::size_t batch_size = 32) const;
};

TrainedModel from_result(AttnTrainResult result);
TrainedModel from_result(CnnTrainResult result);

// Writes model.ckpt (+ profile.json for the transformer) into `dir`.
void save_model(const TrainedModel& model, const std::filesystem::path& dir);
// Throws IoError when files are missing or malformed.
TrainedModel load_model(const std::filesystem::path& dir);

}  // namespace ishm
