#pragma once

#include "ishm/autograd.hpp"
#include "ishm/dataset_io.hpp"
#include "ishm/optim.hpp"
#include "ishm/training.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace ishm {

inline constexpr const char* kAttnModelVersion = "ishm-attn/1";

struct AttnTransformerConfig {
    std::size_t n_channels = 1;
    std::size_t n_samples = 200;
    std::size_t patch_len = 10;
    std::size_t d_model = 32;
    std::size_t n_heads = 4;
    std::size_t n_layers = 2;
    std::size_t ffn_hidden = 64;
    std::size_t decoder_hidden = 128;
    // Std of the N(0, s^2) initialisation of the learned position table.
    double pos_init_std = 1.0;
    std::size_t epochs = 30;
    std::size_t batch_size = 32;
    double lr = 1e-3;
    std::uint64_t seed = 0;

    std::size_t n_tokens() const { return n_samples / patch_len; }
    std::size_t head_dim() const { return d_model / n_heads; }
    std::size_t token_width() const { return patch_len * n_channels; }
    TrainConfig train_config() const;

    // Throws InvalidConfig.
    void validate() const;

    bool operator==(const AttnTransformerConfig&) const = default;
};

// Tape handles produced by one forward pass over a [B, C, T] batch.
struct AttnForward {
    Var tokens;                // [B, L, C*P], the patched input
    Var saliency;              // [B, L]
    Var encoded;               // [B, L, d]
    std::vector<Var> attn;     // per layer: [B*H, L, L]
    Var recon;                 // [B, C, T]
};

// Plain-value result of inference on a batch.
struct AttnOutput {
    Tensor recon;                 // [B, C, T]
    Tensor saliency;              // [B, L]
    std::vector<Tensor> attn;     // per layer: [B, H, L, L]
    std::vector<double> recon_error;  // per instance mean squared error
};

class AttnTransformer {
public:
    // Fresh parameters drawn from cfg.seed.
    explicit AttnTransformer(AttnTransformerConfig cfg);
    // Restores saved parameters; names and shapes must match the config.
    AttnTransformer(AttnTransformerConfig cfg, ParameterSet params);

    const AttnTransformerConfig& config() const { return cfg_; }
    const ParameterSet& params() const { return params_; }
    ParameterSet& params() { return params_; }

    // Patch tokens [B, L, C*P] from a [B, C, T] batch, linearly projected to
    // d_model plus the position table.
    Var embed_patches(const std::vector<Var>& p, Var batch, Var* tokens_out = nullptr) const;
    // Softmax saliency over positions; tokens scaled by L * saliency.
    std::pair<Var, Var> input_attention(const std::vector<Var>& p, Var tokens) const;
    // Pre-norm encoder; appends each layer's [B*H, L, L] attention to `attn`.
    Var encoder_forward(const std::vector<Var>& p, Var tokens, std::vector<Var>& attn) const;
    // Per-token MLP back to patches, unfolded into [B, C, T].
    Var decoder_forward(const std::vector<Var>& p, Var encoded) const;

    AttnForward forward(Tape& tape, const std::vector<Var>& p, const Tensor& batch) const;
    AttnOutput infer(const Tensor& batch) const;

    BatchLoss loss_fn() const;

private:
    void init_params();
    std::size_t idx(const std::string& name) const { return params_.index(name); }

    AttnTransformerConfig cfg_;
    ParameterSet params_;
};

// Reference attention rows and score statistics, estimated on normal data.
struct AttentionProfile {
    std::size_t n_layers = 0;
    std::size_t n_heads = 0;
    std::size_t n_tokens = 0;
    std::size_t n_reference = 0;
    // [layer][head][query][key], each (layer, head, query) row a distribution.
    std::vector<double> mean_rows;
    double recon_mean = 0.0;
    double recon_std = 1.0;
    double attn_mean = 0.0;
    double attn_std = 1.0;

    static constexpr std::size_t kMinReference = 100;
    static constexpr double kStdFloor = 1e-12;

    const double* row(std::size_t layer, std::size_t head, std::size_t query) const {
        return mean_rows.data() + ((layer * n_heads + head) * n_tokens + query) * n_tokens;
    }
    bool operator==(const AttentionProfile&) const = default;
};

enum class ScoreVariant { ReconOnly, AttnOnly, Combined };
std::string to_string(ScoreVariant v);
// Accepts recon | attn | combined. Throws InvalidConfig.
ScoreVariant parse_score_variant(const std::string& text);

struct ScoreConfig {
    ScoreVariant variant = ScoreVariant::AttnOnly;
    double alpha = 0.5;

    void validate() const;
};

// Jensen-Shannon divergence (natural log) between two distributions.
double js_divergence(std::span<const double> p, std::span<const double> q);

// Max over query rows of the mean over (layer, head) of JS(row, reference).
// `attn` holds one [B, H, L, L] tensor per layer; returns one value per instance.
std::vector<double> attention_deviation(const std::vector<Tensor>& attn, const AttentionProfile& profile);

// Profile from the given (normal) windows. Throws InvalidConfig when fewer
// than kMinReference windows are supplied.
AttentionProfile estimate_profile(const AttnTransformer& model, std::span<const SignalMatrix> reference,
                                  std::size_t batch_size = 32);

struct InstanceScores {
    std::vector<double> recon;
    std::vector<double> attn;
};

InstanceScores raw_scores(const AttnTransformer& model, const AttentionProfile& profile, const Tensor& batch);
std::vector<double> combine_scores(const InstanceScores& raw, const AttentionProfile& profile, const ScoreConfig& cfg);

// Higher is more anomalous. `windows` must already be normalized.
std::vector<double> anomaly_scores(const AttnTransformer& model, const AttentionProfile& profile,
                                   std::span<const SignalMatrix> windows, const ScoreConfig& cfg,
                                   std::size_t batch_size = 32);

struct AttnTrainResult {
    AttnTransformer model;
    AttentionProfile profile;
    NormStats norm;
    TrainHistory history;
};

// Fits normalization on the whole training set, trains on every instance
// (anomalous ones included), then estimates the profile from the instances
// labelled normal.
AttnTrainResult train_attn_transformer(const Dataset& train, AttnTransformerConfig cfg);

}  // namespace ishm
