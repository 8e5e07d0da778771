#pragma once

#include "ishm/dataset_io.hpp"
#include "ishm/optim.hpp"
#include "ishm/training.hpp"

#include <cstdint>
#include <vector>

namespace ishm {

inline constexpr const char* kCnnModelVersion = "ishm-cnnae/1";

// conv(stride) -> relu -> conv(stride) -> relu -> convT -> relu -> convT,
// all valid padding. The mirrored lengths must return to n_samples.
struct CnnAeConfig {
    std::size_t n_channels = 1;
    std::size_t n_samples = 200;
    std::size_t kernel = 6;
    std::size_t stride = 2;
    std::size_t channels1 = 32;
    std::size_t channels2 = 64;
    std::size_t epochs = 30;
    std::size_t batch_size = 32;
    double lr = 1e-3;
    std::uint64_t seed = 0;

    // Lengths after the first and second encoder layer.
    std::size_t length1() const;
    std::size_t length2() const;
    TrainConfig train_config() const;
    // Throws InvalidConfig.
    void validate() const;

    bool operator==(const CnnAeConfig&) const = default;
};

class CnnAutoencoder {
public:
    explicit CnnAutoencoder(CnnAeConfig cfg);
    CnnAutoencoder(CnnAeConfig cfg, ParameterSet params);

    const CnnAeConfig& config() const { return cfg_; }
    const ParameterSet& params() const { return params_; }
    ParameterSet& params() { return params_; }

    // [B, C, T] -> [B, C, T]
    Var forward(const std::vector<Var>& p, Var batch) const;
    Tensor reconstruct(const Tensor& batch) const;
    // Per-instance reconstruction MSE.
    std::vector<double> score_batch(const Tensor& batch) const;

    BatchLoss loss_fn() const;

private:
    CnnAeConfig cfg_;
    ParameterSet params_;
};

struct CnnTrainResult {
    CnnAutoencoder model;
    NormStats norm;
    TrainHistory history;
};

CnnTrainResult cnn_ae_train(const Dataset& train, CnnAeConfig cfg);
// `windows` must already be normalized.
std::vector<double> cnn_ae_scores(const CnnAutoencoder& model, std::span<const SignalMatrix> windows,
                                  std::size_t batch_size = 32);

}  // namespace ishm
