#pragma once

#include "ishm/autograd.hpp"
#include "ishm/benchmark.hpp"
#include "ishm/dataset_io.hpp"
#include "ishm/optim.hpp"

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

namespace ishm {

// Stacks windows into a [B, C, T] tensor. All windows must share C and T.
Tensor make_batch(std::span<const SignalMatrix> windows);
Tensor make_batch(std::span<const SignalMatrix* const> windows);

// Normalized copies of every window in the dataset, in dataset order.
std::vector<SignalMatrix> normalized_windows(const Dataset& dataset, const NormStats& stats);

struct TrainConfig {
    std::size_t epochs = 30;
    std::size_t batch_size = 32;
    AdamConfig adam{};
    std::uint64_t seed = 0;

    void validate() const;
};

struct TrainHistory {
    // Mean per-batch loss of each epoch, weighted by batch size.
    std::vector<double> epoch_loss;
    std::uint64_t steps = 0;
};

// Builds the scalar reconstruction loss of one batch on `tape`.
using BatchLoss = std::function<Var(Tape& tape, const std::vector<Var>& params, const Tensor& batch)>;

// Minibatch Adam over `windows`, shuffled per epoch from `cfg.seed`. The loop
// sees the windows only; labels never enter it.
TrainHistory train_reconstruction(ParameterSet& params, std::span<const SignalMatrix> windows, const TrainConfig& cfg,
                                  const BatchLoss& loss);

// Epoch permutation used by train_reconstruction.
std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, std::size_t epoch);

// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) initialisation.
Tensor init_uniform_fan_in(Shape shape, std::size_t fan_in, SeededRng& rng);
Tensor init_gaussian(Shape shape, double std, SeededRng& rng);

}  // namespace ishm
