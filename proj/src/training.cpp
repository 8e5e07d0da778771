#include "ishm/training.hpp"

#include "ishm/error.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace ishm {

namespace {

constexpr std::uint64_t kShuffleStream = 0x7368756666ull;  // "shuff"

}  // namespace

Tensor make_batch(std::span<const SignalMatrix* const> windows) {
    if (windows.empty()) throw ShapeError("make_batch: empty batch");
    const std::size_t C = windows.front()->channels(), T = windows.front()->samples();
    Tensor out(Shape{windows.size(), C, T});
    for (std::size_t b = 0; b < windows.size(); ++b) {
        const SignalMatrix& w = *windows[b];
        if (w.channels() != C || w.samples() != T)
            throw ShapeError("make_batch: window " + std::to_string(b) + " is " + std::to_string(w.channels()) + "x" +
                             std::to_string(w.samples()) + ", expected " + std::to_string(C) + "x" + std::to_string(T));
        std::copy(w.values().begin(), w.values().end(), out.ptr() + b * C * T);
    }
    return out;
}

Tensor make_batch(std::span<const SignalMatrix> windows) {
    std::vector<const SignalMatrix*> ptrs;
    ptrs.reserve(windows.size());
    for (const SignalMatrix& w : windows) ptrs.push_back(&w);
    return make_batch(std::span<const SignalMatrix* const>(ptrs));
}

std::vector<SignalMatrix> normalized_windows(const Dataset& dataset, const NormStats& stats) {
    std::vector<SignalMatrix> out;
    out.reserve(dataset.size());
    for (const SignalInstance& inst : dataset.instances) out.push_back(apply_norm(inst.data, stats));
    return out;
}

void TrainConfig::validate() const {
    if (epochs == 0) throw InvalidConfig("epochs must be positive");
    if (batch_size == 0) throw InvalidConfig("batch_size must be positive");
    adam.validate();
}

std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, std::size_t epoch) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    SeededRng rng = SeededRng(seed, kShuffleStream).fork(epoch);
    for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.next_below(i)]);
    return order;
}

TrainHistory train_reconstruction(ParameterSet& params, std::span<const SignalMatrix> windows, const TrainConfig& cfg,
                                  const BatchLoss& loss) {
    cfg.validate();
    if (windows.empty()) throw InvalidConfig("training set is empty");
    AdamState state(params, cfg.adam);
    TrainHistory history;
    std::vector<const SignalMatrix*> batch_ptrs;
    std::vector<Tensor> grads(params.size());
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        const std::vector<std::size_t> order = epoch_order(windows.size(), cfg.seed, epoch);
        double total = 0.0;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const std::size_t end = std::min(order.size(), start + cfg.batch_size);
            batch_ptrs.clear();
            for (std::size_t i = start; i < end; ++i) batch_ptrs.push_back(&windows[order[i]]);
            const Tensor batch = make_batch(std::span<const SignalMatrix* const>(batch_ptrs));

            Tape tape;
            const std::vector<Var> bound = params.bind(tape);
            const Var l = loss(tape, bound, batch);
            const double value = l.value().item();
            if (!std::isfinite(value)) throw NumericError("training loss became non-finite at epoch " + std::to_string(epoch));
            tape.backward(l);
            for (std::size_t i = 0; i < params.size(); ++i) grads[i] = tape.grad(bound[i]);
            adam_step(params, grads, state);
            total += value * static_cast<double>(end - start);
            ++history.steps;
        }
        history.epoch_loss.push_back(total / static_cast<double>(windows.size()));
    }
    return history;
}

Tensor init_uniform_fan_in(Shape shape, std::size_t fan_in, SeededRng& rng) {
    Tensor t(std::move(shape));
    const double bound = 1.0 / std::sqrt(static_cast<double>(std::max<std::size_t>(fan_in, 1)));
    for (double& v : t.data()) v = rng.next_uniform(-bound, bound);
    return t;
}

Tensor init_gaussian(Shape shape, double std, SeededRng& rng) {
    Tensor t(std::move(shape));
    for (double& v : t.data()) v = rng.next_gaussian(0.0, std);
    return t;
}

}  // namespace ishm
