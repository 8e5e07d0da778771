#include "ishm/cnn_ae.hpp"

#include "ishm/error.hpp"

#include <algorithm>

namespace ishm {

std::size_t CnnAeConfig::length1() const {
    return conv1d_output_length(n_samples, kernel, stride);
}

std::size_t CnnAeConfig::length2() const {
    return conv1d_output_length(length1(), kernel, stride);
}

TrainConfig CnnAeConfig::train_config() const {
    TrainConfig t;
    t.epochs = epochs;
    t.batch_size = batch_size;
    t.adam.lr = lr;
    t.seed = seed;
    return t;
}

void CnnAeConfig::validate() const {
    if (n_channels == 0 || channels1 == 0 || channels2 == 0) throw InvalidConfig("channel counts must be positive");
    if (kernel == 0 || stride == 0) throw InvalidConfig("kernel and stride must be positive");
    if (length1() < kernel || length2() == 0)
        throw InvalidConfig("kernel " + std::to_string(kernel) + " too long for " + std::to_string(n_samples) + " samples");
    const std::size_t back1 = conv_transpose1d_output_length(length2(), kernel, stride);
    const std::size_t back2 = conv_transpose1d_output_length(back1, kernel, stride);
    if (back1 != length1() || back2 != n_samples)
        throw InvalidConfig("kernel " + std::to_string(kernel) + " / stride " + std::to_string(stride) +
                            " do not mirror back to " + std::to_string(n_samples) + " samples (got " +
                            std::to_string(back2) + ")");
    train_config().validate();
}

CnnAutoencoder::CnnAutoencoder(CnnAeConfig cfg) : cfg_(std::move(cfg)) {
    cfg_.validate();
    SeededRng rng = SeededRng(cfg_.seed).fork(0x696e6974ull);
    const std::size_t C = cfg_.n_channels, C1 = cfg_.channels1, C2 = cfg_.channels2, K = cfg_.kernel;
    auto conv = [&](const std::string& name, std::size_t a, std::size_t b, std::size_t fan_in) {
        params_.add(name + ".w", init_uniform_fan_in(Shape{a, b, K}, fan_in, rng));
    };
    auto bias = [&](const std::string& name, std::size_t n, std::size_t fan_in) {
        params_.add(name + ".b", init_uniform_fan_in(Shape{n}, fan_in, rng));
    };
    conv("enc1", C1, C, C * K);
    bias("enc1", C1, C * K);
    conv("enc2", C2, C1, C1 * K);
    bias("enc2", C2, C1 * K);
    conv("dec1", C2, C1, C2 * K);
    bias("dec1", C1, C2 * K);
    conv("dec2", C1, C, C1 * K);
    bias("dec2", C, C1 * K);
}

CnnAutoencoder::CnnAutoencoder(CnnAeConfig cfg, ParameterSet params) : CnnAutoencoder(std::move(cfg)) {
    if (params.size() != params_.size())
        throw InvalidConfig("checkpoint holds " + std::to_string(params.size()) + " parameters, model expects " +
                            std::to_string(params_.size()));
    for (std::size_t i = 0; i < params_.size(); ++i) {
        const Tensor& src = params[params_.name(i)];
        if (src.shape() != params_.value(i).shape())
            throw ShapeError("parameter '" + params_.name(i) + "' has shape " + shape_str(src.shape()) + ", expected " +
                             shape_str(params_.value(i).shape()));
        params_.value(i) = src;
    }
}

Var CnnAutoencoder::forward(const std::vector<Var>& p, Var x) const {
    const std::size_t s = cfg_.stride;
    auto P = [&](const char* name) { return p[params_.index(name)]; };
    Var h = relu(conv1d(x, P("enc1.w"), P("enc1.b"), s));
    h = relu(conv1d(h, P("enc2.w"), P("enc2.b"), s));
    h = relu(conv_transpose1d(h, P("dec1.w"), P("dec1.b"), s));
    return conv_transpose1d(h, P("dec2.w"), P("dec2.b"), s);
}

Tensor CnnAutoencoder::reconstruct(const Tensor& batch) const {
    Tape tape(false);
    const std::vector<Var> p = params_.bind(tape, false);
    return forward(p, tape.constant(batch)).value();
}

std::vector<double> CnnAutoencoder::score_batch(const Tensor& batch) const {
    const Tensor r = reconstruct(batch);
    const std::size_t B = batch.dim(0), per = batch.size() / B;
    std::vector<double> out(B);
    for (std::size_t b = 0; b < B; ++b) {
        double s = 0.0;
        for (std::size_t i = 0; i < per; ++i) {
            const double e = r[b * per + i] - batch[b * per + i];
            s += e * e;
        }
        out[b] = s / static_cast<double>(per);
    }
    return out;
}

BatchLoss CnnAutoencoder::loss_fn() const {
    return [this](Tape& tape, const std::vector<Var>& p, const Tensor& batch) {
        const Var x = tape.constant(batch);
        return mse_loss(forward(p, x), x);
    };
}

CnnTrainResult cnn_ae_train(const Dataset& train, CnnAeConfig cfg) {
    if (train.size() == 0) throw InvalidConfig("training set is empty");
    cfg.n_channels = train.meta.n_channels;
    cfg.n_samples = train.meta.n_samples;
    CnnAutoencoder model(cfg);
    const NormStats norm = norm_stats(train);
    const std::vector<SignalMatrix> windows = normalized_windows(train, norm);
    TrainHistory history = train_reconstruction(model.params(), windows, cfg.train_config(), model.loss_fn());
    return {std::move(model), norm, std::move(history)};
}

std::vector<double> cnn_ae_scores(const CnnAutoencoder& model, std::span<const SignalMatrix> windows,
                                  std::size_t batch_size) {
    if (batch_size == 0) throw InvalidConfig("batch_size must be positive");
    std::vector<double> out;
    out.reserve(windows.size());
    for (std::size_t start = 0; start < windows.size(); start += batch_size) {
        const std::size_t end = std::min(windows.size(), start + batch_size);
        const std::vector<double> s = model.score_batch(make_batch(windows.subspan(start, end - start)));
        out.insert(out.end(), s.begin(), s.end());
    }
    return out;
}

}  // namespace ishm
