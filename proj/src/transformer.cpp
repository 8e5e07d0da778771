#include "ishm/transformer.hpp"

#include "ishm/error.hpp"

#include <algorithm>
#include <cmath>

namespace ishm {

namespace {

std::string layer_name(std::size_t layer, const char* what) {
    return "layer" + std::to_string(layer) + "." + what;
}

Var linear(const std::vector<Var>& p, std::size_t w, std::size_t b, Var x) {
    return add_broadcast(matmul(x, p[w]), p[b]);
}

// [B, C, L, P] <-> [B, L, C, P] is its own inverse up to the axis sizes.
Var swap_middle(Var x, std::size_t a, std::size_t b, std::size_t c, std::size_t d) {
    return permute_0213(reshape(x, Shape{a, b, c, d}));
}

}  // namespace

TrainConfig AttnTransformerConfig::train_config() const {
    TrainConfig t;
    t.epochs = epochs;
    t.batch_size = batch_size;
    t.adam.lr = lr;
    t.seed = seed;
    return t;
}

void AttnTransformerConfig::validate() const {
    if (n_channels == 0) throw InvalidConfig("n_channels must be positive");
    if (patch_len == 0 || n_samples % patch_len != 0)
        throw InvalidConfig("patch_len " + std::to_string(patch_len) + " does not divide " + std::to_string(n_samples));
    if (d_model == 0 || n_heads == 0 || d_model % n_heads != 0)
        throw InvalidConfig("d_model " + std::to_string(d_model) + " is not divisible by n_heads " + std::to_string(n_heads));
    if (n_layers == 0 || ffn_hidden == 0 || decoder_hidden == 0) throw InvalidConfig("layer sizes must be positive");
    if (!(pos_init_std >= 0.0)) throw InvalidConfig("pos_init_std must be non-negative");
    train_config().validate();
}

AttnTransformer::AttnTransformer(AttnTransformerConfig cfg) : cfg_(std::move(cfg)) {
    cfg_.validate();
    init_params();
}

AttnTransformer::AttnTransformer(AttnTransformerConfig cfg, ParameterSet params) : cfg_(std::move(cfg)) {
    cfg_.validate();
    init_params();
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

void AttnTransformer::init_params() {
    const std::size_t d = cfg_.d_model, L = cfg_.n_tokens(), W = cfg_.token_width();
    const std::size_t F = cfg_.ffn_hidden, Hd = cfg_.decoder_hidden;
    SeededRng rng = SeededRng(cfg_.seed).fork(0x696e6974ull);  // "init"
    auto lin = [&](const std::string& name, std::size_t in, std::size_t out) {
        params_.add(name + ".w", init_uniform_fan_in(Shape{in, out}, in, rng));
        params_.add(name + ".b", init_uniform_fan_in(Shape{out}, in, rng));
    };
    auto norm = [&](const std::string& name) {
        params_.add(name + ".g", Tensor(Shape{d}, 1.0));
        params_.add(name + ".b", Tensor(Shape{d}, 0.0));
    };
    lin("embed", W, d);
    params_.add("pos", init_gaussian(Shape{L, d}, cfg_.pos_init_std, rng));
    params_.add("inattn.v", Tensor(Shape{d, 1}, 0.0));
    for (std::size_t l = 0; l < cfg_.n_layers; ++l) {
        norm(layer_name(l, "ln1"));
        lin(layer_name(l, "q"), d, d);
        lin(layer_name(l, "k"), d, d);
        lin(layer_name(l, "v"), d, d);
        lin(layer_name(l, "o"), d, d);
        norm(layer_name(l, "ln2"));
        lin(layer_name(l, "ffn1"), d, F);
        lin(layer_name(l, "ffn2"), F, d);
    }
    norm("final_ln");
    lin("dec1", d, Hd);
    lin("dec2", Hd, W);
}

Var AttnTransformer::embed_patches(const std::vector<Var>& p, Var batch, Var* tokens_out) const {
    const Shape& s = batch.shape();
    if (s.size() != 3 || s[1] != cfg_.n_channels || s[2] != cfg_.n_samples)
        throw ShapeError("embed_patches: expected [B, " + std::to_string(cfg_.n_channels) + ", " +
                         std::to_string(cfg_.n_samples) + "], got " + shape_str(s));
    const std::size_t B = s[0], C = cfg_.n_channels, L = cfg_.n_tokens(), P = cfg_.patch_len;
    const Var tokens = reshape(swap_middle(batch, B, C, L, P), Shape{B, L, C * P});
    if (tokens_out) *tokens_out = tokens;
    return add_broadcast(linear(p, idx("embed.w"), idx("embed.b"), tokens), p[idx("pos")]);
}

std::pair<Var, Var> AttnTransformer::input_attention(const std::vector<Var>& p, Var tokens) const {
    const Shape& s = tokens.shape();
    const std::size_t B = s[0], L = s[1], d = s[2];
    const Var logits = reshape(matmul(tokens, p[idx("inattn.v")]), Shape{B, L});
    const Var saliency = softmax_rows(logits);
    const Var weights = reshape(scale(saliency, static_cast<double>(L)), Shape{B * L});
    const Var scaled = reshape(mul_rows(reshape(tokens, Shape{B * L, d}), weights), Shape{B, L, d});
    return {scaled, saliency};
}

Var AttnTransformer::encoder_forward(const std::vector<Var>& p, Var h, std::vector<Var>& attn) const {
    const Shape& s = h.shape();
    const std::size_t B = s[0], L = s[1], d = s[2], H = cfg_.n_heads, dh = cfg_.head_dim();
    const double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(dh));
    auto heads = [&](Var x) { return reshape(swap_middle(x, B, L, H, dh), Shape{B * H, L, dh}); };
    for (std::size_t l = 0; l < cfg_.n_layers; ++l) {
        auto P = [&](const char* what) { return idx(layer_name(l, what)); };
        const Var z = layer_norm(h, p[P("ln1.g")], p[P("ln1.b")]);
        const Var q = heads(linear(p, P("q.w"), P("q.b"), z));
        const Var k = heads(linear(p, P("k.w"), P("k.b"), z));
        const Var v = heads(linear(p, P("v.w"), P("v.b"), z));
        const Var a = softmax_rows(scale(bmm(q, k, true), inv_sqrt_dh));
        attn.push_back(a);
        const Var ctx = reshape(swap_middle(bmm(a, v), B, H, L, dh), Shape{B, L, d});
        h = add(h, linear(p, P("o.w"), P("o.b"), ctx));
        const Var z2 = layer_norm(h, p[P("ln2.g")], p[P("ln2.b")]);
        const Var f = linear(p, P("ffn2.w"), P("ffn2.b"), relu(linear(p, P("ffn1.w"), P("ffn1.b"), z2)));
        h = add(h, f);
    }
    return layer_norm(h, p[idx("final_ln.g")], p[idx("final_ln.b")]);
}

Var AttnTransformer::decoder_forward(const std::vector<Var>& p, Var encoded) const {
    const std::size_t B = encoded.shape()[0], L = cfg_.n_tokens(), C = cfg_.n_channels, P = cfg_.patch_len;
    const Var hidden = relu(linear(p, idx("dec1.w"), idx("dec1.b"), encoded));
    const Var patches = linear(p, idx("dec2.w"), idx("dec2.b"), hidden);  // [B, L, C*P]
    return reshape(swap_middle(patches, B, L, C, P), Shape{B, C, L * P});
}

AttnForward AttnTransformer::forward(Tape& tape, const std::vector<Var>& p, const Tensor& batch) const {
    AttnForward out;
    const Var x = tape.constant(batch);
    const Var embedded = embed_patches(p, x, &out.tokens);
    auto [weighted, saliency] = input_attention(p, embedded);
    out.saliency = saliency;
    out.encoded = encoder_forward(p, weighted, out.attn);
    out.recon = decoder_forward(p, out.encoded);
    return out;
}

AttnOutput AttnTransformer::infer(const Tensor& batch) const {
    Tape tape(false);
    const std::vector<Var> p = params_.bind(tape, false);
    const AttnForward f = forward(tape, p, batch);
    AttnOutput out;
    out.recon = f.recon.value();
    out.saliency = f.saliency.value();
    const std::size_t B = batch.dim(0), H = cfg_.n_heads, L = cfg_.n_tokens();
    for (const Var& a : f.attn) out.attn.push_back(a.value().reshaped(Shape{B, H, L, L}));
    const std::size_t per = batch.size() / B;
    out.recon_error.resize(B);
    for (std::size_t b = 0; b < B; ++b) {
        double s = 0.0;
        for (std::size_t i = 0; i < per; ++i) {
            const double e = out.recon[b * per + i] - batch[b * per + i];
            s += e * e;
        }
        out.recon_error[b] = s / static_cast<double>(per);
    }
    return out;
}

BatchLoss AttnTransformer::loss_fn() const {
    return [this](Tape& tape, const std::vector<Var>& p, const Tensor& batch) {
        const AttnForward f = forward(tape, p, batch);
        return mse_loss(f.recon, tape.constant(batch));
    };
}

std::string to_string(ScoreVariant v) {
    switch (v) {
        case ScoreVariant::ReconOnly: return "recon";
        case ScoreVariant::AttnOnly: return "attn";
        case ScoreVariant::Combined: return "combined";
    }
    return "?";
}

ScoreVariant parse_score_variant(const std::string& text) {
    if (text == "recon") return ScoreVariant::ReconOnly;
    if (text == "attn") return ScoreVariant::AttnOnly;
    if (text == "combined") return ScoreVariant::Combined;
    throw InvalidConfig("unknown score variant '" + text + "' (expected recon, attn or combined)");
}

void ScoreConfig::validate() const {
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw InvalidConfig("alpha must lie in [0, 1]");
}

double js_divergence(std::span<const double> p, std::span<const double> q) {
    if (p.size() != q.size()) throw ShapeError("js_divergence: length mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        const double m = 0.5 * (p[i] + q[i]);
        if (p[i] > 0.0) s += p[i] * std::log(p[i] / m);
        if (q[i] > 0.0) s += q[i] * std::log(q[i] / m);
    }
    return std::max(0.0, 0.5 * s);
}

std::vector<double> attention_deviation(const std::vector<Tensor>& attn, const AttentionProfile& profile) {
    if (attn.size() != profile.n_layers) throw ShapeError("attention_deviation: layer count differs from profile");
    if (attn.empty()) return {};
    const std::size_t B = attn.front().dim(0), H = profile.n_heads, L = profile.n_tokens;
    for (const Tensor& a : attn)
        if (a.shape() != Shape{B, H, L, L})
            throw ShapeError("attention_deviation: expected " + shape_str(Shape{B, H, L, L}) + ", got " + shape_str(a.shape()));
    const double inv = 1.0 / static_cast<double>(profile.n_layers * H);
    std::vector<double> out(B, 0.0);
    std::vector<double> per_row(L);
    for (std::size_t b = 0; b < B; ++b) {
        std::fill(per_row.begin(), per_row.end(), 0.0);
        for (std::size_t l = 0; l < profile.n_layers; ++l)
            for (std::size_t h = 0; h < H; ++h)
                for (std::size_t i = 0; i < L; ++i) {
                    const double* row = attn[l].ptr() + ((b * H + h) * L + i) * L;
                    per_row[i] += js_divergence({row, L}, {profile.row(l, h, i), L});
                }
        out[b] = *std::max_element(per_row.begin(), per_row.end()) * inv;
    }
    return out;
}

namespace {

std::pair<double, double> mean_std(const std::vector<double>& v) {
    double m = 0.0;
    for (double x : v) m += x;
    m /= static_cast<double>(v.size());
    double s = 0.0;
    for (double x : v) s += (x - m) * (x - m);
    return {m, std::sqrt(s / static_cast<double>(v.size()))};
}

template <typename Fn>
void for_each_batch(std::span<const SignalMatrix> windows, std::size_t batch_size, Fn&& fn) {
    for (std::size_t start = 0; start < windows.size(); start += batch_size) {
        const std::size_t end = std::min(windows.size(), start + batch_size);
        fn(start, make_batch(windows.subspan(start, end - start)));
    }
}

}  // namespace

AttentionProfile estimate_profile(const AttnTransformer& model, std::span<const SignalMatrix> reference,
                                  std::size_t batch_size) {
    if (reference.size() < AttentionProfile::kMinReference)
        throw InvalidConfig("attention profile needs at least " + std::to_string(AttentionProfile::kMinReference) +
                            " normal instances, got " + std::to_string(reference.size()));
    if (batch_size == 0) throw InvalidConfig("batch_size must be positive");
    const AttnTransformerConfig& cfg = model.config();
    AttentionProfile prof;
    prof.n_layers = cfg.n_layers;
    prof.n_heads = cfg.n_heads;
    prof.n_tokens = cfg.n_tokens();
    prof.n_reference = reference.size();
    const std::size_t L = prof.n_tokens, H = prof.n_heads, row_block = H * L * L;
    prof.mean_rows.assign(prof.n_layers * row_block, 0.0);

    std::vector<double> recon(reference.size());
    for_each_batch(reference, batch_size, [&](std::size_t start, const Tensor& batch) {
        const AttnOutput out = model.infer(batch);
        const std::size_t B = batch.dim(0);
        for (std::size_t l = 0; l < prof.n_layers; ++l)
            for (std::size_t b = 0; b < B; ++b) {
                const double* src = out.attn[l].ptr() + b * row_block;
                double* dst = prof.mean_rows.data() + l * row_block;
                for (std::size_t k = 0; k < row_block; ++k) dst[k] += src[k];
            }
        std::copy(out.recon_error.begin(), out.recon_error.end(), recon.begin() + static_cast<std::ptrdiff_t>(start));
    });
    const double inv_n = 1.0 / static_cast<double>(reference.size());
    for (double& v : prof.mean_rows) v *= inv_n;
    // Renormalize each row so accumulated rounding cannot leave it off the simplex.
    for (std::size_t r = 0; r < prof.mean_rows.size() / L; ++r) {
        double* row = prof.mean_rows.data() + r * L;
        double s = 0.0;
        for (std::size_t j = 0; j < L; ++j) s += row[j];
        for (std::size_t j = 0; j < L; ++j) row[j] /= s;
    }

    std::vector<double> attn(reference.size());
    for_each_batch(reference, batch_size, [&](std::size_t start, const Tensor& batch) {
        const std::vector<double> dev = attention_deviation(model.infer(batch).attn, prof);
        std::copy(dev.begin(), dev.end(), attn.begin() + static_cast<std::ptrdiff_t>(start));
    });
    std::tie(prof.recon_mean, prof.recon_std) = mean_std(recon);
    std::tie(prof.attn_mean, prof.attn_std) = mean_std(attn);
    return prof;
}

InstanceScores raw_scores(const AttnTransformer& model, const AttentionProfile& profile, const Tensor& batch) {
    const AttnOutput out = model.infer(batch);
    return {out.recon_error, attention_deviation(out.attn, profile)};
}

std::vector<double> combine_scores(const InstanceScores& raw, const AttentionProfile& profile, const ScoreConfig& cfg) {
    cfg.validate();
    switch (cfg.variant) {
        case ScoreVariant::ReconOnly: return raw.recon;
        case ScoreVariant::AttnOnly: return raw.attn;
        case ScoreVariant::Combined: break;
    }
    const double rs = std::max(profile.recon_std, AttentionProfile::kStdFloor);
    const double as = std::max(profile.attn_std, AttentionProfile::kStdFloor);
    std::vector<double> out(raw.recon.size());
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] = cfg.alpha * (raw.attn[i] - profile.attn_mean) / as +
                 (1.0 - cfg.alpha) * (raw.recon[i] - profile.recon_mean) / rs;
    return out;
}

std::vector<double> anomaly_scores(const AttnTransformer& model, const AttentionProfile& profile,
                                   std::span<const SignalMatrix> windows, const ScoreConfig& cfg,
                                   std::size_t batch_size) {
    if (profile.mean_rows.empty()) throw InvalidConfig("anomaly_scores: attention profile is missing");
    if (batch_size == 0) throw InvalidConfig("batch_size must be positive");
    cfg.validate();
    std::vector<double> out;
    out.reserve(windows.size());
    for_each_batch(windows, batch_size, [&](std::size_t, const Tensor& batch) {
        const std::vector<double> s = combine_scores(raw_scores(model, profile, batch), profile, cfg);
        out.insert(out.end(), s.begin(), s.end());
    });
    return out;
}

AttnTrainResult train_attn_transformer(const Dataset& train, AttnTransformerConfig cfg) {
    if (train.size() == 0) throw InvalidConfig("training set is empty");
    cfg.n_channels = train.meta.n_channels;
    cfg.n_samples = train.meta.n_samples;
    AttnTransformer model(cfg);
    const NormStats norm = norm_stats(train);
    const std::vector<SignalMatrix> windows = normalized_windows(train, norm);
    TrainHistory history = train_reconstruction(model.params(), windows, cfg.train_config(), model.loss_fn());

    std::vector<SignalMatrix> reference;
    for (std::size_t i = 0; i < train.size(); ++i)
        if (!train.instances[i].label) reference.push_back(windows[i]);
    AttentionProfile profile = estimate_profile(model, reference, cfg.batch_size);
    return {std::move(model), std::move(profile), norm, std::move(history)};
}

}  // namespace ishm
