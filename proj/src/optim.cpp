#include "ishm/optim.hpp"

#include "ishm/error.hpp"

#include <cmath>

namespace ishm {

std::size_t ParameterSet::add(std::string name, Tensor value) {
    if (by_name_.contains(name)) throw InvalidParameter("duplicate parameter name '" + name + "'");
    by_name_.emplace(name, names_.size());
    names_.push_back(std::move(name));
    values_.push_back(std::move(value));
    return values_.size() - 1;
}

std::size_t ParameterSet::index(const std::string& name) const {
    auto it = by_name_.find(name);
    if (it == by_name_.end()) throw InvalidParameter("unknown parameter '" + name + "'");
    return it->second;
}

std::vector<Var> ParameterSet::bind(Tape& tape, bool requires_grad) const {
    std::vector<Var> out;
    out.reserve(values_.size());
    for (const Tensor& t : values_) out.push_back(tape.leaf(t, requires_grad));
    return out;
}

std::size_t ParameterSet::numel() const {
    std::size_t n = 0;
    for (const Tensor& t : values_) n += t.size();
    return n;
}

void AdamConfig::validate() const {
    if (!(lr > 0.0) || !std::isfinite(lr)) throw InvalidConfig("adam: lr must be a positive finite number");
    if (!(beta1 >= 0.0 && beta1 < 1.0)) throw InvalidConfig("adam: beta1 must lie in [0, 1)");
    if (!(beta2 >= 0.0 && beta2 < 1.0)) throw InvalidConfig("adam: beta2 must lie in [0, 1)");
    if (!(eps > 0.0)) throw InvalidConfig("adam: eps must be positive");
}

AdamState::AdamState(const ParameterSet& params, AdamConfig config) : cfg(config) {
    cfg.validate();
    for (std::size_t i = 0; i < params.size(); ++i) {
        m.emplace_back(params.value(i).shape(), 0.0);
        v.emplace_back(params.value(i).shape(), 0.0);
    }
}

void adam_step(ParameterSet& params, const std::vector<Tensor>& grads, AdamState& state) {
    if (grads.size() != params.size() || state.m.size() != params.size())
        throw ShapeError("adam_step: " + std::to_string(grads.size()) + " gradients, " + std::to_string(params.size()) +
                         " parameters, " + std::to_string(state.m.size()) + " moment slots");
    for (std::size_t i = 0; i < params.size(); ++i)
        if (grads[i].shape() != params.value(i).shape() || state.m[i].shape() != params.value(i).shape())
            throw ShapeError("adam_step: shape mismatch for '" + params.name(i) + "'");

    const AdamConfig& c = state.cfg;
    ++state.step;
    const double t = static_cast<double>(state.step);
    const double bc1 = 1.0 - std::pow(c.beta1, t);
    const double bc2 = 1.0 - std::pow(c.beta2, t);
    for (std::size_t i = 0; i < params.size(); ++i) {
        Tensor& p = params.value(i);
        Tensor& m = state.m[i];
        Tensor& v = state.v[i];
        const Tensor& g = grads[i];
        for (std::size_t k = 0; k < p.size(); ++k) {
            m[k] = c.beta1 * m[k] + (1.0 - c.beta1) * g[k];
            v[k] = c.beta2 * v[k] + (1.0 - c.beta2) * g[k] * g[k];
            const double mhat = m[k] / bc1;
            const double vhat = v[k] / bc2;
            p[k] -= c.lr * mhat / (std::sqrt(vhat) + c.eps);
        }
    }
}

}  // namespace ishm
