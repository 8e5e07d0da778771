#pragma once

#include "ishm/autograd.hpp"
#include "ishm/tensor.hpp"

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace ishm {

// Named, ordered parameter table. Insertion order is the serialization order.
class ParameterSet {
public:
    std::size_t add(std::string name, Tensor value);

    std::size_t size() const { return values_.size(); }
    const std::string& name(std::size_t i) const { return names_.at(i); }
    Tensor& value(std::size_t i) { return values_.at(i); }
    const Tensor& value(std::size_t i) const { return values_.at(i); }
    // Throws InvalidParameter for an unknown name.
    std::size_t index(const std::string& name) const;
    Tensor& operator[](const std::string& name) { return values_[index(name)]; }
    const Tensor& operator[](const std::string& name) const { return values_[index(name)]; }

    // Places every parameter on `tape` as a leaf; result is indexed like the set.
    std::vector<Var> bind(Tape& tape, bool requires_grad = true) const;
    std::size_t numel() const;

    bool operator==(const ParameterSet&) const = default;

private:
    std::vector<std::string> names_;
    std::vector<Tensor> values_;
    std::map<std::string, std::size_t> by_name_;
};

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;

    void validate() const;
};

struct AdamState {
    AdamConfig cfg;
    std::vector<Tensor> m;
    std::vector<Tensor> v;
    std::uint64_t step = 0;

    AdamState() = default;
    AdamState(const ParameterSet& params, AdamConfig config);
};

// One bias-corrected Adam update. grads[i] must match params.value(i) in shape.
void adam_step(ParameterSet& params, const std::vector<Tensor>& grads, AdamState& state);

}  // namespace ishm
