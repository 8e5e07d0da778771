#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace ishm {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

// Dense row-major float64 tensor. Rank 0 (empty shape) holds one scalar.
class Tensor {
public:
    Tensor() : data_(1, 0.0) {}
    explicit Tensor(Shape shape, double fill = 0.0);
    Tensor(Shape shape, std::vector<double> values);

    static Tensor scalar(double v) { return Tensor(Shape{}, std::vector<double>{v}); }

    const Shape& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t size() const { return data_.size(); }
    std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
    // Product of all dims but the last; the last dim.
    std::size_t rows() const { return shape_.empty() ? 1 : size() / shape_.back(); }
    std::size_t cols() const { return shape_.empty() ? 1 : shape_.back(); }

    std::span<double> data() { return data_; }
    std::span<const double> data() const { return data_; }
    double* ptr() { return data_.data(); }
    const double* ptr() const { return data_.data(); }
    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }
    double item() const;

    double& at(std::size_t i, std::size_t j) { return data_[i * shape_.back() + j]; }
    double at(std::size_t i, std::size_t j) const { return data_[i * shape_.back() + j]; }

    Tensor reshaped(Shape shape) const;
    void fill(double v);
    bool all_finite() const;

    bool operator==(const Tensor&) const = default;

private:
    Shape shape_;
    std::vector<double> data_;
};

}  // namespace ishm
