#pragma once

#include "ishm/tensor.hpp"

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

namespace ishm {

class Tape;

// Handle to a tape node.
struct Var {
    Tape* tape = nullptr;
    std::size_t id = 0;

    const Tensor& value() const;
    const Shape& shape() const { return value().shape(); }
};

// Dynamic reverse-mode tape. Nodes are appended in evaluation order, so the
// node list is already topologically sorted; backward walks it once in
// reverse. A tape built with record_gradients = false keeps values only and
// is what inference uses.
class Tape {
public:
    // Receives the gradient flowing into the node's output.
    using BackwardFn = std::function<void(Tape&, const Tensor&)>;

    explicit Tape(bool record_gradients = true) : recording_(record_gradients) {}

    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    Var leaf(Tensor value, bool requires_grad = true);
    Var constant(Tensor value) { return leaf(std::move(value), false); }

    const Tensor& value(Var v) const { return nodes_[v.id].value; }
    const Tensor& value(std::size_t id) const { return nodes_[id].value; }
    // Zero tensor when no gradient reached the node.
    Tensor grad(Var v) const;

    bool recording() const { return recording_; }
    bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
    std::size_t size() const { return nodes_.size(); }

    // Throws ShapeError unless `loss` holds exactly one element.
    void backward(Var loss);

    // For op implementations.
    Var record(Tensor value, std::span<const Var> inputs, BackwardFn backward);
    // Gradient accumulator of a node, allocated on first use.
    Tensor& grad_accumulator(std::size_t id);

private:
    struct Node {
        Tensor value;
        Tensor grad;
        bool has_grad = false;
        bool requires_grad = false;
        BackwardFn backward;
    };
    std::vector<Node> nodes_;
    bool recording_;
};

// --- primitive ops -----------------------------------------------------------
// Shapes use the row-major convention: "rows" are all leading dims flattened.

// a [..., K] x b [K, N] -> [..., N]
Var matmul(Var a, Var b);
// Batched: a [B, M, K] x b [B, K, N] -> [B, M, N]; with transpose_b, b is
// [B, N, K] and the product is a * b^T.
Var bmm(Var a, Var b, bool transpose_b = false);
Var add(Var a, Var b);
Var sub(Var a, Var b);
// x + b where b's shape is a suffix of x's shape (bias rows, position tables).
Var add_broadcast(Var x, Var b);
Var mul(Var a, Var b);
Var scale(Var x, double s);
// 2-D transpose.
Var transpose(Var x);
// Concatenate along axis 0; trailing dims must agree.
Var concat(std::span<const Var> parts);
// Rows [begin, end) along axis 0.
Var slice(Var x, std::size_t begin, std::size_t end);
Var reshape(Var x, Shape shape);
// [A, B, C, D] -> [A, C, B, D]
Var permute_0213(Var x);
// Softmax over the last dim, max-subtracted.
Var softmax_rows(Var x);
// Normalizes over the last dim: (x - mean) / sqrt(var + eps) * gain + bias.
inline constexpr double kLayerNormEps = 1e-10;
Var layer_norm(Var x, Var gain, Var bias);
Var relu(Var x);
// Multiplies row r of x [..., D] by w[r]; w has rows(x) elements.
Var mul_rows(Var x, Var w);
// Valid cross-correlation: x [B, Cin, T], w [Cout, Cin, K], bias [Cout].
Var conv1d(Var x, Var w, Var bias, std::size_t stride);
// Transposed convolution: x [B, Cin, T], w [Cin, Cout, K], bias [Cout]
// -> [B, Cout, (T - 1) * stride + K].
Var conv_transpose1d(Var x, Var w, Var bias, std::size_t stride);
// Mean of squared differences, rank-0 result.
Var mse_loss(Var pred, Var target);

inline std::size_t conv1d_output_length(std::size_t length, std::size_t kernel, std::size_t stride) {
    return length < kernel ? 0 : (length - kernel) / stride + 1;
}
inline std::size_t conv_transpose1d_output_length(std::size_t length, std::size_t kernel, std::size_t stride) {
    return (length - 1) * stride + kernel;
}

}  // namespace ishm
