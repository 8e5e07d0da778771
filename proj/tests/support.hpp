#pragma once

// Naive loop oracles and finite-difference checks shared by the unit tests
// and the acceptance runner.

#include "ishm/autograd.hpp"
#include "ishm/optim.hpp"
#include "ishm/rng.hpp"
#include "ishm/tensor.hpp"
#include "ishm/training.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

namespace ishm::testing {

inline Tensor random_tensor(Shape shape, SeededRng& rng, double scale = 1.0) {
    Tensor t(std::move(shape));
    for (double& x : t.data()) x = rng.next_gaussian(0.0, scale);
    return t;
}

inline double max_abs_diff(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) return INFINITY;
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

// --- oracles -----------------------------------------------------------------

inline Tensor naive_matmul(const Tensor& a, const Tensor& b) {
    const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
    Shape s = a.shape();
    s.back() = n;
    Tensor c(s);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            double acc = 0.0;
            for (std::size_t p = 0; p < k; ++p) acc += a[i * k + p] * b[p * n + j];
            c[i * n + j] = acc;
        }
    return c;
}

inline Tensor naive_bmm(const Tensor& a, const Tensor& b, bool transpose_b) {
    const std::size_t B = a.dim(0), M = a.dim(1), K = a.dim(2);
    const std::size_t N = transpose_b ? b.dim(1) : b.dim(2);
    Tensor c(Shape{B, M, N});
    for (std::size_t z = 0; z < B; ++z)
        for (std::size_t i = 0; i < M; ++i)
            for (std::size_t j = 0; j < N; ++j) {
                double acc = 0.0;
                for (std::size_t p = 0; p < K; ++p) {
                    const double bv = transpose_b ? b[(z * N + j) * K + p] : b[(z * K + p) * N + j];
                    acc += a[(z * M + i) * K + p] * bv;
                }
                c[(z * M + i) * N + j] = acc;
            }
    return c;
}

inline Tensor naive_softmax(const Tensor& x) {
    Tensor y(x.shape());
    for (std::size_t r = 0; r < x.rows(); ++r) {
        double mx = -INFINITY;
        for (std::size_t j = 0; j < x.cols(); ++j) mx = std::max(mx, x.at(r, j));
        double z = 0.0;
        for (std::size_t j = 0; j < x.cols(); ++j) z += std::exp(x.at(r, j) - mx);
        for (std::size_t j = 0; j < x.cols(); ++j) y.at(r, j) = std::exp(x.at(r, j) - mx) / z;
    }
    return y;
}

inline Tensor naive_layer_norm(const Tensor& x, const Tensor& g, const Tensor& b) {
    Tensor y(x.shape());
    const std::size_t d = x.cols();
    for (std::size_t r = 0; r < x.rows(); ++r) {
        double mean = 0.0;
        for (std::size_t j = 0; j < d; ++j) mean += x.at(r, j);
        mean /= static_cast<double>(d);
        double var = 0.0;
        for (std::size_t j = 0; j < d; ++j) var += (x.at(r, j) - mean) * (x.at(r, j) - mean);
        var /= static_cast<double>(d);
        for (std::size_t j = 0; j < d; ++j) y.at(r, j) = (x.at(r, j) - mean) / std::sqrt(var + kLayerNormEps) * g[j] + b[j];
    }
    return y;
}

inline Tensor naive_conv1d(const Tensor& x, const Tensor& w, const Tensor& bias, std::size_t stride) {
    const std::size_t B = x.dim(0), Ci = x.dim(1), T = x.dim(2), Co = w.dim(0), K = w.dim(2);
    const std::size_t To = (T - K) / stride + 1;
    Tensor y(Shape{B, Co, To});
    for (std::size_t n = 0; n < B; ++n)
        for (std::size_t o = 0; o < Co; ++o)
            for (std::size_t t = 0; t < To; ++t) {
                double acc = bias[o];
                for (std::size_t i = 0; i < Ci; ++i)
                    for (std::size_t k = 0; k < K; ++k) acc += w[(o * Ci + i) * K + k] * x[(n * Ci + i) * T + t * stride + k];
                y[(n * Co + o) * To + t] = acc;
            }
    return y;
}

// Scatter form: every input sample spreads over K outputs.
inline Tensor naive_conv_transpose1d(const Tensor& x, const Tensor& w, const Tensor& bias, std::size_t stride) {
    const std::size_t B = x.dim(0), Ci = x.dim(1), T = x.dim(2), Co = w.dim(1), K = w.dim(2);
    const std::size_t To = (T - 1) * stride + K;
    Tensor y(Shape{B, Co, To});
    for (std::size_t n = 0; n < B; ++n)
        for (std::size_t o = 0; o < Co; ++o)
            for (std::size_t t = 0; t < To; ++t) y[(n * Co + o) * To + t] = bias[o];
    for (std::size_t n = 0; n < B; ++n)
        for (std::size_t i = 0; i < Ci; ++i)
            for (std::size_t t = 0; t < T; ++t)
                for (std::size_t o = 0; o < Co; ++o)
                    for (std::size_t k = 0; k < K; ++k)
                        y[(n * Co + o) * To + t * stride + k] += x[(n * Ci + i) * T + t] * w[(i * Co + o) * K + k];
    return y;
}

inline Tensor naive_permute_0213(const Tensor& x) {
    const std::size_t A = x.dim(0), B = x.dim(1), C = x.dim(2), D = x.dim(3);
    Tensor y(Shape{A, C, B, D});
    for (std::size_t a = 0; a < A; ++a)
        for (std::size_t b = 0; b < B; ++b)
            for (std::size_t c = 0; c < C; ++c)
                for (std::size_t d = 0; d < D; ++d) y[((a * C + c) * B + b) * D + d] = x[((a * B + b) * C + c) * D + d];
    return y;
}

inline Tensor naive_transpose(const Tensor& x) {
    Tensor y(Shape{x.dim(1), x.dim(0)});
    for (std::size_t i = 0; i < x.dim(0); ++i)
        for (std::size_t j = 0; j < x.dim(1); ++j) y.at(j, i) = x.at(i, j);
    return y;
}

inline double naive_mse(const Tensor& a, const Tensor& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
    return s / static_cast<double>(a.size());
}

// --- finite differences --------------------------------------------------------

struct GradCheck {
    double max_rel_error = 0.0;
    std::string worst;  // "name[index]"
    std::size_t checked = 0;
};

// |a - f| / max(|a|, |f|, floor). The floor keeps rounding noise on
// vanishing gradients from reading as relative error.
inline double grad_rel_error(double analytic, double numeric, double floor = 1e-6) {
    return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

// Central differences with step h over every element of every parameter.
inline GradCheck check_gradients(ParameterSet& params, const BatchLoss& loss, const Tensor& batch, double h = 1e-5) {
    Tape tape;
    const std::vector<Var> p = params.bind(tape);
    tape.backward(loss(tape, p, batch));
    auto eval = [&] {
        Tape t(false);
        const std::vector<Var> q = params.bind(t, false);
        return loss(t, q, batch).value().item();
    };
    GradCheck out;
    for (std::size_t i = 0; i < params.size(); ++i) {
        const Tensor g = tape.grad(p[i]);
        Tensor& v = params.value(i);
        for (std::size_t k = 0; k < v.size(); ++k) {
            const double orig = v[k];
            v[k] = orig + h;
            const double fp = eval();
            v[k] = orig - h;
            const double fm = eval();
            v[k] = orig;
            const double rel = grad_rel_error(g[k], (fp - fm) / (2.0 * h));
            ++out.checked;
            if (rel > out.max_rel_error) {
                out.max_rel_error = rel;
                out.worst = params.name(i) + "[" + std::to_string(k) + "]";
            }
        }
    }
    return out;
}

// Gradient check of a single op through an MSE against a random target.
// `op` receives leaves for every input.
inline GradCheck check_op_gradients(std::vector<Tensor> inputs, const std::function<Var(std::vector<Var>&)>& op,
                                    SeededRng& rng, double h = 1e-5) {
    ParameterSet ps;
    for (std::size_t i = 0; i < inputs.size(); ++i) ps.add("in" + std::to_string(i), inputs[i]);
    Tensor target;
    {
        Tape t(false);
        std::vector<Var> v = ps.bind(t, false);
        target = random_tensor(op(v).value().shape(), rng);
    }
    const BatchLoss loss = [&](Tape& tape, const std::vector<Var>& p, const Tensor&) {
        std::vector<Var> v = p;
        return mse_loss(op(v), tape.constant(target));
    };
    return check_gradients(ps, loss, Tensor{}, h);
}

}  // namespace ishm::testing
