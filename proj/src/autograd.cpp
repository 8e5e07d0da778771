#include "ishm/autograd.hpp"

#include "ishm/error.hpp"

#include <algorithm>
#include <cmath>
#include <memory>

namespace ishm {

namespace {

// C[M,N] += A[M,K] * B[K,N]
void gemm_nn(std::size_t M, std::size_t K, std::size_t N, const double* A, const double* B, double* C) {
    for (std::size_t i = 0; i < M; ++i) {
        double* c = C + i * N;
        const double* a = A + i * K;
        for (std::size_t k = 0; k < K; ++k) {
            const double aik = a[k];
            const double* b = B + k * N;
            for (std::size_t j = 0; j < N; ++j) c[j] += aik * b[j];
        }
    }
}

// C[M,N] += A[M,K] * B[N,K]^T
void gemm_nt(std::size_t M, std::size_t K, std::size_t N, const double* A, const double* B, double* C) {
    for (std::size_t i = 0; i < M; ++i) {
        const double* a = A + i * K;
        double* c = C + i * N;
        for (std::size_t j = 0; j < N; ++j) {
            const double* b = B + j * K;
            double s = 0.0;
            for (std::size_t k = 0; k < K; ++k) s += a[k] * b[k];
            c[j] += s;
        }
    }
}

// C[K,N] += A[M,K]^T * G[M,N]
void gemm_tn(std::size_t M, std::size_t K, std::size_t N, const double* A, const double* G, double* C) {
    for (std::size_t i = 0; i < M; ++i) {
        const double* a = A + i * K;
        const double* g = G + i * N;
        for (std::size_t k = 0; k < K; ++k) {
            const double aik = a[k];
            double* c = C + k * N;
            for (std::size_t j = 0; j < N; ++j) c[j] += aik * g[j];
        }
    }
}

void require(bool ok, const std::string& what) {
    if (!ok) throw ShapeError(what);
}

void require_same(const Tensor& a, const Tensor& b, const char* op) {
    require(a.shape() == b.shape(),
            std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
}

bool needs(Tape& t, Var v) {
    return t.requires_grad(v.id);
}

}  // namespace

const Tensor& Var::value() const {
    return tape->value(*this);
}

Var Tape::leaf(Tensor value, bool requires_grad) {
    Node n;
    n.value = std::move(value);
    n.requires_grad = requires_grad && recording_;
    nodes_.push_back(std::move(n));
    return Var{this, nodes_.size() - 1};
}

Var Tape::record(Tensor value, std::span<const Var> inputs, BackwardFn backward) {
#ifndef NDEBUG
    if (!value.all_finite()) throw NumericError("non-finite value produced on tape (node " + std::to_string(nodes_.size()) + ")");
#endif
    Node n;
    n.value = std::move(value);
    if (recording_) {
        for (const Var& v : inputs) n.requires_grad = n.requires_grad || nodes_[v.id].requires_grad;
        if (n.requires_grad) n.backward = std::move(backward);
    }
    nodes_.push_back(std::move(n));
    return Var{this, nodes_.size() - 1};
}

Tensor& Tape::grad_accumulator(std::size_t id) {
    Node& n = nodes_[id];
    if (!n.has_grad) {
        n.grad = Tensor(n.value.shape(), 0.0);
        n.has_grad = true;
    }
    return n.grad;
}

Tensor Tape::grad(Var v) const {
    const Node& n = nodes_[v.id];
    return n.has_grad ? n.grad : Tensor(n.value.shape(), 0.0);
}

void Tape::backward(Var loss) {
    if (loss.tape != this) throw Error("backward: variable belongs to another tape");
    if (value(loss).size() != 1)
        throw ShapeError("backward: loss must be a scalar, got shape " + shape_str(value(loss).shape()));
    if (!recording_) throw Error("backward: tape was built without gradient recording");
    for (Node& n : nodes_) {
        n.has_grad = false;
        n.grad = Tensor();
    }
    grad_accumulator(loss.id).fill(1.0);
    for (std::size_t id = loss.id + 1; id-- > 0;) {
        Node& n = nodes_[id];
        if (!n.has_grad || !n.backward) continue;
        // A node's backward never writes its own accumulator.
        Tensor g = std::move(n.grad);
        n.backward(*this, g);
        nodes_[id].grad = std::move(g);
    }
}

Var matmul(Var a, Var b) {
    Tape& t = *a.tape;
    const Tensor& A = a.value();
    const Tensor& B = b.value();
    require(A.rank() >= 1 && B.rank() == 2 && A.cols() == B.dim(0),
            "matmul: cannot multiply " + shape_str(A.shape()) + " by " + shape_str(B.shape()));
    const std::size_t M = A.rows(), K = A.cols(), N = B.dim(1);
    Shape out_shape = A.shape();
    out_shape.back() = N;
    Tensor C(out_shape, 0.0);
    gemm_nn(M, K, N, A.ptr(), B.ptr(), C.ptr());
    const Var ins[] = {a, b};
    return t.record(std::move(C), ins, [a, b, M, K, N](Tape& tp, const Tensor& g) {
        if (needs(tp, a)) gemm_nt(M, N, K, g.ptr(), tp.value(b).ptr(), tp.grad_accumulator(a.id).ptr());
        if (needs(tp, b)) gemm_tn(M, K, N, tp.value(a).ptr(), g.ptr(), tp.grad_accumulator(b.id).ptr());
    });
}

Var bmm(Var a, Var b, bool transpose_b) {
    Tape& t = *a.tape;
    const Tensor& A = a.value();
    const Tensor& B = b.value();
    require(A.rank() == 3 && B.rank() == 3 && A.dim(0) == B.dim(0), "bmm: expected two rank-3 tensors with equal batch");
    const std::size_t batch = A.dim(0), M = A.dim(1), K = A.dim(2);
    const std::size_t N = transpose_b ? B.dim(1) : B.dim(2);
    require((transpose_b ? B.dim(2) : B.dim(1)) == K,
            "bmm: inner dims differ: " + shape_str(A.shape()) + " vs " + shape_str(B.shape()));
    Tensor C(Shape{batch, M, N}, 0.0);
    for (std::size_t i = 0; i < batch; ++i) {
        const double* ap = A.ptr() + i * M * K;
        const double* bp = B.ptr() + i * K * N;
        double* cp = C.ptr() + i * M * N;
        if (transpose_b) gemm_nt(M, K, N, ap, bp, cp);
        else gemm_nn(M, K, N, ap, bp, cp);
    }
    const Var ins[] = {a, b};
    return t.record(std::move(C), ins, [a, b, batch, M, K, N, transpose_b](Tape& tp, const Tensor& g) {
        const bool ga = needs(tp, a), gb = needs(tp, b);
        double* da = ga ? tp.grad_accumulator(a.id).ptr() : nullptr;
        double* db = gb ? tp.grad_accumulator(b.id).ptr() : nullptr;
        const double* ap = tp.value(a).ptr();
        const double* bp = tp.value(b).ptr();
        for (std::size_t i = 0; i < batch; ++i) {
            const double* gi = g.ptr() + i * M * N;
            const double* ai = ap + i * M * K;
            const double* bi = bp + i * K * N;
            if (transpose_b) {
                // C = A B^T: dA = G B, dB = G^T A
                if (ga) gemm_nn(M, N, K, gi, bi, da + i * M * K);
                if (gb) gemm_tn(M, N, K, gi, ai, db + i * K * N);
            } else {
                if (ga) gemm_nt(M, N, K, gi, bi, da + i * M * K);
                if (gb) gemm_tn(M, K, N, ai, gi, db + i * K * N);
            }
        }
    });
}

Var add(Var a, Var b) {
    require_same(a.value(), b.value(), "add");
    Tensor out = a.value();
    const Tensor& B = b.value();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += B[i];
    const Var ins[] = {a, b};
    return a.tape->record(std::move(out), ins, [a, b](Tape& tp, const Tensor& g) {
        for (Var v : {a, b}) {
            if (!needs(tp, v)) continue;
            Tensor& d = tp.grad_accumulator(v.id);
            for (std::size_t i = 0; i < d.size(); ++i) d[i] += g[i];
        }
    });
}

Var sub(Var a, Var b) {
    require_same(a.value(), b.value(), "sub");
    Tensor out = a.value();
    const Tensor& B = b.value();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] -= B[i];
    const Var ins[] = {a, b};
    return a.tape->record(std::move(out), ins, [a, b](Tape& tp, const Tensor& g) {
        if (needs(tp, a)) {
            Tensor& d = tp.grad_accumulator(a.id);
            for (std::size_t i = 0; i < d.size(); ++i) d[i] += g[i];
        }
        if (needs(tp, b)) {
            Tensor& d = tp.grad_accumulator(b.id);
            for (std::size_t i = 0; i < d.size(); ++i) d[i] -= g[i];
        }
    });
}

Var add_broadcast(Var x, Var b) {
    const Tensor& X = x.value();
    const Tensor& B = b.value();
    const Shape& xs = X.shape();
    const Shape& bs = B.shape();
    require(bs.size() <= xs.size() && std::equal(bs.begin(), bs.end(), xs.end() - static_cast<std::ptrdiff_t>(bs.size())),
            "add_broadcast: " + shape_str(bs) + " is not a suffix of " + shape_str(xs));
    const std::size_t inner = B.size();
    const std::size_t outer = X.size() / inner;
    Tensor out = X;
    for (std::size_t o = 0; o < outer; ++o) {
        double* row = out.ptr() + o * inner;
        for (std::size_t i = 0; i < inner; ++i) row[i] += B[i];
    }
    const Var ins[] = {x, b};
    return x.tape->record(std::move(out), ins, [x, b, outer, inner](Tape& tp, const Tensor& g) {
        if (needs(tp, x)) {
            Tensor& d = tp.grad_accumulator(x.id);
            for (std::size_t i = 0; i < d.size(); ++i) d[i] += g[i];
        }
        if (needs(tp, b)) {
            Tensor& d = tp.grad_accumulator(b.id);
            for (std::size_t o = 0; o < outer; ++o) {
                const double* row = g.ptr() + o * inner;
                for (std::size_t i = 0; i < inner; ++i) d[i] += row[i];
            }
        }
    });
}

Var mul(Var a, Var b) {
    require_same(a.value(), b.value(), "mul");
    Tensor out = a.value();
    const Tensor& B = b.value();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= B[i];
    const Var ins[] = {a, b};
    return a.tape->record(std::move(out), ins, [a, b](Tape& tp, const Tensor& g) {
        if (needs(tp, a)) {
            Tensor& d = tp.grad_accumulator(a.id);
            const Tensor& B = tp.value(b);
            for (std::size_t i = 0; i < d.size(); ++i) d[i] += g[i] * B[i];
        }
        if (needs(tp, b)) {
            Tensor& d = tp.grad_accumulator(b.id);
            const Tensor& A = tp.value(a);
            for (std::size_t i = 0; i < d.size(); ++i) d[i] += g[i] * A[i];
        }
    });
}

Var scale(Var x, double s) {
    Tensor out = x.value();
    for (double& v : out.data()) v *= s;
    const Var ins[] = {x};
    return x.tape->record(std::move(out), ins, [x, s](Tape& tp, const Tensor& g) {
        Tensor& d = tp.grad_accumulator(x.id);
        for (std::size_t i = 0; i < d.size(); ++i) d[i] += s * g[i];
    });
}

Var transpose(Var x) {
    const Tensor& X = x.value();
    require(X.rank() == 2, "transpose: expected a 2-D tensor, got " + shape_str(X.shape()));
    const std::size_t R = X.dim(0), C = X.dim(1);
    Tensor out(Shape{C, R});
    for (std::size_t i = 0; i < R; ++i)
        for (std::size_t j = 0; j < C; ++j) out[j * R + i] = X[i * C + j];
    const Var ins[] = {x};
    return x.tape->record(std::move(out), ins, [x, R, C](Tape& tp, const Tensor& g) {
        Tensor& d = tp.grad_accumulator(x.id);
        for (std::size_t i = 0; i < R; ++i)
            for (std::size_t j = 0; j < C; ++j) d[i * C + j] += g[j * R + i];
    });
}

Var concat(std::span<const Var> parts) {
    require(!parts.empty(), "concat: no inputs");
    const Shape& first = parts.front().shape();
    require(!first.empty(), "concat: scalar inputs");
    Shape out_shape = first;
    out_shape[0] = 0;
    for (const Var& p : parts) {
        const Shape& s = p.shape();
        require(s.size() == first.size() && std::equal(s.begin() + 1, s.end(), first.begin() + 1),
                "concat: trailing dims differ: " + shape_str(s) + " vs " + shape_str(first));
        out_shape[0] += s[0];
    }
    Tensor out(out_shape);
    std::vector<std::size_t> offsets;
    std::size_t offset = 0;
    for (const Var& p : parts) {
        const Tensor& v = p.value();
        std::copy(v.data().begin(), v.data().end(), out.ptr() + offset);
        offsets.push_back(offset);
        offset += v.size();
    }
    std::vector<Var> inputs(parts.begin(), parts.end());
    return parts.front().tape->record(std::move(out), parts, [inputs, offsets](Tape& tp, const Tensor& g) {
        for (std::size_t k = 0; k < inputs.size(); ++k) {
            if (!needs(tp, inputs[k])) continue;
            Tensor& d = tp.grad_accumulator(inputs[k].id);
            for (std::size_t i = 0; i < d.size(); ++i) d[i] += g[offsets[k] + i];
        }
    });
}

Var slice(Var x, std::size_t begin, std::size_t end) {
    const Tensor& X = x.value();
    require(X.rank() >= 1 && begin <= end && end <= X.dim(0),
            "slice: range [" + std::to_string(begin) + ", " + std::to_string(end) + ") invalid for " + shape_str(X.shape()));
    Shape s = X.shape();
    const std::size_t row = X.size() / s[0];
    s[0] = end - begin;
    std::vector<double> values(X.data().begin() + static_cast<std::ptrdiff_t>(begin * row),
                               X.data().begin() + static_cast<std::ptrdiff_t>(end * row));
    const Var ins[] = {x};
    return x.tape->record(Tensor(s, std::move(values)), ins, [x, begin, row](Tape& tp, const Tensor& g) {
        Tensor& d = tp.grad_accumulator(x.id);
        for (std::size_t i = 0; i < g.size(); ++i) d[begin * row + i] += g[i];
    });
}

Var reshape(Var x, Shape shape) {
    Tensor out = x.value().reshaped(std::move(shape));
    const Var ins[] = {x};
    return x.tape->record(std::move(out), ins, [x](Tape& tp, const Tensor& g) {
        Tensor& d = tp.grad_accumulator(x.id);
        for (std::size_t i = 0; i < d.size(); ++i) d[i] += g[i];
    });
}

Var permute_0213(Var x) {
    const Tensor& X = x.value();
    require(X.rank() == 4, "permute_0213: expected rank 4, got " + shape_str(X.shape()));
    const std::size_t A = X.dim(0), B = X.dim(1), C = X.dim(2), D = X.dim(3);
    Tensor out(Shape{A, C, B, D});
    for (std::size_t a = 0; a < A; ++a)
        for (std::size_t b = 0; b < B; ++b)
            for (std::size_t c = 0; c < C; ++c) {
                const double* src = X.ptr() + ((a * B + b) * C + c) * D;
                double* dst = out.ptr() + ((a * C + c) * B + b) * D;
                std::copy(src, src + D, dst);
            }
    const Var ins[] = {x};
    return x.tape->record(std::move(out), ins, [x, A, B, C, D](Tape& tp, const Tensor& g) {
        Tensor& d = tp.grad_accumulator(x.id);
        for (std::size_t a = 0; a < A; ++a)
            for (std::size_t b = 0; b < B; ++b)
                for (std::size_t c = 0; c < C; ++c) {
                    double* dst = d.ptr() + ((a * B + b) * C + c) * D;
                    const double* src = g.ptr() + ((a * C + c) * B + b) * D;
                    for (std::size_t k = 0; k < D; ++k) dst[k] += src[k];
                }
    });
}

Var softmax_rows(Var x) {
    const Tensor& X = x.value();
    require(X.rank() >= 1, "softmax_rows: scalar input");
    const std::size_t R = X.rows(), C = X.cols();
    Tensor out(X.shape());
    for (std::size_t r = 0; r < R; ++r) {
        const double* in = X.ptr() + r * C;
        double* o = out.ptr() + r * C;
        const double mx = *std::max_element(in, in + C);
        double sum = 0.0;
        for (std::size_t j = 0; j < C; ++j) {
            o[j] = std::exp(in[j] - mx);
            sum += o[j];
        }
        const double inv = 1.0 / sum;
        for (std::size_t j = 0; j < C; ++j) o[j] *= inv;
    }
    const Var ins[] = {x};
    // record() appends exactly one node, so the output's id is known here.
    const std::size_t yid = x.tape->size();
    return x.tape->record(std::move(out), ins, [x, yid, R, C](Tape& tp, const Tensor& g) {
        const Tensor& Y = tp.value(yid);
        Tensor& d = tp.grad_accumulator(x.id);
        for (std::size_t r = 0; r < R; ++r) {
            const double* yr = Y.ptr() + r * C;
            const double* gr = g.ptr() + r * C;
            double dot = 0.0;
            for (std::size_t j = 0; j < C; ++j) dot += yr[j] * gr[j];
            double* dr = d.ptr() + r * C;
            for (std::size_t j = 0; j < C; ++j) dr[j] += yr[j] * (gr[j] - dot);
        }
    });
}

Var layer_norm(Var x, Var gain, Var bias) {
    const Tensor& X = x.value();
    const std::size_t R = X.rows(), D = X.cols();
    require(gain.value().size() == D && bias.value().size() == D,
            "layer_norm: gain/bias must have " + std::to_string(D) + " elements");
    Tensor out(X.shape());
    // Normalized input and inverse std are needed for the adjoint.
    auto xhat = std::make_shared<std::vector<double>>(X.size());
    auto inv_std = std::make_shared<std::vector<double>>(R);
    const Tensor& G = gain.value();
    const Tensor& Bt = bias.value();
    for (std::size_t r = 0; r < R; ++r) {
        const double* in = X.ptr() + r * D;
        double mean = 0.0;
        for (std::size_t j = 0; j < D; ++j) mean += in[j];
        mean /= static_cast<double>(D);
        double var = 0.0;
        for (std::size_t j = 0; j < D; ++j) var += (in[j] - mean) * (in[j] - mean);
        var /= static_cast<double>(D);
        const double is = 1.0 / std::sqrt(var + kLayerNormEps);
        (*inv_std)[r] = is;
        for (std::size_t j = 0; j < D; ++j) {
            const double h = (in[j] - mean) * is;
            (*xhat)[r * D + j] = h;
            out[r * D + j] = h * G[j] + Bt[j];
        }
    }
    const Var ins[] = {x, gain, bias};
    return x.tape->record(std::move(out), ins, [x, gain, bias, xhat, inv_std, R, D](Tape& tp, const Tensor& g) {
        const Tensor& G = tp.value(gain);
        if (needs(tp, gain)) {
            Tensor& dg = tp.grad_accumulator(gain.id);
            for (std::size_t r = 0; r < R; ++r)
                for (std::size_t j = 0; j < D; ++j) dg[j] += g[r * D + j] * (*xhat)[r * D + j];
        }
        if (needs(tp, bias)) {
            Tensor& db = tp.grad_accumulator(bias.id);
            for (std::size_t r = 0; r < R; ++r)
                for (std::size_t j = 0; j < D; ++j) db[j] += g[r * D + j];
        }
        if (needs(tp, x)) {
            Tensor& dx = tp.grad_accumulator(x.id);
            std::vector<double> dh(D);
            for (std::size_t r = 0; r < R; ++r) {
                double mean_dh = 0.0, mean_dh_h = 0.0;
                for (std::size_t j = 0; j < D; ++j) {
                    dh[j] = g[r * D + j] * G[j];
                    mean_dh += dh[j];
                    mean_dh_h += dh[j] * (*xhat)[r * D + j];
                }
                mean_dh /= static_cast<double>(D);
                mean_dh_h /= static_cast<double>(D);
                for (std::size_t j = 0; j < D; ++j)
                    dx[r * D + j] += (*inv_std)[r] * (dh[j] - mean_dh - (*xhat)[r * D + j] * mean_dh_h);
            }
        }
    });
}

Var relu(Var x) {
    Tensor out = x.value();
    for (double& v : out.data()) v = v > 0.0 ? v : 0.0;
    const Var ins[] = {x};
    return x.tape->record(std::move(out), ins, [x](Tape& tp, const Tensor& g) {
        const Tensor& X = tp.value(x);
        Tensor& d = tp.grad_accumulator(x.id);
        for (std::size_t i = 0; i < d.size(); ++i)
            if (X[i] > 0.0) d[i] += g[i];
    });
}

Var mul_rows(Var x, Var w) {
    const Tensor& X = x.value();
    const Tensor& W = w.value();
    const std::size_t R = X.rows(), D = X.cols();
    require(W.size() == R, "mul_rows: weight count " + std::to_string(W.size()) + " != rows " + std::to_string(R));
    Tensor out = X;
    for (std::size_t r = 0; r < R; ++r)
        for (std::size_t j = 0; j < D; ++j) out[r * D + j] *= W[r];
    const Var ins[] = {x, w};
    return x.tape->record(std::move(out), ins, [x, w, R, D](Tape& tp, const Tensor& g) {
        const Tensor& X = tp.value(x);
        const Tensor& W = tp.value(w);
        if (needs(tp, x)) {
            Tensor& d = tp.grad_accumulator(x.id);
            for (std::size_t r = 0; r < R; ++r)
                for (std::size_t j = 0; j < D; ++j) d[r * D + j] += g[r * D + j] * W[r];
        }
        if (needs(tp, w)) {
            Tensor& d = tp.grad_accumulator(w.id);
            for (std::size_t r = 0; r < R; ++r) {
                double s = 0.0;
                for (std::size_t j = 0; j < D; ++j) s += g[r * D + j] * X[r * D + j];
                d[r] += s;
            }
        }
    });
}

Var conv1d(Var x, Var w, Var bias, std::size_t stride) {
    const Tensor& X = x.value();
    const Tensor& W = w.value();
    require(stride >= 1, "conv1d: stride must be >= 1");
    require(X.rank() == 3 && W.rank() == 3 && X.dim(1) == W.dim(1),
            "conv1d: input " + shape_str(X.shape()) + " incompatible with kernels " + shape_str(W.shape()));
    const std::size_t B = X.dim(0), Cin = X.dim(1), T = X.dim(2), Cout = W.dim(0), K = W.dim(2);
    require(bias.value().size() == Cout, "conv1d: bias must have Cout elements");
    require(T >= K, "conv1d: input shorter than kernel");
    const std::size_t To = conv1d_output_length(T, K, stride);
    Tensor out(Shape{B, Cout, To});
    const Tensor& Bi = bias.value();
    for (std::size_t b = 0; b < B; ++b)
        for (std::size_t o = 0; o < Cout; ++o) {
            double* y = out.ptr() + (b * Cout + o) * To;
            for (std::size_t t = 0; t < To; ++t) y[t] = Bi[o];
            for (std::size_t c = 0; c < Cin; ++c) {
                const double* xr = X.ptr() + (b * Cin + c) * T;
                const double* wr = W.ptr() + (o * Cin + c) * K;
                for (std::size_t t = 0; t < To; ++t) {
                    const double* xs = xr + t * stride;
                    double s = 0.0;
                    for (std::size_t k = 0; k < K; ++k) s += wr[k] * xs[k];
                    y[t] += s;
                }
            }
        }
    const Var ins[] = {x, w, bias};
    return x.tape->record(std::move(out), ins, [x, w, bias, B, Cin, T, Cout, K, To, stride](Tape& tp, const Tensor& g) {
        const Tensor& X = tp.value(x);
        const Tensor& W = tp.value(w);
        double* dx = needs(tp, x) ? tp.grad_accumulator(x.id).ptr() : nullptr;
        double* dw = needs(tp, w) ? tp.grad_accumulator(w.id).ptr() : nullptr;
        double* db = needs(tp, bias) ? tp.grad_accumulator(bias.id).ptr() : nullptr;
        for (std::size_t b = 0; b < B; ++b)
            for (std::size_t o = 0; o < Cout; ++o) {
                const double* gy = g.ptr() + (b * Cout + o) * To;
                if (db)
                    for (std::size_t t = 0; t < To; ++t) db[o] += gy[t];
                for (std::size_t c = 0; c < Cin; ++c) {
                    const double* xr = X.ptr() + (b * Cin + c) * T;
                    const double* wr = W.ptr() + (o * Cin + c) * K;
                    for (std::size_t t = 0; t < To; ++t) {
                        const double gt = gy[t];
                        const std::size_t base = t * stride;
                        if (dw)
                            for (std::size_t k = 0; k < K; ++k) dw[(o * Cin + c) * K + k] += gt * xr[base + k];
                        if (dx)
                            for (std::size_t k = 0; k < K; ++k) dx[(b * Cin + c) * T + base + k] += gt * wr[k];
                    }
                }
            }
    });
}

Var conv_transpose1d(Var x, Var w, Var bias, std::size_t stride) {
    const Tensor& X = x.value();
    const Tensor& W = w.value();
    require(stride >= 1, "conv_transpose1d: stride must be >= 1");
    require(X.rank() == 3 && W.rank() == 3 && X.dim(1) == W.dim(0),
            "conv_transpose1d: input " + shape_str(X.shape()) + " incompatible with kernels " + shape_str(W.shape()));
    const std::size_t B = X.dim(0), Cin = X.dim(1), T = X.dim(2), Cout = W.dim(1), K = W.dim(2);
    require(bias.value().size() == Cout, "conv_transpose1d: bias must have Cout elements");
    const std::size_t To = conv_transpose1d_output_length(T, K, stride);
    Tensor out(Shape{B, Cout, To});
    const Tensor& Bi = bias.value();
    for (std::size_t b = 0; b < B; ++b) {
        for (std::size_t o = 0; o < Cout; ++o) {
            double* y = out.ptr() + (b * Cout + o) * To;
            for (std::size_t t = 0; t < To; ++t) y[t] = Bi[o];
            for (std::size_t c = 0; c < Cin; ++c) {
                const double* xr = X.ptr() + (b * Cin + c) * T;
                const double* wr = W.ptr() + (c * Cout + o) * K;
                for (std::size_t t = 0; t < T; ++t) {
                    const double xv = xr[t];
                    double* ys = y + t * stride;
                    for (std::size_t k = 0; k < K; ++k) ys[k] += xv * wr[k];
                }
            }
        }
    }
    const Var ins[] = {x, w, bias};
    return x.tape->record(std::move(out), ins, [x, w, bias, B, Cin, T, Cout, K, To, stride](Tape& tp, const Tensor& g) {
        const Tensor& X = tp.value(x);
        const Tensor& W = tp.value(w);
        double* dx = needs(tp, x) ? tp.grad_accumulator(x.id).ptr() : nullptr;
        double* dw = needs(tp, w) ? tp.grad_accumulator(w.id).ptr() : nullptr;
        double* db = needs(tp, bias) ? tp.grad_accumulator(bias.id).ptr() : nullptr;
        for (std::size_t b = 0; b < B; ++b)
            for (std::size_t o = 0; o < Cout; ++o) {
                const double* gy = g.ptr() + (b * Cout + o) * To;
                if (db)
                    for (std::size_t t = 0; t < To; ++t) db[o] += gy[t];
                for (std::size_t c = 0; c < Cin; ++c) {
                    const double* xr = X.ptr() + (b * Cin + c) * T;
                    const double* wr = W.ptr() + (c * Cout + o) * K;
                    for (std::size_t t = 0; t < T; ++t) {
                        const double* gs = gy + t * stride;
                        double sx = 0.0;
                        for (std::size_t k = 0; k < K; ++k) sx += gs[k] * wr[k];
                        if (dx) dx[(b * Cin + c) * T + t] += sx;
                        if (dw) {
                            const double xv = xr[t];
                            for (std::size_t k = 0; k < K; ++k) dw[(c * Cout + o) * K + k] += xv * gs[k];
                        }
                    }
                }
            }
    });
}

Var mse_loss(Var pred, Var target) {
    require_same(pred.value(), target.value(), "mse_loss");
    const Tensor& P = pred.value();
    const Tensor& T = target.value();
    double s = 0.0;
    for (std::size_t i = 0; i < P.size(); ++i) s += (P[i] - T[i]) * (P[i] - T[i]);
    const double n = static_cast<double>(P.size());
    const Var ins[] = {pred, target};
    return pred.tape->record(Tensor::scalar(s / n), ins, [pred, target, n](Tape& tp, const Tensor& g) {
        const Tensor& P = tp.value(pred);
        const Tensor& T = tp.value(target);
        const double k = 2.0 * g[0] / n;
        if (needs(tp, pred)) {
            Tensor& d = tp.grad_accumulator(pred.id);
            for (std::size_t i = 0; i < d.size(); ++i) d[i] += k * (P[i] - T[i]);
        }
        if (needs(tp, target)) {
            Tensor& d = tp.grad_accumulator(target.id);
            for (std::size_t i = 0; i < d.size(); ++i) d[i] -= k * (P[i] - T[i]);
        }
    });
}

}  // namespace ishm
