#pragma once

// Differentiable primitives. Every function returns a new node whose
// backward rule accumulates into its parents' gradients.

#include <qaf/diffcore/node.hpp>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>
#include <vector>

namespace qaf {

/// Clamp margin used by acos so its derivative stays finite at |x| = 1.
inline constexpr double kAcosEps = 1e-7;

namespace detail {

[[noreturn]] inline void shape_fail(const char* op, const Array& a, const Array& b)
{
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
}

[[noreturn]] inline void shape_fail(const char* op, const Array& a, const std::string& expect)
{
    throw ShapeError(std::string(op) + ": got shape " + shape_str(a.shape()) + ", expected " + expect);
}

inline void require_same(const char* op, const Var& a, const Var& b)
{
    if (a->shape() != b->shape()) shape_fail(op, a->value, b->value);
}

inline void require_rank(const char* op, const Var& a, std::size_t rank)
{
    if (a->value.rank() != rank) shape_fail(op, a->value, "rank " + std::to_string(rank));
}

/// Elementwise unary op: forward f(x), derivative df(x, y).
template <typename F, typename DF>
Var unary(const char* op, const Var& a, F f, DF df)
{
    Array out(a->shape());
    const auto& x = a->value;
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = f(x[i]);
    return make_op(op, std::move(out), {a}, [df](Node& self) {
        Node& p = *self.parents[0];
        if (!p.requires_grad) return;
        auto& g = p.ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * df(p.value[i], self.value[i]);
    });
}

} // namespace detail

// ---------------------------------------------------------------------------
// Linear algebra

/// a (m x k) times b (k x n) -> (m x n), or a (m x k) times vector b (k) -> (m).
inline Var matmul(const Var& a, const Var& b)
{
    detail::require_rank("matmul", a, 2);
    const auto m = a->value.rows(), k = a->value.cols();
    const bool vec = b->value.rank() == 1;
    if (!vec && b->value.rank() != 2) detail::shape_fail("matmul", a->value, b->value);
    if (b->value.shape()[0] != k) detail::shape_fail("matmul", a->value, b->value);
    const auto n = vec ? 1 : b->value.cols();
    Array out(vec ? Shape{m} : Shape{m, n});
    const double* A = a->value.data();
    const double* B = b->value.data();
    double* C = out.data();
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
            const double aip = A[i * k + p];
            if (aip == 0.0) continue;
            for (std::size_t j = 0; j < n; ++j) C[i * n + j] += aip * B[p * n + j];
        }
    return make_op("matmul", std::move(out), {a, b}, [m, k, n](Node& self) {
        Node& pa = *self.parents[0];
        Node& pb = *self.parents[1];
        const double* G = self.grad.data();
        if (pa.requires_grad) {
            double* GA = pa.ensure_grad().data();
            const double* B = pb.value.data();
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t p = 0; p < k; ++p) {
                    double s = 0.0;
                    for (std::size_t j = 0; j < n; ++j) s += G[i * n + j] * B[p * n + j];
                    GA[i * k + p] += s;
                }
        }
        if (pb.requires_grad) {
            double* GB = pb.ensure_grad().data();
            const double* A = pa.value.data();
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t p = 0; p < k; ++p) {
                    const double aip = A[i * k + p];
                    for (std::size_t j = 0; j < n; ++j) GB[p * n + j] += aip * G[i * n + j];
                }
        }
    });
}

/// a (m x k) times b^T where b is (n x k) -> (m x n). Used for dense layers
/// whose weights store one row per output neuron.
inline Var matmul_nt(const Var& a, const Var& b)
{
    detail::require_rank("matmul_nt", a, 2);
    detail::require_rank("matmul_nt", b, 2);
    const auto m = a->value.rows(), k = a->value.cols(), n = b->value.rows();
    if (b->value.cols() != k) detail::shape_fail("matmul_nt", a->value, b->value);
    Array out(Shape{m, n});
    const double* A = a->value.data();
    const double* B = b->value.data();
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            double s = 0.0;
            for (std::size_t p = 0; p < k; ++p) s += A[i * k + p] * B[j * k + p];
            out[i * n + j] = s;
        }
    return make_op("matmul_nt", std::move(out), {a, b}, [m, k, n](Node& self) {
        Node& pa = *self.parents[0];
        Node& pb = *self.parents[1];
        const double* G = self.grad.data();
        if (pa.requires_grad) {
            double* GA = pa.ensure_grad().data();
            const double* B = pb.value.data();
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t j = 0; j < n; ++j) {
                    const double g = G[i * n + j];
                    if (g == 0.0) continue;
                    for (std::size_t p = 0; p < k; ++p) GA[i * k + p] += g * B[j * k + p];
                }
        }
        if (pb.requires_grad) {
            double* GB = pb.ensure_grad().data();
            const double* A = pa.value.data();
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t j = 0; j < n; ++j) {
                    const double g = G[i * n + j];
                    if (g == 0.0) continue;
                    for (std::size_t p = 0; p < k; ++p) GB[j * k + p] += g * A[i * k + p];
                }
        }
    });
}

inline Var transpose(const Var& a)
{
    detail::require_rank("transpose", a, 2);
    const auto r = a->value.rows(), c = a->value.cols();
    Array out(Shape{c, r});
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) out[j * r + i] = a->value[i * c + j];
    return make_op("transpose", std::move(out), {a}, [r, c](Node& self) {
        Node& p = *self.parents[0];
        auto& g = p.ensure_grad();
        for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < c; ++j) g[i * c + j] += self.grad[j * r + i];
    });
}

inline Var reshape(const Var& a, Shape shape)
{
    if (shape_size(shape) != a->value.size()) detail::shape_fail("reshape", a->value, shape_str(shape));
    Array out(std::move(shape), a->value.storage());
    return make_op("reshape", std::move(out), {a}, [](Node& self) {
        auto& g = self.parents[0]->ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    });
}

// ---------------------------------------------------------------------------
// Elementwise binary

inline Var add(const Var& a, const Var& b)
{
    detail::require_same("add", a, b);
    Array out(a->shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a->value[i] + b->value[i];
    return make_op("add", std::move(out), {a, b}, [](Node& self) {
        for (auto& pp : self.parents) {
            if (!pp->requires_grad) continue;
            auto& g = pp->ensure_grad();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
        }
    });
}

inline Var sub(const Var& a, const Var& b)
{
    detail::require_same("sub", a, b);
    Array out(a->shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a->value[i] - b->value[i];
    return make_op("sub", std::move(out), {a, b}, [](Node& self) {
        Node& pa = *self.parents[0];
        Node& pb = *self.parents[1];
        if (pa.requires_grad) {
            auto& g = pa.ensure_grad();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
        }
        if (pb.requires_grad) {
            auto& g = pb.ensure_grad();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] -= self.grad[i];
        }
    });
}

inline Var mul(const Var& a, const Var& b)
{
    detail::require_same("mul", a, b);
    Array out(a->shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a->value[i] * b->value[i];
    return make_op("mul", std::move(out), {a, b}, [](Node& self) {
        Node& pa = *self.parents[0];
        Node& pb = *self.parents[1];
        if (pa.requires_grad) {
            auto& g = pa.ensure_grad();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * pb.value[i];
        }
        if (pb.requires_grad) {
            auto& g = pb.ensure_grad();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * pa.value[i];
        }
    });
}

inline Var div(const Var& a, const Var& b)
{
    detail::require_same("div", a, b);
    Array out(a->shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a->value[i] / b->value[i];
    return make_op("div", std::move(out), {a, b}, [](Node& self) {
        Node& pa = *self.parents[0];
        Node& pb = *self.parents[1];
        if (pa.requires_grad) {
            auto& g = pa.ensure_grad();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] / pb.value[i];
        }
        if (pb.requires_grad) {
            auto& g = pb.ensure_grad();
            for (std::size_t i = 0; i < g.size(); ++i)
                g[i] -= self.grad[i] * self.value[i] / pb.value[i];
        }
    });
}

/// Adds vector b (n) to every row of a (m x n). A vector a is treated as one row.
inline Var add_bias(const Var& a, const Var& b)
{
    detail::require_rank("add_bias", b, 1);
    const auto n = b->value.size();
    if (a->value.cols() != n || a->value.rank() == 0) detail::shape_fail("add_bias", a->value, b->value);
    const auto m = a->value.size() / n;
    Array out = a->value;
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) out[i * n + j] += b->value[j];
    return make_op("add_bias", std::move(out), {a, b}, [m, n](Node& self) {
        Node& pa = *self.parents[0];
        Node& pb = *self.parents[1];
        if (pa.requires_grad) {
            auto& g = pa.ensure_grad();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
        }
        if (pb.requires_grad) {
            auto& g = pb.ensure_grad();
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t j = 0; j < n; ++j) g[j] += self.grad[i * n + j];
        }
    });
}

// ---------------------------------------------------------------------------
// Scalar multiples

inline Var scale(const Var& a, double s)
{
    return detail::unary("scale", a, [s](double x) { return s * x; }, [s](double, double) { return s; });
}

inline Var add_scalar(const Var& a, double s)
{
    return detail::unary("add_scalar", a, [s](double x) { return x + s; }, [](double, double) { return 1.0; });
}

inline Var neg(const Var& a) { return scale(a, -1.0); }

/// Multiplies every element of a by the scalar node s.
inline Var scale_by(const Var& a, const Var& s)
{
    if (!s->value.is_scalar()) detail::shape_fail("scale_by", s->value, "scalar");
    const double sv = s->value[0];
    Array out(a->shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a->value[i] * sv;
    return make_op("scale_by", std::move(out), {a, s}, [](Node& self) {
        Node& pa = *self.parents[0];
        Node& ps = *self.parents[1];
        if (pa.requires_grad) {
            auto& g = pa.ensure_grad();
            const double sv = ps.value[0];
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * sv;
        }
        if (ps.requires_grad) {
            double acc = 0.0;
            for (std::size_t i = 0; i < self.grad.size(); ++i) acc += self.grad[i] * pa.value[i];
            ps.ensure_grad()[0] += acc;
        }
    });
}

// ---------------------------------------------------------------------------
// Elementwise unary

inline Var relu(const Var& a)
{
    return detail::unary(
        "relu", a, [](double x) { return x > 0.0 ? x : 0.0; }, [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

inline Var sigmoid(const Var& a)
{
    return detail::unary(
        "sigmoid", a,
        [](double x) { return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x)); },
        [](double, double y) { return y * (1.0 - y); });
}

inline Var exp(const Var& a)
{
    return detail::unary("exp", a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

inline Var log(const Var& a)
{
    for (double v : a->value.values())
        if (!(v > 0.0)) throw NonFiniteError("log: non-positive input " + std::to_string(v));
    return detail::unary("log", a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

inline Var cos(const Var& a)
{
    return detail::unary("cos", a, [](double x) { return std::cos(x); }, [](double x, double) { return -std::sin(x); });
}

/// arccos with the input clamped to [-1 + eps, 1 - eps]. Outside the clamp
/// window the derivative is zero.
inline Var acos(const Var& a)
{
    constexpr double lo = -1.0 + kAcosEps, hi = 1.0 - kAcosEps;
    return detail::unary(
        "acos", a, [lo, hi](double x) { return std::acos(std::clamp(x, lo, hi)); },
        [lo, hi](double x, double) { return (x < lo || x > hi) ? 0.0 : -1.0 / std::sqrt(1.0 - x * x); });
}

inline Var square(const Var& a)
{
    return detail::unary("square", a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

inline Var sqrt(const Var& a)
{
    for (double v : a->value.values())
        if (v < 0.0) throw NonFiniteError("sqrt: negative input " + std::to_string(v));
    return detail::unary(
        "sqrt", a, [](double x) { return std::sqrt(x); }, [](double, double y) { return y > 0.0 ? 0.5 / y : 0.0; });
}

inline Var reciprocal(const Var& a)
{
    return detail::unary(
        "reciprocal", a, [](double x) { return 1.0 / x; }, [](double, double y) { return -y * y; });
}

/// max(x, lo) elementwise; floored entries receive zero gradient.
inline Var floor_at(const Var& a, double lo)
{
    return detail::unary(
        "floor_at", a, [lo](double x) { return x < lo ? lo : x; }, [lo](double x, double) { return x < lo ? 0.0 : 1.0; });
}

inline Var clamp(const Var& a, double lo, double hi)
{
    return detail::unary(
        "clamp", a, [lo, hi](double x) { return std::clamp(x, lo, hi); },
        [lo, hi](double x, double) { return (x < lo || x > hi) ? 0.0 : 1.0; });
}

// ---------------------------------------------------------------------------
// Reductions and vector ops

inline Var sum(const Var& a)
{
    double s = 0.0;
    for (double v : a->value.values()) s += v;
    return make_op("sum", Array::scalar(s), {a}, [](Node& self) {
        auto& g = self.parents[0]->ensure_grad();
        const double gs = self.grad[0];
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += gs;
    });
}

inline Var mean(const Var& a) { return scale(sum(a), 1.0 / static_cast<double>(a->value.size())); }

inline Var dot(const Var& a, const Var& b) { return sum(mul(a, b)); }

/// L2 norm over all elements. At the origin the subgradient 0 is used.
inline Var norm(const Var& a)
{
    double s = 0.0;
    for (double v : a->value.values()) s += v * v;
    return make_op("norm", Array::scalar(std::sqrt(s)), {a}, [](Node& self) {
        const double n = self.value[0];
        if (n == 0.0) return;
        Node& p = *self.parents[0];
        auto& g = p.ensure_grad();
        const double gs = self.grad[0] / n;
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += gs * p.value[i];
    });
}

namespace detail {

/// Backward of y = x / ||x|| for one row: dx = (dy - y <dy, y>) / ||x||.
inline void normalize_row_backward(std::span<const double> y, std::span<const double> dy, double n,
                                   std::span<double> dx)
{
    double proj = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) proj += dy[i] * y[i];
    for (std::size_t i = 0; i < y.size(); ++i) dx[i] += (dy[i] - y[i] * proj) / n;
}

} // namespace detail

/// x / ||x|| for a vector; zero vectors are an error.
inline Var normalize(const Var& a)
{
    detail::require_rank("normalize", a, 1);
    double s = 0.0;
    for (double v : a->value.values()) s += v * v;
    const double n = std::sqrt(s);
    if (n == 0.0) throw NonFiniteError("normalize: zero-norm input");
    Array out(a->shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a->value[i] / n;
    return make_op("normalize", std::move(out), {a}, [n](Node& self) {
        detail::normalize_row_backward(self.value.values(), self.grad.values(), n,
                                       self.parents[0]->ensure_grad().values());
    });
}

/// L2 norm of each row of a matrix -> vector of length rows.
inline Var row_norms(const Var& a)
{
    detail::require_rank("row_norms", a, 2);
    const auto r = a->value.rows();
    Array out(Shape{r});
    for (std::size_t i = 0; i < r; ++i) {
        double s = 0.0;
        for (double v : a->value.row(i)) s += v * v;
        out[i] = std::sqrt(s);
    }
    return make_op("row_norms", std::move(out), {a}, [](Node& self) {
        Node& p = *self.parents[0];
        auto& g = p.ensure_grad();
        for (std::size_t i = 0; i < self.value.size(); ++i) {
            const double n = self.value[i];
            if (n == 0.0) continue;
            auto x = p.value.row(i);
            auto gx = g.row(i);
            for (std::size_t j = 0; j < x.size(); ++j) gx[j] += self.grad[i] * x[j] / n;
        }
    });
}

/// Scales every row of a matrix to unit L2 norm; a zero row is an error.
inline Var normalize_rows(const Var& a)
{
    detail::require_rank("normalize_rows", a, 2);
    const auto r = a->value.rows();
    std::vector<double> norms(r);
    Array out = a->value;
    for (std::size_t i = 0; i < r; ++i) {
        double s = 0.0;
        for (double v : a->value.row(i)) s += v * v;
        norms[i] = std::sqrt(s);
        if (norms[i] == 0.0) throw NonFiniteError("normalize_rows: zero-norm row " + std::to_string(i));
        for (double& v : out.row(i)) v /= norms[i];
    }
    return make_op("normalize_rows", std::move(out), {a}, [norms = std::move(norms)](Node& self) {
        auto& g = self.parents[0]->ensure_grad();
        for (std::size_t i = 0; i < norms.size(); ++i)
            detail::normalize_row_backward(self.value.row(i), self.grad.row(i), norms[i], g.row(i));
    });
}

/// Numerically stable softmax over a vector (max subtracted).
inline Var softmax(const Var& a)
{
    detail::require_rank("softmax", a, 1);
    const auto& x = a->value;
    const double mx = *std::max_element(x.values().begin(), x.values().end());
    Array out(x.shape());
    double z = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) z += (out[i] = std::exp(x[i] - mx));
    for (std::size_t i = 0; i < x.size(); ++i) out[i] /= z;
    return make_op("softmax", std::move(out), {a}, [](Node& self) {
        double proj = 0.0;
        for (std::size_t i = 0; i < self.value.size(); ++i) proj += self.grad[i] * self.value[i];
        auto& g = self.parents[0]->ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.value[i] * (self.grad[i] - proj);
    });
}

/// log(sum(exp(x))) over a vector, max-shifted.
inline Var logsumexp(const Var& a)
{
    detail::require_rank("logsumexp", a, 1);
    const auto& x = a->value;
    const double mx = *std::max_element(x.values().begin(), x.values().end());
    double z = 0.0;
    for (double v : x.values()) z += std::exp(v - mx);
    return make_op("logsumexp", Array::scalar(mx + std::log(z)), {a}, [](Node& self) {
        Node& p = *self.parents[0];
        auto& g = p.ensure_grad();
        const double lse = self.value[0];
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[0] * std::exp(p.value[i] - lse);
    });
}

/// Element at flat index i, as a scalar.
inline Var pick(const Var& a, std::size_t i)
{
    if (i >= a->value.size()) detail::shape_fail("pick", a->value, "index < " + std::to_string(a->value.size()));
    return make_op("pick", Array::scalar(a->value[i]), {a},
                   [i](Node& self) { self.parents[0]->ensure_grad()[i] += self.grad[0]; });
}

// ---------------------------------------------------------------------------
// Concatenation

namespace detail {

inline Var join(const char* op, const std::vector<Var>& parts, Shape shape)
{
    std::vector<double> data;
    data.reserve(shape_size(shape));
    for (const auto& p : parts) data.insert(data.end(), p->value.values().begin(), p->value.values().end());
    return make_op(op, Array(std::move(shape), std::move(data)), parts, [](Node& self) {
        std::size_t off = 0;
        for (auto& p : self.parents) {
            const auto n = p->value.size();
            if (p->requires_grad) {
                auto& g = p->ensure_grad();
                for (std::size_t i = 0; i < n; ++i) g[i] += self.grad[off + i];
            }
            off += n;
        }
    });
}

} // namespace detail

/// Concatenates vectors end to end.
inline Var concat(const std::vector<Var>& parts)
{
    if (parts.empty()) throw ShapeError("concat: no inputs");
    std::size_t n = 0;
    for (const auto& p : parts) {
        detail::require_rank("concat", p, 1);
        n += p->value.size();
    }
    return detail::join("concat", parts, Shape{n});
}

/// Stacks equal-length vectors as the rows of a matrix.
inline Var stack_rows(const std::vector<Var>& rows)
{
    if (rows.empty()) throw ShapeError("stack_rows: no inputs");
    for (const auto& r : rows) {
        detail::require_rank("stack_rows", r, 1);
        detail::require_same("stack_rows", rows[0], r);
    }
    return detail::join("stack_rows", rows, Shape{rows.size(), rows[0]->value.size()});
}

/// Stacks matrices with equal column counts vertically.
inline Var concat_rows(const std::vector<Var>& blocks)
{
    if (blocks.empty()) throw ShapeError("concat_rows: no inputs");
    std::size_t r = 0;
    const auto c = blocks[0]->value.cols();
    for (const auto& b : blocks) {
        detail::require_rank("concat_rows", b, 2);
        if (b->value.cols() != c) detail::shape_fail("concat_rows", blocks[0]->value, b->value);
        r += b->value.rows();
    }
    return detail::join("concat_rows", blocks, Shape{r, c});
}

// ---------------------------------------------------------------------------
// Pairwise geometry

/// D[i][l] = ||a_i - a_l||^2 over the rows of a (n x d) -> (n x n).
inline Var pairwise_sq_dist(const Var& a)
{
    detail::require_rank("pairwise_sq_dist", a, 2);
    const auto n = a->value.rows(), d = a->value.cols();
    Array out(Shape{n, n});
    const double* X = a->value.data();
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t l = i + 1; l < n; ++l) {
            double s = 0.0;
            for (std::size_t j = 0; j < d; ++j) {
                const double t = X[i * d + j] - X[l * d + j];
                s += t * t;
            }
            out[i * n + l] = out[l * n + i] = s;
        }
    return make_op("pairwise_sq_dist", std::move(out), {a}, [n, d](Node& self) {
        Node& p = *self.parents[0];
        double* G = p.ensure_grad().data();
        const double* X = p.value.data();
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t l = i + 1; l < n; ++l) {
                const double w = 2.0 * (self.grad[i * n + l] + self.grad[l * n + i]);
                if (w == 0.0) continue;
                for (std::size_t j = 0; j < d; ++j) {
                    const double t = w * (X[i * d + j] - X[l * d + j]);
                    G[i * d + j] += t;
                    G[l * d + j] -= t;
                }
            }
    });
}

} // namespace qaf
