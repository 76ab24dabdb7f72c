#include "neurotube/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace nt::ops {
namespace {

Tensor make(Shape shape, std::vector<double> values, DType dtype) {
    return Tensor(std::move(shape), std::move(values), dtype);
}

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) {
        throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                             shape_str(b.shape()));
    }
}

void require_rank(const char* op, const Tensor& t, std::size_t rank) {
    if (t.rank() != rank) {
        throw DimensionError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got shape " +
                             shape_str(t.shape()));
    }
}

// Row-wise layout of a tensor viewed as [rows, last].
struct Rows {
    std::size_t rows;
    std::size_t cols;
};

Rows as_rows(const Tensor& x) {
    if (x.rank() == 0) return {1, 1};
    const std::size_t cols = x.shape().back();
    return {cols == 0 ? 0 : x.numel() / cols, cols};
}

template <class F>
Tensor unary(Graph& g, const Tensor& x, F&& forward_derivative) {
    std::vector<double> out(x.numel());
    std::vector<double> deriv(x.numel());
    const auto xs = x.data();
    for (std::size_t i = 0; i < out.size(); ++i) forward_derivative(xs[i], out[i], deriv[i]);
    Tensor y = make(x.shape(), std::move(out), x.dtype());
    if (g.should_record({&x})) {
        g.record(y, [x, deriv = std::move(deriv)](std::span<const double> gy) {
            auto gx = grad_buffer(x);
            for (std::size_t i = 0; i < gy.size(); ++i) gx[i] += gy[i] * deriv[i];
        });
    }
    return y;
}

std::size_t clamp_index(std::ptrdiff_t i, std::size_t extent) {
    if (i < 0) return 0;
    if (static_cast<std::size_t>(i) >= extent) return extent - 1;
    return static_cast<std::size_t>(i);
}

}  // namespace

Tensor add(Graph& g, const Tensor& a, const Tensor& b) {
    require_same_shape("add", a, b);
    std::vector<double> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] + b.data()[i];
    Tensor y = make(a.shape(), std::move(out), promote(a.dtype(), b.dtype()));
    if (g.should_record({&a, &b})) {
        g.record(y, [a, b](std::span<const double> gy) {
            for (const Tensor* t : {&a, &b}) {
                if (!t->requires_grad()) continue;
                auto gt = grad_buffer(*t);
                for (std::size_t i = 0; i < gy.size(); ++i) gt[i] += gy[i];
            }
        });
    }
    return y;
}

Tensor sub(Graph& g, const Tensor& a, const Tensor& b) {
    require_same_shape("sub", a, b);
    std::vector<double> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] - b.data()[i];
    Tensor y = make(a.shape(), std::move(out), promote(a.dtype(), b.dtype()));
    if (g.should_record({&a, &b})) {
        g.record(y, [a, b](std::span<const double> gy) {
            if (a.requires_grad()) {
                auto ga = grad_buffer(a);
                for (std::size_t i = 0; i < gy.size(); ++i) ga[i] += gy[i];
            }
            if (b.requires_grad()) {
                auto gb = grad_buffer(b);
                for (std::size_t i = 0; i < gy.size(); ++i) gb[i] -= gy[i];
            }
        });
    }
    return y;
}

Tensor mul(Graph& g, const Tensor& a, const Tensor& b) {
    require_same_shape("mul", a, b);
    std::vector<double> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * b.data()[i];
    Tensor y = make(a.shape(), std::move(out), promote(a.dtype(), b.dtype()));
    if (g.should_record({&a, &b})) {
        g.record(y, [a, b](std::span<const double> gy) {
            if (a.requires_grad()) {
                auto ga = grad_buffer(a);
                for (std::size_t i = 0; i < gy.size(); ++i) ga[i] += gy[i] * b.data()[i];
            }
            if (b.requires_grad()) {
                auto gb = grad_buffer(b);
                for (std::size_t i = 0; i < gy.size(); ++i) gb[i] += gy[i] * a.data()[i];
            }
        });
    }
    return y;
}

Tensor div(Graph& g, const Tensor& a, const Tensor& b) {
    require_same_shape("div", a, b);
    std::vector<double> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] / b.data()[i];
    Tensor y = make(a.shape(), std::move(out), promote(a.dtype(), b.dtype()));
    if (g.should_record({&a, &b})) {
        g.record(y, [a, b](std::span<const double> gy) {
            const auto as = a.data();
            const auto bs = b.data();
            if (a.requires_grad()) {
                auto ga = grad_buffer(a);
                for (std::size_t i = 0; i < gy.size(); ++i) ga[i] += gy[i] / bs[i];
            }
            if (b.requires_grad()) {
                auto gb = grad_buffer(b);
                for (std::size_t i = 0; i < gy.size(); ++i) gb[i] -= gy[i] * as[i] / (bs[i] * bs[i]);
            }
        });
    }
    return y;
}

Tensor scale(Graph& g, const Tensor& x, double factor) {
    return unary(g, x, [factor](double v, double& out, double& d) {
        out = v * factor;
        d = factor;
    });
}

Tensor add_scalar(Graph& g, const Tensor& x, double value) {
    return unary(g, x, [value](double v, double& out, double& d) {
        out = v + value;
        d = 1.0;
    });
}

Tensor add_bias(Graph& g, const Tensor& x, const Tensor& bias) {
    require_rank("add_bias", bias, 1);
    const auto [rows, cols] = as_rows(x);
    if (x.rank() == 0 || cols != bias.numel()) {
        throw DimensionError("add_bias: bias " + shape_str(bias.shape()) + " vs input " + shape_str(x.shape()));
    }
    std::vector<double> out(x.numel());
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] = x.data()[r * cols + c] + bias.data()[c];
    Tensor y = make(x.shape(), std::move(out), promote(x.dtype(), bias.dtype()));
    if (g.should_record({&x, &bias})) {
        g.record(y, [x, bias, rows, cols](std::span<const double> gy) {
            if (x.requires_grad()) {
                auto gx = grad_buffer(x);
                for (std::size_t i = 0; i < gy.size(); ++i) gx[i] += gy[i];
            }
            if (bias.requires_grad()) {
                auto gb = grad_buffer(bias);
                for (std::size_t r = 0; r < rows; ++r)
                    for (std::size_t c = 0; c < cols; ++c) gb[c] += gy[r * cols + c];
            }
        });
    }
    return y;
}

Tensor sum(Graph& g, const Tensor& x) {
    double s = 0.0;
    for (double v : x.data()) s += v;
    Tensor y = Tensor::scalar(s, x.dtype());
    if (g.should_record({&x})) {
        g.record(y, [x](std::span<const double> gy) {
            auto gx = grad_buffer(x);
            for (auto& v : gx) v += gy[0];
        });
    }
    return y;
}

Tensor mean(Graph& g, const Tensor& x) {
    if (x.numel() == 0) throw DimensionError("mean: empty tensor");
    return scale(g, sum(g, x), 1.0 / static_cast<double>(x.numel()));
}

Tensor reshape(Graph& g, const Tensor& x, Shape shape) {
    if (shape_numel(shape) != x.numel()) {
        throw DimensionError("reshape: " + shape_str(x.shape()) + " -> " + shape_str(shape));
    }
    std::vector<double> out(x.data().begin(), x.data().end());
    Tensor y = make(std::move(shape), std::move(out), x.dtype());
    if (g.should_record({&x})) {
        g.record(y, [x](std::span<const double> gy) {
            auto gx = grad_buffer(x);
            for (std::size_t i = 0; i < gy.size(); ++i) gx[i] += gy[i];
        });
    }
    return y;
}

Tensor transpose(Graph& g, const Tensor& x) {
    require_rank("transpose", x, 2);
    const std::size_t m = x.dim(0), n = x.dim(1);
    std::vector<double> out(x.numel());
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) out[j * m + i] = x.data()[i * n + j];
    Tensor y = make({n, m}, std::move(out), x.dtype());
    if (g.should_record({&x})) {
        g.record(y, [x, m, n](std::span<const double> gy) {
            auto gx = grad_buffer(x);
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t j = 0; j < n; ++j) gx[i * n + j] += gy[j * m + i];
        });
    }
    return y;
}

Tensor matmul(Graph& g, const Tensor& a, const Tensor& b) {
    require_rank("matmul", a, 2);
    require_rank("matmul", b, 2);
    const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
    if (b.dim(0) != k) {
        throw DimensionError("matmul: inner extents differ " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
    }
    std::vector<double> out(m * n, 0.0);
    const auto as = a.data();
    const auto bs = b.data();
    for (std::size_t i = 0; i < m; ++i) {
        double* row = out.data() + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const double av = as[i * k + p];
            if (av == 0.0) continue;
            const double* brow = bs.data() + p * n;
            for (std::size_t j = 0; j < n; ++j) row[j] += av * brow[j];
        }
    }
    Tensor y = make({m, n}, std::move(out), promote(a.dtype(), b.dtype()));
    if (g.should_record({&a, &b})) {
        g.record(y, [a, b, m, k, n](std::span<const double> gy) {
            const auto as = a.data();
            const auto bs = b.data();
            if (a.requires_grad()) {
                // dA = dC * B^T
                auto ga = grad_buffer(a);
                for (std::size_t i = 0; i < m; ++i)
                    for (std::size_t p = 0; p < k; ++p) {
                        double s = 0.0;
                        for (std::size_t j = 0; j < n; ++j) s += gy[i * n + j] * bs[p * n + j];
                        ga[i * k + p] += s;
                    }
            }
            if (b.requires_grad()) {
                // dB = A^T * dC
                auto gb = grad_buffer(b);
                for (std::size_t i = 0; i < m; ++i)
                    for (std::size_t p = 0; p < k; ++p) {
                        const double av = as[i * k + p];
                        if (av == 0.0) continue;
                        for (std::size_t j = 0; j < n; ++j) gb[p * n + j] += av * gy[i * n + j];
                    }
            }
        });
    }
    return y;
}

Tensor slice_cols(Graph& g, const Tensor& x, std::size_t start, std::size_t count) {
    require_rank("slice_cols", x, 2);
    const std::size_t m = x.dim(0), n = x.dim(1);
    if (start + count > n) throw DimensionError("slice_cols: range exceeds " + std::to_string(n) + " columns");
    std::vector<double> out(m * count);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < count; ++j) out[i * count + j] = x.data()[i * n + start + j];
    Tensor y = make({m, count}, std::move(out), x.dtype());
    if (g.should_record({&x})) {
        g.record(y, [x, m, n, start, count](std::span<const double> gy) {
            auto gx = grad_buffer(x);
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t j = 0; j < count; ++j) gx[i * n + start + j] += gy[i * count + j];
        });
    }
    return y;
}

Tensor concat_cols(Graph& g, const std::vector<Tensor>& parts) {
    if (parts.empty()) throw ArgumentError("concat_cols: no inputs");
    const std::size_t m = parts.front().dim(0);
    std::size_t total = 0;
    DType dtype = parts.front().dtype();
    for (const auto& p : parts) {
        require_rank("concat_cols", p, 2);
        if (p.dim(0) != m) throw DimensionError("concat_cols: row count mismatch");
        total += p.dim(1);
        dtype = promote(dtype, p.dtype());
    }
    std::vector<double> out(m * total);
    std::size_t offset = 0;
    for (const auto& p : parts) {
        const std::size_t w = p.dim(1);
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < w; ++j) out[i * total + offset + j] = p.data()[i * w + j];
        offset += w;
    }
    Tensor y = make({m, total}, std::move(out), dtype);
    if (g.should_record(parts)) {
        g.record(y, [parts, m, total](std::span<const double> gy) {
            std::size_t offset = 0;
            for (const auto& p : parts) {
                const std::size_t w = p.dim(1);
                if (p.requires_grad()) {
                    auto gp = grad_buffer(p);
                    for (std::size_t i = 0; i < m; ++i)
                        for (std::size_t j = 0; j < w; ++j) gp[i * w + j] += gy[i * total + offset + j];
                }
                offset += w;
            }
        });
    }
    return y;
}

Tensor layernorm(Graph& g, const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
    if (x.rank() == 0 || x.shape().back() == 0) throw DimensionError("layernorm: empty normalization axis");
    if (!(eps > 0.0)) throw ArgumentError("layernorm: eps must be positive");
    const auto [rows, d] = as_rows(x);
    if (gamma.numel() != d || beta.numel() != d) {
        throw DimensionError("layernorm: gamma/beta must have " + std::to_string(d) + " elements");
    }
    std::vector<double> out(x.numel());
    std::vector<double> xhat(x.numel());
    std::vector<double> inv_std(rows);
    const auto xs = x.data();
    for (std::size_t r = 0; r < rows; ++r) {
        const double* row = xs.data() + r * d;
        double mu = 0.0;
        for (std::size_t j = 0; j < d; ++j) mu += row[j];
        mu /= static_cast<double>(d);
        double var = 0.0;
        for (std::size_t j = 0; j < d; ++j) var += (row[j] - mu) * (row[j] - mu);
        var /= static_cast<double>(d);
        inv_std[r] = 1.0 / std::sqrt(var + eps);
        for (std::size_t j = 0; j < d; ++j) {
            xhat[r * d + j] = (row[j] - mu) * inv_std[r];
            out[r * d + j] = xhat[r * d + j] * gamma.data()[j] + beta.data()[j];
        }
    }
    Tensor y = make(x.shape(), std::move(out), promote(x.dtype(), gamma.dtype()));
    if (g.should_record({&x, &gamma, &beta})) {
        g.record(y, [x, gamma, beta, rows, d, xhat = std::move(xhat), inv_std = std::move(inv_std)](
                        std::span<const double> gy) {
            if (gamma.requires_grad() || beta.requires_grad()) {
                auto gg = gamma.requires_grad() ? grad_buffer(gamma) : std::span<double>{};
                auto gb = beta.requires_grad() ? grad_buffer(beta) : std::span<double>{};
                for (std::size_t r = 0; r < rows; ++r)
                    for (std::size_t j = 0; j < d; ++j) {
                        if (!gg.empty()) gg[j] += gy[r * d + j] * xhat[r * d + j];
                        if (!gb.empty()) gb[j] += gy[r * d + j];
                    }
            }
            if (x.requires_grad()) {
                auto gx = grad_buffer(x);
                const double inv_d = 1.0 / static_cast<double>(d);
                for (std::size_t r = 0; r < rows; ++r) {
                    double mean_g = 0.0, mean_gx = 0.0;
                    for (std::size_t j = 0; j < d; ++j) {
                        const double gh = gy[r * d + j] * gamma.data()[j];
                        mean_g += gh;
                        mean_gx += gh * xhat[r * d + j];
                    }
                    mean_g *= inv_d;
                    mean_gx *= inv_d;
                    for (std::size_t j = 0; j < d; ++j) {
                        const double gh = gy[r * d + j] * gamma.data()[j];
                        gx[r * d + j] += inv_std[r] * (gh - mean_g - xhat[r * d + j] * mean_gx);
                    }
                }
            }
        });
    }
    return y;
}

Tensor softmax(Graph& g, const Tensor& x) {
    const auto [rows, d] = as_rows(x);
    std::vector<double> out(x.numel());
    for (std::size_t r = 0; r < rows; ++r) {
        const double* row = x.data().data() + r * d;
        const double mx = *std::max_element(row, row + d);
        double z = 0.0;
        for (std::size_t j = 0; j < d; ++j) z += (out[r * d + j] = std::exp(row[j] - mx));
        for (std::size_t j = 0; j < d; ++j) out[r * d + j] /= z;
    }
    Tensor y = make(x.shape(), std::move(out), x.dtype());
    if (g.should_record({&x})) {
        g.record(y, [x, y_vals = std::vector<double>(y.data().begin(), y.data().end()), rows, d](
                        std::span<const double> gy) {
            auto gx = grad_buffer(x);
            for (std::size_t r = 0; r < rows; ++r) {
                double dot = 0.0;
                for (std::size_t j = 0; j < d; ++j) dot += gy[r * d + j] * y_vals[r * d + j];
                for (std::size_t j = 0; j < d; ++j) gx[r * d + j] += y_vals[r * d + j] * (gy[r * d + j] - dot);
            }
        });
    }
    return y;
}

Tensor gelu(Graph& g, const Tensor& x) {
    const double c = std::sqrt(2.0 / std::numbers::pi);
    return unary(g, x, [c](double v, double& out, double& d) {
        const double u = c * (v + kGeluCubic * v * v * v);
        const double t = std::tanh(u);
        out = 0.5 * v * (1.0 + t);
        d = 0.5 * (1.0 + t) + 0.5 * v * (1.0 - t * t) * c * (1.0 + 3.0 * kGeluCubic * v * v);
    });
}

Tensor sigmoid(Graph& g, const Tensor& x) {
    return unary(g, x, [](double v, double& out, double& d) {
        out = v >= 0.0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
        d = out * (1.0 - out);
    });
}

Tensor tanh(Graph& g, const Tensor& x) {
    return unary(g, x, [](double v, double& out, double& d) {
        out = std::tanh(v);
        d = 1.0 - out * out;
    });
}

Tensor clamp(Graph& g, const Tensor& x, double lo, double hi) {
    return unary(g, x, [lo, hi](double v, double& out, double& d) {
        out = std::clamp(v, lo, hi);
        d = (v > lo && v < hi) ? 1.0 : 0.0;
    });
}

Tensor bce_with_logits(Graph& g, const Tensor& logits, const Tensor& target) {
    require_same_shape("bce_with_logits", logits, target);
    if (logits.numel() == 0) throw DimensionError("bce_with_logits: empty input");
    const auto zs = logits.data();
    const auto ys = target.data();
    double total = 0.0;
    for (std::size_t i = 0; i < zs.size(); ++i) {
        const double z = zs[i];
        total += std::max(z, 0.0) - z * ys[i] + std::log1p(std::exp(-std::abs(z)));
    }
    const double n = static_cast<double>(zs.size());
    Tensor y = Tensor::scalar(total / n, logits.dtype());
    if (g.should_record({&logits})) {
        g.record(y, [logits, target, n](std::span<const double> gy) {
            auto gz = grad_buffer(logits);
            const auto zs = logits.data();
            const auto ys = target.data();
            for (std::size_t i = 0; i < zs.size(); ++i) {
                const double z = zs[i];
                const double p = z >= 0.0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
                gz[i] += gy[0] * (p - ys[i]) / n;
            }
        });
    }
    return y;
}

namespace {

struct AxisInterp {
    std::size_t i0 = 0;
    std::size_t i1 = 0;
    double frac = 0.0;
    bool clamped = false;
};

AxisInterp interp_axis(double c, std::size_t extent) {
    AxisInterp a;
    const double hi = static_cast<double>(extent - 1);
    if (c < 0.0) {
        c = 0.0;
        a.clamped = true;
    } else if (c > hi) {
        c = hi;
        a.clamped = true;
    }
    if (extent == 1) {
        a.clamped = true;
        return a;
    }
    auto i0 = static_cast<std::size_t>(std::floor(c));
    if (i0 >= extent - 1) i0 = extent - 2;
    a.i0 = i0;
    a.i1 = i0 + 1;
    a.frac = c - static_cast<double>(i0);
    return a;
}

}  // namespace

Tensor trilinear_sample(Graph& g, const Tensor& vol, const Tensor& coords) {
    require_rank("trilinear_sample", vol, 3);
    if (vol.numel() == 0) throw DimensionError("trilinear_sample: empty volume");
    if (coords.rank() != 2 || coords.dim(1) != 3) {
        throw DimensionError("trilinear_sample: coords must be [n,3], got " + shape_str(coords.shape()));
    }
    const std::size_t D = vol.dim(0), H = vol.dim(1), W = vol.dim(2);
    const std::size_t n = coords.dim(0);
    const auto v = vol.data();
    const auto cs = coords.data();
    std::vector<double> out(n);
    for (std::size_t p = 0; p < n; ++p) {
        if (!std::isfinite(cs[3 * p]) || !std::isfinite(cs[3 * p + 1]) || !std::isfinite(cs[3 * p + 2])) {
            throw ArgumentError("trilinear_sample: non-finite coordinate at row " + std::to_string(p));
        }
        const auto z = interp_axis(cs[3 * p], D);
        const auto y = interp_axis(cs[3 * p + 1], H);
        const auto x = interp_axis(cs[3 * p + 2], W);
        const std::size_t zi[2] = {z.i0, z.i1}, yi[2] = {y.i0, y.i1}, xi[2] = {x.i0, x.i1};
        const double wz[2] = {1 - z.frac, z.frac}, wy[2] = {1 - y.frac, y.frac}, wx[2] = {1 - x.frac, x.frac};
        // Grouped so that exchanging the y and x axes is bit-exact.
        double slab[2];
        for (int a = 0; a < 2; ++a) {
            auto term = [&](int b, int c) { return wz[a] * (wy[b] * wx[c]) * v[(zi[a] * H + yi[b]) * W + xi[c]]; };
            slab[a] = (term(0, 0) + term(1, 1)) + (term(0, 1) + term(1, 0));
        }
        out[p] = slab[0] + slab[1];
    }
    Tensor y = make({n}, std::move(out), promote(vol.dtype(), coords.dtype()));
    if (g.should_record({&vol, &coords})) {
        g.record(y, [vol, coords, D, H, W, n](std::span<const double> gy) {
            const auto v = vol.data();
            const auto cs = coords.data();
            auto gv = vol.requires_grad() ? grad_buffer(vol) : std::span<double>{};
            auto gc = coords.requires_grad() ? grad_buffer(coords) : std::span<double>{};
            for (std::size_t p = 0; p < n; ++p) {
                const double go = gy[p];
                if (go == 0.0) continue;
                const auto z = interp_axis(cs[3 * p], D);
                const auto y = interp_axis(cs[3 * p + 1], H);
                const auto x = interp_axis(cs[3 * p + 2], W);
                const std::size_t zi[2] = {z.i0, z.i1}, yi[2] = {y.i0, y.i1}, xi[2] = {x.i0, x.i1};
                const double wz[2] = {1 - z.frac, z.frac}, wy[2] = {1 - y.frac, y.frac}, wx[2] = {1 - x.frac, x.frac};
                double dz = 0.0, dy = 0.0, dx = 0.0;
                for (int a = 0; a < 2; ++a)
                    for (int b = 0; b < 2; ++b)
                        for (int c = 0; c < 2; ++c) {
                            const std::size_t idx = (zi[a] * H + yi[b]) * W + xi[c];
                            if (!gv.empty()) gv[idx] += go * wz[a] * wy[b] * wx[c];
                            const double val = v[idx];
                            const double sz = a ? 1.0 : -1.0, sy = b ? 1.0 : -1.0, sx = c ? 1.0 : -1.0;
                            dz += sz * wy[b] * wx[c] * val;
                            dy += wz[a] * sy * wx[c] * val;
                            dx += wz[a] * wy[b] * sx * val;
                        }
                if (!gc.empty()) {
                    if (!z.clamped) gc[3 * p] += go * dz;
                    if (!y.clamped) gc[3 * p + 1] += go * dy;
                    if (!x.clamped) gc[3 * p + 2] += go * dx;
                }
            }
        });
    }
    return y;
}

Tensor extract_patches(Graph& g, const Tensor& block, std::size_t patch) {
    require_rank("extract_patches", block, 3);
    if (patch == 0 || block.numel() == 0) throw DimensionError("extract_patches: empty block or patch");
    const std::size_t D = block.dim(0), H = block.dim(1), W = block.dim(2);
    const std::size_t gh = (H + patch - 1) / patch, gw = (W + patch - 1) / patch;
    const std::size_t feat = D * patch * patch;
    std::vector<std::size_t> src(gh * gw * feat);
    for (std::size_t i = 0; i < gh; ++i)
        for (std::size_t j = 0; j < gw; ++j)
            for (std::size_t d = 0; d < D; ++d)
                for (std::size_t r = 0; r < patch; ++r)
                    for (std::size_t c = 0; c < patch; ++c) {
                        const std::size_t yy = std::min(i * patch + r, H - 1);
                        const std::size_t xx = std::min(j * patch + c, W - 1);
                        src[(i * gw + j) * feat + (d * patch + r) * patch + c] = (d * H + yy) * W + xx;
                    }
    std::vector<double> out(src.size());
    for (std::size_t k = 0; k < src.size(); ++k) out[k] = block.data()[src[k]];
    Tensor y = make({gh * gw, feat}, std::move(out), block.dtype());
    if (g.should_record({&block})) {
        g.record(y, [block, src = std::move(src)](std::span<const double> gy) {
            auto gb = grad_buffer(block);
            for (std::size_t k = 0; k < src.size(); ++k) gb[src[k]] += gy[k];
        });
    }
    return y;
}

Tensor conv2d_same(Graph& g, const Tensor& x, const Tensor& w, const Tensor& bias) {
    require_rank("conv2d_same", x, 3);
    require_rank("conv2d_same", w, 4);
    const std::size_t C = x.dim(0), H = x.dim(1), W = x.dim(2);
    const std::size_t O = w.dim(0), k = w.dim(2);
    if (w.dim(1) != C || w.dim(3) != k || k % 2 == 0) {
        throw DimensionError("conv2d_same: kernel " + shape_str(w.shape()) + " incompatible with input " +
                             shape_str(x.shape()));
    }
    if (bias.numel() != O) throw DimensionError("conv2d_same: bias must have " + std::to_string(O) + " elements");
    const std::ptrdiff_t half = static_cast<std::ptrdiff_t>(k / 2);
    // Clamped source offsets per output row/column and tap.
    std::vector<std::size_t> ys(H * k), xs(W * k);
    for (std::size_t yy = 0; yy < H; ++yy)
        for (std::size_t t = 0; t < k; ++t)
            ys[yy * k + t] = clamp_index(static_cast<std::ptrdiff_t>(yy + t) - half, H);
    for (std::size_t xx = 0; xx < W; ++xx)
        for (std::size_t t = 0; t < k; ++t)
            xs[xx * k + t] = clamp_index(static_cast<std::ptrdiff_t>(xx + t) - half, W);

    const auto xv = x.data();
    const auto wv = w.data();
    std::vector<double> out(O * H * W);
    for (std::size_t o = 0; o < O; ++o) {
        double* plane = out.data() + o * H * W;
        std::fill(plane, plane + H * W, bias.data()[o]);
        for (std::size_t c = 0; c < C; ++c) {
            const double* in = xv.data() + c * H * W;
            for (std::size_t ty = 0; ty < k; ++ty)
                for (std::size_t tx = 0; tx < k; ++tx) {
                    const double wt = wv[((o * C + c) * k + ty) * k + tx];
                    for (std::size_t yy = 0; yy < H; ++yy) {
                        const double* src = in + ys[yy * k + ty] * W;
                        double* dst = plane + yy * W;
                        for (std::size_t xx = 0; xx < W; ++xx) dst[xx] += wt * src[xs[xx * k + tx]];
                    }
                }
        }
    }
    Tensor y = make({O, H, W}, std::move(out), promote(x.dtype(), w.dtype()));
    if (g.should_record({&x, &w, &bias})) {
        g.record(y, [x, w, bias, C, H, W, O, k, ys = std::move(ys), xs = std::move(xs)](std::span<const double> gy) {
            const auto xv = x.data();
            const auto wv = w.data();
            auto gx = x.requires_grad() ? grad_buffer(x) : std::span<double>{};
            auto gw = w.requires_grad() ? grad_buffer(w) : std::span<double>{};
            if (bias.requires_grad()) {
                auto gb = grad_buffer(bias);
                for (std::size_t o = 0; o < O; ++o)
                    for (std::size_t i = 0; i < H * W; ++i) gb[o] += gy[o * H * W + i];
            }
            for (std::size_t o = 0; o < O; ++o) {
                const double* go = gy.data() + o * H * W;
                for (std::size_t c = 0; c < C; ++c) {
                    const double* in = xv.data() + c * H * W;
                    for (std::size_t ty = 0; ty < k; ++ty)
                        for (std::size_t tx = 0; tx < k; ++tx) {
                            const std::size_t widx = ((o * C + c) * k + ty) * k + tx;
                            const double wt = wv[widx];
                            double acc = 0.0;
                            for (std::size_t yy = 0; yy < H; ++yy) {
                                const std::size_t sy = ys[yy * k + ty];
                                const double* src = in + sy * W;
                                const double* grow = go + yy * W;
                                for (std::size_t xx = 0; xx < W; ++xx) {
                                    const std::size_t sx = xs[xx * k + tx];
                                    acc += grow[xx] * src[sx];
                                    if (!gx.empty()) gx[(c * H + sy) * W + sx] += grow[xx] * wt;
                                }
                            }
                            if (!gw.empty()) gw[widx] += acc;
                        }
                }
            }
        });
    }
    return y;
}

Tensor upsample_nearest(Graph& g, const Tensor& x, std::size_t factor) {
    require_rank("upsample_nearest", x, 3);
    if (factor == 0) throw ArgumentError("upsample_nearest: factor must be >= 1");
    const std::size_t C = x.dim(0), H = x.dim(1), W = x.dim(2);
    const std::size_t Ho = H * factor, Wo = W * factor;
    std::vector<double> out(C * Ho * Wo);
    for (std::size_t c = 0; c < C; ++c)
        for (std::size_t yy = 0; yy < Ho; ++yy)
            for (std::size_t xx = 0; xx < Wo; ++xx)
                out[(c * Ho + yy) * Wo + xx] = x.data()[(c * H + yy / factor) * W + xx / factor];
    Tensor y = make({C, Ho, Wo}, std::move(out), x.dtype());
    if (g.should_record({&x})) {
        g.record(y, [x, C, H, W, Ho, Wo, factor](std::span<const double> gy) {
            auto gx = grad_buffer(x);
            for (std::size_t c = 0; c < C; ++c)
                for (std::size_t yy = 0; yy < Ho; ++yy)
                    for (std::size_t xx = 0; xx < Wo; ++xx)
                        gx[(c * H + yy / factor) * W + xx / factor] += gy[(c * Ho + yy) * Wo + xx];
        });
    }
    return y;
}

Tensor crop(Graph& g, const Tensor& x, std::size_t h, std::size_t w) {
    require_rank("crop", x, 3);
    const std::size_t C = x.dim(0), H = x.dim(1), W = x.dim(2);
    if (h > H || w > W) throw DimensionError("crop: target larger than input");
    std::vector<double> out(C * h * w);
    for (std::size_t c = 0; c < C; ++c)
        for (std::size_t yy = 0; yy < h; ++yy)
            for (std::size_t xx = 0; xx < w; ++xx) out[(c * h + yy) * w + xx] = x.data()[(c * H + yy) * W + xx];
    Tensor y = make({C, h, w}, std::move(out), x.dtype());
    if (g.should_record({&x})) {
        g.record(y, [x, C, H, W, h, w](std::span<const double> gy) {
            auto gx = grad_buffer(x);
            for (std::size_t c = 0; c < C; ++c)
                for (std::size_t yy = 0; yy < h; ++yy)
                    for (std::size_t xx = 0; xx < w; ++xx) gx[(c * H + yy) * W + xx] += gy[(c * h + yy) * w + xx];
        });
    }
    return y;
}

}  // namespace nt::ops
