#include "uniview/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <sstream>
#include <unordered_set>

#include "uniview/errors.hpp"

namespace uniview {

namespace {

thread_local bool g_grad_enabled = true;

std::string shape_str(const std::vector<std::int64_t>& s) {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
    os << "]";
    return os.str();
}

[[noreturn]] void dim_error(const char* op, const std::vector<std::int64_t>& a,
                            const std::vector<std::int64_t>& b) {
    throw DimensionError(std::string(op) + ": incompatible shapes " + shape_str(a) + " vs " +
                         shape_str(b));
}

bool wants_tape(const std::initializer_list<TensorPtr>& parents) {
    if (!g_grad_enabled) return false;
    for (const auto& p : parents)
        if (p && p->requires_grad) return true;
    return false;
}

TensorPtr make_result(std::vector<double> data, std::vector<std::int64_t> shape,
                      std::initializer_list<TensorPtr> parents,
                      std::function<void(const Tensor&)> backprop) {
    const bool tape = wants_tape(parents);
    auto out = std::make_shared<Tensor>(std::move(data), std::move(shape), tape);
    if (tape) {
        out->parents.assign(parents);
        out->backprop = std::move(backprop);
    }
    return out;
}

}  // namespace

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : prev(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = prev; }

std::int64_t shape_size(const std::vector<std::int64_t>& shape) {
    std::int64_t n = 1;
    for (auto e : shape) {
        if (e <= 0) throw DimensionError("tensor extents must be positive");
        n *= e;
    }
    return n;
}

Tensor::Tensor(std::vector<double> d, std::vector<std::int64_t> s, bool req_grad)
    : shape(std::move(s)), data(std::move(d)), requires_grad(req_grad) {
    if (shape_size(shape) != static_cast<std::int64_t>(data.size()))
        throw DimensionError("tensor data length does not match shape product");
}

double Tensor::item() const {
    if (data.size() != 1) throw DimensionError("item() requires a single-element tensor");
    return data[0];
}

void Tensor::zero_grad() {
    if (!requires_grad) return;
    grad.assign(data.size(), 0.0);
}

void Tensor::accumulate_grad(const double* g, std::size_t n) {
    if (!requires_grad) return;
    if (n != data.size()) throw DimensionError("gradient length mismatch");
    if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
    for (std::size_t i = 0; i < n; ++i) grad[i] += g[i];
}

void Tensor::backward() {
    if (!requires_grad) throw NumericError("backward() on a tensor without grad");
    if (data.size() != 1) throw DimensionError("backward() requires a scalar root");

    std::vector<Tensor*> topo;
    std::unordered_set<const Tensor*> seen;
    std::function<void(Tensor*)> visit = [&](Tensor* t) {
        if (!seen.insert(t).second) return;
        for (auto& p : t->parents) visit(p.get());
        topo.push_back(t);
    };
    visit(this);

    if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
    grad[0] += 1.0;

    for (auto it = topo.rbegin(); it != topo.rend(); ++it) {
        Tensor* t = *it;
        if (t->backprop && !t->grad.empty()) t->backprop(*t);
    }
}

void check_finite(const Tensor& t, const char* what) {
    for (double v : t.data)
        if (!std::isfinite(v)) throw NumericError(std::string(what) + ": non-finite value");
}

// ---- creation -------------------------------------------------------------

TensorPtr make_tensor(std::vector<double> data, std::vector<std::int64_t> shape,
                      bool requires_grad) {
    return std::make_shared<Tensor>(std::move(data), std::move(shape), requires_grad);
}

TensorPtr zeros(const std::vector<std::int64_t>& shape, bool requires_grad) {
    return make_tensor(std::vector<double>(static_cast<std::size_t>(shape_size(shape)), 0.0),
                       shape, requires_grad);
}

TensorPtr full(const std::vector<std::int64_t>& shape, double value, bool requires_grad) {
    return make_tensor(std::vector<double>(static_cast<std::size_t>(shape_size(shape)), value),
                       shape, requires_grad);
}

TensorPtr randn(Rng& rng, const std::vector<std::int64_t>& shape, double mean, double stddev,
                bool requires_grad) {
    std::vector<double> d(static_cast<std::size_t>(shape_size(shape)));
    for (auto& v : d) v = rng.gauss(mean, stddev);
    return make_tensor(std::move(d), shape, requires_grad);
}

// ---- elementwise ------------------------------------------------------------

TensorPtr add(const TensorPtr& a, const TensorPtr& b) {
    if (a->shape != b->shape) dim_error("add", a->shape, b->shape);
    std::vector<double> d(a->data.size());
    for (std::size_t i = 0; i < d.size(); ++i) d[i] = a->data[i] + b->data[i];
    return make_result(std::move(d), a->shape, {a, b}, [a, b](const Tensor& out) {
        a->accumulate_grad(out.grad.data(), out.grad.size());
        b->accumulate_grad(out.grad.data(), out.grad.size());
    });
}

TensorPtr sub(const TensorPtr& a, const TensorPtr& b) {
    if (a->shape != b->shape) dim_error("sub", a->shape, b->shape);
    std::vector<double> d(a->data.size());
    for (std::size_t i = 0; i < d.size(); ++i) d[i] = a->data[i] - b->data[i];
    return make_result(std::move(d), a->shape, {a, b}, [a, b](const Tensor& out) {
        a->accumulate_grad(out.grad.data(), out.grad.size());
        if (b->requires_grad) {
            std::vector<double> g(out.grad.size());
            for (std::size_t i = 0; i < g.size(); ++i) g[i] = -out.grad[i];
            b->accumulate_grad(g.data(), g.size());
        }
    });
}

TensorPtr mul(const TensorPtr& a, const TensorPtr& b) {
    if (a->shape != b->shape) dim_error("mul", a->shape, b->shape);
    std::vector<double> d(a->data.size());
    for (std::size_t i = 0; i < d.size(); ++i) d[i] = a->data[i] * b->data[i];
    return make_result(std::move(d), a->shape, {a, b}, [a, b](const Tensor& out) {
        if (a->requires_grad) {
            std::vector<double> g(out.grad.size());
            for (std::size_t i = 0; i < g.size(); ++i) g[i] = out.grad[i] * b->data[i];
            a->accumulate_grad(g.data(), g.size());
        }
        if (b->requires_grad) {
            std::vector<double> g(out.grad.size());
            for (std::size_t i = 0; i < g.size(); ++i) g[i] = out.grad[i] * a->data[i];
            b->accumulate_grad(g.data(), g.size());
        }
    });
}

TensorPtr add_scalar(const TensorPtr& a, double c) {
    std::vector<double> d(a->data.size());
    for (std::size_t i = 0; i < d.size(); ++i) d[i] = a->data[i] + c;
    return make_result(std::move(d), a->shape, {a}, [a](const Tensor& out) {
        a->accumulate_grad(out.grad.data(), out.grad.size());
    });
}

TensorPtr mul_scalar(const TensorPtr& a, double c) {
    std::vector<double> d(a->data.size());
    for (std::size_t i = 0; i < d.size(); ++i) d[i] = a->data[i] * c;
    return make_result(std::move(d), a->shape, {a}, [a, c](const Tensor& out) {
        if (!a->requires_grad) return;
        std::vector<double> g(out.grad.size());
        for (std::size_t i = 0; i < g.size(); ++i) g[i] = out.grad[i] * c;
        a->accumulate_grad(g.data(), g.size());
    });
}

TensorPtr silu(const TensorPtr& a) {
    std::vector<double> d(a->data.size());
    for (std::size_t i = 0; i < d.size(); ++i) {
        const double x = a->data[i];
        d[i] = x / (1.0 + std::exp(-x));
    }
    return make_result(std::move(d), a->shape, {a}, [a](const Tensor& out) {
        if (!a->requires_grad) return;
        std::vector<double> g(out.grad.size());
        for (std::size_t i = 0; i < g.size(); ++i) {
            const double x = a->data[i];
            const double s = 1.0 / (1.0 + std::exp(-x));
            g[i] = out.grad[i] * (s * (1.0 + x * (1.0 - s)));
        }
        a->accumulate_grad(g.data(), g.size());
    });
}

// ---- reductions -------------------------------------------------------------

TensorPtr sum_all(const TensorPtr& a) {
    double s = 0.0;
    for (double v : a->data) s += v;
    return make_result({s}, {}, {a}, [a](const Tensor& out) {
        if (!a->requires_grad) return;
        std::vector<double> g(a->data.size(), out.grad[0]);
        a->accumulate_grad(g.data(), g.size());
    });
}

TensorPtr mean_all(const TensorPtr& a) {
    const double inv = 1.0 / static_cast<double>(a->data.size());
    double s = 0.0;
    for (double v : a->data) s += v;
    return make_result({s * inv}, {}, {a}, [a, inv](const Tensor& out) {
        if (!a->requires_grad) return;
        std::vector<double> g(a->data.size(), out.grad[0] * inv);
        a->accumulate_grad(g.data(), g.size());
    });
}

TensorPtr mse_loss(const TensorPtr& a, const TensorPtr& b) {
    if (a->shape != b->shape) dim_error("mse_loss", a->shape, b->shape);
    const double inv = 1.0 / static_cast<double>(a->data.size());
    double s = 0.0;
    for (std::size_t i = 0; i < a->data.size(); ++i) {
        const double d = a->data[i] - b->data[i];
        s += d * d;
    }
    return make_result({s * inv}, {}, {a, b}, [a, b, inv](const Tensor& out) {
        const double scale = 2.0 * inv * out.grad[0];
        if (a->requires_grad) {
            std::vector<double> g(a->data.size());
            for (std::size_t i = 0; i < g.size(); ++i)
                g[i] = scale * (a->data[i] - b->data[i]);
            a->accumulate_grad(g.data(), g.size());
        }
        if (b->requires_grad) {
            std::vector<double> g(b->data.size());
            for (std::size_t i = 0; i < g.size(); ++i)
                g[i] = scale * (b->data[i] - a->data[i]);
            b->accumulate_grad(g.data(), g.size());
        }
    });
}

// ---- linear algebra ---------------------------------------------------------

TensorPtr matmul(const TensorPtr& a, const TensorPtr& b) {
    if (a->shape.size() != 2 || b->shape.size() != 2 || a->shape[1] != b->shape[0])
        dim_error("matmul", a->shape, b->shape);
    const std::int64_t m = a->shape[0], k = a->shape[1], n = b->shape[1];
    std::vector<double> d(static_cast<std::size_t>(m * n), 0.0);
    for (std::int64_t i = 0; i < m; ++i) {
        const double* arow = a->data.data() + i * k;
        double* orow = d.data() + i * n;
        for (std::int64_t kk = 0; kk < k; ++kk) {
            const double av = arow[kk];
            const double* brow = b->data.data() + kk * n;
            for (std::int64_t j = 0; j < n; ++j) orow[j] += av * brow[j];
        }
    }
    return make_result(std::move(d), {m, n}, {a, b}, [a, b, m, k, n](const Tensor& out) {
        if (a->requires_grad) {
            // dA = dOut . B^T
            std::vector<double> g(static_cast<std::size_t>(m * k), 0.0);
            for (std::int64_t i = 0; i < m; ++i) {
                const double* grow = out.grad.data() + i * n;
                double* garow = g.data() + i * k;
                for (std::int64_t kk = 0; kk < k; ++kk) {
                    const double* brow = b->data.data() + kk * n;
                    double s = 0.0;
                    for (std::int64_t j = 0; j < n; ++j) s += grow[j] * brow[j];
                    garow[kk] = s;
                }
            }
            a->accumulate_grad(g.data(), g.size());
        }
        if (b->requires_grad) {
            // dB = A^T . dOut
            std::vector<double> g(static_cast<std::size_t>(k * n), 0.0);
            for (std::int64_t i = 0; i < m; ++i) {
                const double* arow = a->data.data() + i * k;
                const double* grow = out.grad.data() + i * n;
                for (std::int64_t kk = 0; kk < k; ++kk) {
                    const double av = arow[kk];
                    double* gbrow = g.data() + kk * n;
                    for (std::int64_t j = 0; j < n; ++j) gbrow[j] += av * grow[j];
                }
            }
            b->accumulate_grad(g.data(), g.size());
        }
    });
}

TensorPtr matmul_nt(const TensorPtr& a, const TensorPtr& b) {
    if (a->shape.size() != 2 || b->shape.size() != 2 || a->shape[1] != b->shape[1])
        dim_error("matmul_nt", a->shape, b->shape);
    const std::int64_t m = a->shape[0], k = a->shape[1], n = b->shape[0];
    std::vector<double> d(static_cast<std::size_t>(m * n));
    for (std::int64_t i = 0; i < m; ++i) {
        const double* arow = a->data.data() + i * k;
        double* orow = d.data() + i * n;
        for (std::int64_t j = 0; j < n; ++j) {
            const double* brow = b->data.data() + j * k;
            double s = 0.0;
            for (std::int64_t kk = 0; kk < k; ++kk) s += arow[kk] * brow[kk];
            orow[j] = s;
        }
    }
    return make_result(std::move(d), {m, n}, {a, b}, [a, b, m, k, n](const Tensor& out) {
        if (a->requires_grad) {
            // dA = dOut . B
            std::vector<double> g(static_cast<std::size_t>(m * k), 0.0);
            for (std::int64_t i = 0; i < m; ++i) {
                const double* grow = out.grad.data() + i * n;
                double* garow = g.data() + i * k;
                for (std::int64_t j = 0; j < n; ++j) {
                    const double gv = grow[j];
                    const double* brow = b->data.data() + j * k;
                    for (std::int64_t kk = 0; kk < k; ++kk) garow[kk] += gv * brow[kk];
                }
            }
            a->accumulate_grad(g.data(), g.size());
        }
        if (b->requires_grad) {
            // dB = dOut^T . A
            std::vector<double> g(static_cast<std::size_t>(n * k), 0.0);
            for (std::int64_t i = 0; i < m; ++i) {
                const double* grow = out.grad.data() + i * n;
                const double* arow = a->data.data() + i * k;
                for (std::int64_t j = 0; j < n; ++j) {
                    const double gv = grow[j];
                    double* gbrow = g.data() + j * k;
                    for (std::int64_t kk = 0; kk < k; ++kk) gbrow[kk] += gv * arow[kk];
                }
            }
            b->accumulate_grad(g.data(), g.size());
        }
    });
}

TensorPtr softmax(const TensorPtr& x, int axis) {
    const int rank = static_cast<int>(x->shape.size());
    if (axis < 0 || axis >= rank)
        throw DimensionError("softmax: axis " + std::to_string(axis) + " invalid for rank " +
                             std::to_string(rank));
    std::int64_t outer = 1, inner = 1;
    for (int i = 0; i < axis; ++i) outer *= x->shape[i];
    for (int i = axis + 1; i < rank; ++i) inner *= x->shape[i];
    const std::int64_t n = x->shape[axis];

    std::vector<double> d(x->data.size());
    for (std::int64_t o = 0; o < outer; ++o) {
        for (std::int64_t in = 0; in < inner; ++in) {
            const std::int64_t base = o * n * inner + in;
            double mx = x->data[base];
            for (std::int64_t i = 1; i < n; ++i)
                mx = std::max(mx, x->data[base + i * inner]);
            double z = 0.0;
            for (std::int64_t i = 0; i < n; ++i) {
                const double e = std::exp(x->data[base + i * inner] - mx);
                d[base + i * inner] = e;
                z += e;
            }
            const double invz = 1.0 / z;
            for (std::int64_t i = 0; i < n; ++i) d[base + i * inner] *= invz;
        }
    }
    return make_result(std::move(d), x->shape, {x}, [x, outer, inner, n](const Tensor& out) {
        if (!x->requires_grad) return;
        std::vector<double> g(out.grad.size());
        for (std::int64_t o = 0; o < outer; ++o) {
            for (std::int64_t in = 0; in < inner; ++in) {
                const std::int64_t base = o * n * inner + in;
                double dot = 0.0;
                for (std::int64_t i = 0; i < n; ++i) {
                    const std::int64_t idx = base + i * inner;
                    dot += out.grad[idx] * out.data[idx];
                }
                for (std::int64_t i = 0; i < n; ++i) {
                    const std::int64_t idx = base + i * inner;
                    g[idx] = out.data[idx] * (out.grad[idx] - dot);
                }
            }
        }
        x->accumulate_grad(g.data(), g.size());
    });
}

TensorPtr scaled_dot_attention(const TensorPtr& q, const TensorPtr& k, const TensorPtr& v,
                               std::int64_t d) {
    if (q->shape.size() != 2 || k->shape.size() != 2 || v->shape.size() != 2)
        throw DimensionError("scaled_dot_attention: rank-2 inputs required");
    if (q->shape[1] != k->shape[1]) dim_error("scaled_dot_attention q/k", q->shape, k->shape);
    if (k->shape[0] != v->shape[0]) dim_error("scaled_dot_attention k/v", k->shape, v->shape);
    auto scores = mul_scalar(matmul_nt(q, k), 1.0 / std::sqrt(static_cast<double>(d)));
    auto weights = softmax(scores, 1);
    return matmul(weights, v);
}

TensorPtr layer_norm(const TensorPtr& x, const TensorPtr& gain, const TensorPtr& shift,
                     double eps) {
    if (x->shape.empty()) throw DimensionError("layer_norm: rank >= 1 required");
    const std::int64_t d = x->shape.back();
    if (gain->size() != d || shift->size() != d)
        throw DimensionError("layer_norm: gain/shift length must equal last extent");
    const std::int64_t rows = x->size() / d;

    std::vector<double> out(x->data.size());
    std::vector<double> xhat(x->data.size());
    std::vector<double> inv_std(static_cast<std::size_t>(rows));
    for (std::int64_t r = 0; r < rows; ++r) {
        const double* xr = x->data.data() + r * d;
        double mu = 0.0;
        for (std::int64_t i = 0; i < d; ++i) mu += xr[i];
        mu /= static_cast<double>(d);
        double var = 0.0;
        for (std::int64_t i = 0; i < d; ++i) {
            const double c = xr[i] - mu;
            var += c * c;
        }
        var /= static_cast<double>(d);
        const double is = 1.0 / std::sqrt(var + eps);
        inv_std[static_cast<std::size_t>(r)] = is;
        for (std::int64_t i = 0; i < d; ++i) {
            const double h = (xr[i] - mu) * is;
            xhat[r * d + i] = h;
            out[r * d + i] = h * gain->data[i] + shift->data[i];
        }
    }
    return make_result(
        std::move(out), x->shape, {x, gain, shift},
        [x, gain, shift, rows, d, xhat = std::move(xhat),
         inv_std = std::move(inv_std)](const Tensor& out_t) {
            if (shift->requires_grad) {
                std::vector<double> g(static_cast<std::size_t>(d), 0.0);
                for (std::int64_t r = 0; r < rows; ++r)
                    for (std::int64_t i = 0; i < d; ++i) g[i] += out_t.grad[r * d + i];
                shift->accumulate_grad(g.data(), g.size());
            }
            if (gain->requires_grad) {
                std::vector<double> g(static_cast<std::size_t>(d), 0.0);
                for (std::int64_t r = 0; r < rows; ++r)
                    for (std::int64_t i = 0; i < d; ++i)
                        g[i] += out_t.grad[r * d + i] * xhat[r * d + i];
                gain->accumulate_grad(g.data(), g.size());
            }
            if (x->requires_grad) {
                std::vector<double> g(x->data.size());
                const double invd = 1.0 / static_cast<double>(d);
                for (std::int64_t r = 0; r < rows; ++r) {
                    double sum_dy = 0.0, sum_dy_xhat = 0.0;
                    for (std::int64_t i = 0; i < d; ++i) {
                        const double dy = out_t.grad[r * d + i] * gain->data[i];
                        sum_dy += dy;
                        sum_dy_xhat += dy * xhat[r * d + i];
                    }
                    const double is = inv_std[static_cast<std::size_t>(r)];
                    for (std::int64_t i = 0; i < d; ++i) {
                        const double dy = out_t.grad[r * d + i] * gain->data[i];
                        g[r * d + i] =
                            is * (dy - invd * sum_dy - xhat[r * d + i] * invd * sum_dy_xhat);
                    }
                }
                x->accumulate_grad(g.data(), g.size());
            }
        });
}

// ---- convolution / image layout ---------------------------------------------

TensorPtr conv2d(const TensorPtr& x, const TensorPtr& kernel, const TensorPtr& bias,
                 std::int64_t stride, std::int64_t pad) {
    if (x->shape.size() != 3 || kernel->shape.size() != 4)
        throw DimensionError("conv2d: expects x [C,H,W], kernel [O,C,kh,kw]");
    const std::int64_t ci = x->shape[0], h = x->shape[1], w = x->shape[2];
    const std::int64_t co = kernel->shape[0], kci = kernel->shape[1];
    const std::int64_t kh = kernel->shape[2], kw = kernel->shape[3];
    if (kci != ci) dim_error("conv2d channels", x->shape, kernel->shape);
    if (bias->size() != co) throw DimensionError("conv2d: bias length must equal C_out");
    if (stride < 1 || pad < 0) throw DimensionError("conv2d: invalid stride/pad");
    const std::int64_t ho = (h + 2 * pad - kh) / stride + 1;
    const std::int64_t wo = (w + 2 * pad - kw) / stride + 1;
    if (ho <= 0 || wo <= 0) throw DimensionError("conv2d: empty output");

    std::vector<double> out(static_cast<std::size_t>(co * ho * wo));
    for (std::int64_t oc = 0; oc < co; ++oc) {
        const double bv = bias->data[oc];
        for (std::int64_t oy = 0; oy < ho; ++oy) {
            const std::int64_t iy0 = oy * stride - pad;
            for (std::int64_t ox = 0; ox < wo; ++ox) {
                const std::int64_t ix0 = ox * stride - pad;
                double acc = bv;
                for (std::int64_t ic = 0; ic < ci; ++ic) {
                    const double* xc = x->data.data() + ic * h * w;
                    const double* kc = kernel->data.data() + (oc * ci + ic) * kh * kw;
                    const std::int64_t ky0 = std::max<std::int64_t>(0, -iy0);
                    const std::int64_t ky1 = std::min(kh, h - iy0);
                    for (std::int64_t ky = ky0; ky < ky1; ++ky) {
                        const double* xrow = xc + (iy0 + ky) * w;
                        const double* krow = kc + ky * kw;
                        const std::int64_t kx0 = std::max<std::int64_t>(0, -ix0);
                        const std::int64_t kx1 = std::min(kw, w - ix0);
                        for (std::int64_t kx = kx0; kx < kx1; ++kx)
                            acc += xrow[ix0 + kx] * krow[kx];
                    }
                }
                out[(oc * ho + oy) * wo + ox] = acc;
            }
        }
    }
    return make_result(
        std::move(out), {co, ho, wo}, {x, kernel, bias},
        [x, kernel, bias, ci, h, w, co, kh, kw, ho, wo, stride, pad](const Tensor& out_t) {
            if (bias->requires_grad) {
                std::vector<double> g(static_cast<std::size_t>(co), 0.0);
                for (std::int64_t oc = 0; oc < co; ++oc) {
                    const double* grow = out_t.grad.data() + oc * ho * wo;
                    double s = 0.0;
                    for (std::int64_t i = 0; i < ho * wo; ++i) s += grow[i];
                    g[oc] = s;
                }
                bias->accumulate_grad(g.data(), g.size());
            }
            const bool need_dx = x->requires_grad;
            const bool need_dk = kernel->requires_grad;
            if (!need_dx && !need_dk) return;
            std::vector<double> dx(need_dx ? x->data.size() : 0, 0.0);
            std::vector<double> dk(need_dk ? kernel->data.size() : 0, 0.0);
            for (std::int64_t oc = 0; oc < co; ++oc) {
                for (std::int64_t oy = 0; oy < ho; ++oy) {
                    const std::int64_t iy0 = oy * stride - pad;
                    for (std::int64_t ox = 0; ox < wo; ++ox) {
                        const std::int64_t ix0 = ox * stride - pad;
                        const double go = out_t.grad[(oc * ho + oy) * wo + ox];
                        if (go == 0.0) continue;
                        for (std::int64_t ic = 0; ic < ci; ++ic) {
                            const double* xc = x->data.data() + ic * h * w;
                            const double* kc =
                                kernel->data.data() + (oc * ci + ic) * kh * kw;
                            double* dxc = need_dx ? dx.data() + ic * h * w : nullptr;
                            double* dkc = need_dk ? dk.data() + (oc * ci + ic) * kh * kw
                                                  : nullptr;
                            const std::int64_t ky0 = std::max<std::int64_t>(0, -iy0);
                            const std::int64_t ky1 = std::min(kh, h - iy0);
                            for (std::int64_t ky = ky0; ky < ky1; ++ky) {
                                const std::int64_t iy = iy0 + ky;
                                const std::int64_t kx0 = std::max<std::int64_t>(0, -ix0);
                                const std::int64_t kx1 = std::min(kw, w - ix0);
                                for (std::int64_t kx = kx0; kx < kx1; ++kx) {
                                    const std::int64_t ix = ix0 + kx;
                                    if (need_dx)
                                        dxc[iy * w + ix] += kc[ky * kw + kx] * go;
                                    if (need_dk)
                                        dkc[ky * kw + kx] += xc[iy * w + ix] * go;
                                }
                            }
                        }
                    }
                }
            }
            if (need_dx) x->accumulate_grad(dx.data(), dx.size());
            if (need_dk) kernel->accumulate_grad(dk.data(), dk.size());
        });
}

TensorPtr conv1x1_tokens(const TensorPtr& x, const TensorPtr& kernel, const TensorPtr& bias) {
    if (x->shape.size() != 2 || kernel->shape.size() != 4 || kernel->shape[2] != 1 ||
        kernel->shape[3] != 1)
        throw DimensionError("conv1x1_tokens: expects x [n,C_in], kernel [C_out,C_in,1,1]");
    const std::int64_t n = x->shape[0], ci = x->shape[1], co = kernel->shape[0];
    if (kernel->shape[1] != ci) dim_error("conv1x1_tokens channels", x->shape, kernel->shape);
    if (bias->size() != co) throw DimensionError("conv1x1_tokens: bias length mismatch");

    std::vector<double> out(static_cast<std::size_t>(n * co));
    for (std::int64_t i = 0; i < n; ++i) {
        const double* xr = x->data.data() + i * ci;
        double* orow = out.data() + i * co;
        for (std::int64_t oc = 0; oc < co; ++oc) {
            const double* krow = kernel->data.data() + oc * ci;
            double s = bias->data[oc];
            for (std::int64_t c = 0; c < ci; ++c) s += xr[c] * krow[c];
            orow[oc] = s;
        }
    }
    return make_result(std::move(out), {n, co}, {x, kernel, bias},
                       [x, kernel, bias, n, ci, co](const Tensor& out_t) {
                           if (bias->requires_grad) {
                               std::vector<double> g(static_cast<std::size_t>(co), 0.0);
                               for (std::int64_t i = 0; i < n; ++i)
                                   for (std::int64_t oc = 0; oc < co; ++oc)
                                       g[oc] += out_t.grad[i * co + oc];
                               bias->accumulate_grad(g.data(), g.size());
                           }
                           if (x->requires_grad) {
                               std::vector<double> g(x->data.size(), 0.0);
                               for (std::int64_t i = 0; i < n; ++i)
                                   for (std::int64_t oc = 0; oc < co; ++oc) {
                                       const double gv = out_t.grad[i * co + oc];
                                       const double* krow = kernel->data.data() + oc * ci;
                                       for (std::int64_t c = 0; c < ci; ++c)
                                           g[i * ci + c] += gv * krow[c];
                                   }
                               x->accumulate_grad(g.data(), g.size());
                           }
                           if (kernel->requires_grad) {
                               std::vector<double> g(kernel->data.size(), 0.0);
                               for (std::int64_t i = 0; i < n; ++i)
                                   for (std::int64_t oc = 0; oc < co; ++oc) {
                                       const double gv = out_t.grad[i * co + oc];
                                       const double* xr = x->data.data() + i * ci;
                                       for (std::int64_t c = 0; c < ci; ++c)
                                           g[oc * ci + c] += gv * xr[c];
                                   }
                               kernel->accumulate_grad(g.data(), g.size());
                           }
                       });
}

TensorPtr upsample_nearest2(const TensorPtr& x) {
    if (x->shape.size() != 3) throw DimensionError("upsample_nearest2: expects [C,H,W]");
    const std::int64_t c = x->shape[0], h = x->shape[1], w = x->shape[2];
    std::vector<double> out(static_cast<std::size_t>(c * 4 * h * w));
    for (std::int64_t ch = 0; ch < c; ++ch)
        for (std::int64_t y = 0; y < h; ++y)
            for (std::int64_t xx = 0; xx < w; ++xx) {
                const double v = x->data[(ch * h + y) * w + xx];
                const std::int64_t base = (ch * 2 * h + 2 * y) * 2 * w + 2 * xx;
                out[base] = v;
                out[base + 1] = v;
                out[base + 2 * w] = v;
                out[base + 2 * w + 1] = v;
            }
    return make_result(std::move(out), {c, 2 * h, 2 * w}, {x}, [x, c, h, w](const Tensor& out_t) {
        if (!x->requires_grad) return;
        std::vector<double> g(x->data.size());
        for (std::int64_t ch = 0; ch < c; ++ch)
            for (std::int64_t y = 0; y < h; ++y)
                for (std::int64_t xx = 0; xx < w; ++xx) {
                    const std::int64_t base = (ch * 2 * h + 2 * y) * 2 * w + 2 * xx;
                    g[(ch * h + y) * w + xx] = out_t.grad[base] + out_t.grad[base + 1] +
                                               out_t.grad[base + 2 * w] +
                                               out_t.grad[base + 2 * w + 1];
                }
        x->accumulate_grad(g.data(), g.size());
    });
}

TensorPtr concat_channels(const TensorPtr& a, const TensorPtr& b) {
    if (a->shape.size() != 3 || b->shape.size() != 3 || a->shape[1] != b->shape[1] ||
        a->shape[2] != b->shape[2])
        dim_error("concat_channels", a->shape, b->shape);
    const std::int64_t ca = a->shape[0], cb = b->shape[0];
    const std::int64_t h = a->shape[1], w = a->shape[2];
    std::vector<double> out;
    out.reserve(a->data.size() + b->data.size());
    out.insert(out.end(), a->data.begin(), a->data.end());
    out.insert(out.end(), b->data.begin(), b->data.end());
    return make_result(std::move(out), {ca + cb, h, w}, {a, b}, [a, b](const Tensor& out_t) {
        a->accumulate_grad(out_t.grad.data(), a->data.size());
        b->accumulate_grad(out_t.grad.data() + a->data.size(), b->data.size());
    });
}

TensorPtr add_channel_bias(const TensorPtr& x, const TensorPtr& bias) {
    if (x->shape.size() != 3 || bias->size() != x->shape[0])
        throw DimensionError("add_channel_bias: bias length must equal channel count");
    const std::int64_t c = x->shape[0], hw = x->shape[1] * x->shape[2];
    std::vector<double> out(x->data.size());
    for (std::int64_t ch = 0; ch < c; ++ch) {
        const double bv = bias->data[ch];
        for (std::int64_t i = 0; i < hw; ++i) out[ch * hw + i] = x->data[ch * hw + i] + bv;
    }
    return make_result(std::move(out), x->shape, {x, bias}, [x, bias, c, hw](const Tensor& out_t) {
        x->accumulate_grad(out_t.grad.data(), out_t.grad.size());
        if (bias->requires_grad) {
            std::vector<double> g(static_cast<std::size_t>(c), 0.0);
            for (std::int64_t ch = 0; ch < c; ++ch) {
                double s = 0.0;
                for (std::int64_t i = 0; i < hw; ++i) s += out_t.grad[ch * hw + i];
                g[ch] = s;
            }
            bias->accumulate_grad(g.data(), g.size());
        }
    });
}

TensorPtr to_tokens(const TensorPtr& x) {
    if (x->shape.size() != 3) throw DimensionError("to_tokens: expects [C,H,W]");
    const std::int64_t c = x->shape[0], hw = x->shape[1] * x->shape[2];
    std::vector<double> out(x->data.size());
    for (std::int64_t ch = 0; ch < c; ++ch)
        for (std::int64_t i = 0; i < hw; ++i) out[i * c + ch] = x->data[ch * hw + i];
    return make_result(std::move(out), {hw, c}, {x}, [x, c, hw](const Tensor& out_t) {
        if (!x->requires_grad) return;
        std::vector<double> g(x->data.size());
        for (std::int64_t ch = 0; ch < c; ++ch)
            for (std::int64_t i = 0; i < hw; ++i) g[ch * hw + i] = out_t.grad[i * c + ch];
        x->accumulate_grad(g.data(), g.size());
    });
}

TensorPtr from_tokens(const TensorPtr& t, std::int64_t c, std::int64_t h, std::int64_t w) {
    if (t->shape.size() != 2 || t->shape[0] != h * w || t->shape[1] != c)
        throw DimensionError("from_tokens: token shape must be [H*W, C]");
    const std::int64_t hw = h * w;
    std::vector<double> out(t->data.size());
    for (std::int64_t ch = 0; ch < c; ++ch)
        for (std::int64_t i = 0; i < hw; ++i) out[ch * hw + i] = t->data[i * c + ch];
    return make_result(std::move(out), {c, h, w}, {t}, [t, c, hw](const Tensor& out_t) {
        if (!t->requires_grad) return;
        std::vector<double> g(t->data.size());
        for (std::int64_t ch = 0; ch < c; ++ch)
            for (std::int64_t i = 0; i < hw; ++i) g[i * c + ch] = out_t.grad[ch * hw + i];
        t->accumulate_grad(g.data(), g.size());
    });
}

// ---- token-sequence helpers ---------------------------------------------------

TensorPtr concat_rows(const TensorPtr& a, const TensorPtr& b) {
    if (a->shape.size() != 2 || b->shape.size() != 2 || a->shape[1] != b->shape[1])
        dim_error("concat_rows", a->shape, b->shape);
    std::vector<double> out;
    out.reserve(a->data.size() + b->data.size());
    out.insert(out.end(), a->data.begin(), a->data.end());
    out.insert(out.end(), b->data.begin(), b->data.end());
    return make_result(std::move(out), {a->shape[0] + b->shape[0], a->shape[1]}, {a, b},
                       [a, b](const Tensor& out_t) {
                           a->accumulate_grad(out_t.grad.data(), a->data.size());
                           b->accumulate_grad(out_t.grad.data() + a->data.size(),
                                              b->data.size());
                       });
}

TensorPtr slice_rows(const TensorPtr& x, std::int64_t begin, std::int64_t end) {
    if (x->shape.size() != 2 || begin < 0 || end > x->shape[0] || begin >= end)
        throw DimensionError("slice_rows: invalid range");
    const std::int64_t d = x->shape[1];
    std::vector<double> out(x->data.begin() + begin * d, x->data.begin() + end * d);
    return make_result(std::move(out), {end - begin, d}, {x},
                       [x, begin, d](const Tensor& out_t) {
                           if (!x->requires_grad) return;
                           std::vector<double> g(x->data.size(), 0.0);
                           std::copy(out_t.grad.begin(), out_t.grad.end(),
                                     g.begin() + begin * d);
                           x->accumulate_grad(g.data(), g.size());
                       });
}

TensorPtr mean_rows(const TensorPtr& x) {
    if (x->shape.size() != 2) throw DimensionError("mean_rows: expects [n,d]");
    const std::int64_t n = x->shape[0], d = x->shape[1];
    const double inv = 1.0 / static_cast<double>(n);
    std::vector<double> out(static_cast<std::size_t>(d), 0.0);
    for (std::int64_t i = 0; i < n; ++i)
        for (std::int64_t j = 0; j < d; ++j) out[j] += x->data[i * d + j];
    for (std::int64_t j = 0; j < d; ++j) out[j] *= inv;
    return make_result(std::move(out), {1, d}, {x}, [x, n, d, inv](const Tensor& out_t) {
        if (!x->requires_grad) return;
        std::vector<double> g(x->data.size());
        for (std::int64_t i = 0; i < n; ++i)
            for (std::int64_t j = 0; j < d; ++j) g[i * d + j] = out_t.grad[j] * inv;
        x->accumulate_grad(g.data(), g.size());
    });
}

TensorPtr add_row_broadcast(const TensorPtr& x, const TensorPtr& row) {
    if (x->shape.size() != 2 || row->shape.size() != 2 || row->shape[0] != 1 ||
        row->shape[1] != x->shape[1])
        dim_error("add_row_broadcast", x->shape, row->shape);
    const std::int64_t n = x->shape[0], d = x->shape[1];
    std::vector<double> out(x->data.size());
    for (std::int64_t i = 0; i < n; ++i)
        for (std::int64_t j = 0; j < d; ++j) out[i * d + j] = x->data[i * d + j] + row->data[j];
    return make_result(std::move(out), x->shape, {x, row}, [x, row, n, d](const Tensor& out_t) {
        x->accumulate_grad(out_t.grad.data(), out_t.grad.size());
        if (row->requires_grad) {
            std::vector<double> g(static_cast<std::size_t>(d), 0.0);
            for (std::int64_t i = 0; i < n; ++i)
                for (std::int64_t j = 0; j < d; ++j) g[j] += out_t.grad[i * d + j];
            row->accumulate_grad(g.data(), g.size());
        }
    });
}

}  // namespace uniview
