#include "evoact/ops.hpp"

#include <cblas.h>

#include <algorithm>
#include <cmath>
#include <cstring>

#include "evoact/param_store.hpp"

extern "C" void openblas_set_num_threads(int);

namespace evoact {
namespace ops {

namespace {

// Single BLAS thread: at these matrix sizes threading loses to sync
// overhead, and multi-threaded reductions change summation order, which
// would break run-to-run bitwise reproducibility.
struct BlasThreadPin {
    BlasThreadPin() { openblas_set_num_threads(1); }
};
const BlasThreadPin g_blas_pin;

void gemm(bool trans_a, bool trans_b, int m, int n, int k, real alpha, const real* a, int lda, const real* b,
          int ldb, real beta, real* c, int ldc) {
#ifdef EVOACT_REAL64
    cblas_dgemm(CblasRowMajor, trans_a ? CblasTrans : CblasNoTrans, trans_b ? CblasTrans : CblasNoTrans, m, n, k,
                alpha, a, lda, b, ldb, beta, c, ldc);
#else
    cblas_sgemm(CblasRowMajor, trans_a ? CblasTrans : CblasNoTrans, trans_b ? CblasTrans : CblasNoTrans, m, n, k,
                alpha, a, lda, b, ldb, beta, c, ldc);
#endif
}

Tensor make_node(std::vector<int> shape, std::vector<real> data, std::vector<Tensor> parents,
                 std::function<void(TensorImpl&)> fn) {
    Tensor out = Tensor::from(std::move(data), std::move(shape));
    bool need = false;
    if (grad_enabled()) {
        for (const auto& p : parents) need = need || p.requires_grad();
    }
    if (need) {
        out.impl()->requires_grad = true;
        for (auto& p : parents) out.impl()->parents.push_back(p.impl());
        out.impl()->backward_fn = std::move(fn);
    }
    return out;
}

void accumulate(TensorImpl& parent, const std::vector<real>& delta) {
    if (!parent.requires_grad) return;
    parent.ensure_grad();
    for (std::size_t i = 0; i < delta.size(); ++i) parent.grad[i] += delta[i];
}

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape()) {
        throw shape_error(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                          shape_str(b.shape()));
    }
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "add");
    std::vector<real> d(a.vec());
    for (std::size_t i = 0; i < d.size(); ++i) d[i] += b.vec()[i];
    return make_node(a.shape(), std::move(d), {a, b}, [](TensorImpl& self) {
        for (auto& p : self.parents) accumulate(*p, self.grad);
    });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "sub");
    std::vector<real> d(a.vec());
    for (std::size_t i = 0; i < d.size(); ++i) d[i] -= b.vec()[i];
    return make_node(a.shape(), std::move(d), {a, b}, [](TensorImpl& self) {
        accumulate(*self.parents[0], self.grad);
        TensorImpl& pb = *self.parents[1];
        if (pb.requires_grad) {
            pb.ensure_grad();
            for (std::size_t i = 0; i < self.grad.size(); ++i) pb.grad[i] -= self.grad[i];
        }
    });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "mul");
    std::vector<real> d(a.vec());
    for (std::size_t i = 0; i < d.size(); ++i) d[i] *= b.vec()[i];
    return make_node(a.shape(), std::move(d), {a, b}, [](TensorImpl& self) {
        TensorImpl& pa = *self.parents[0];
        TensorImpl& pb = *self.parents[1];
        if (pa.requires_grad) {
            pa.ensure_grad();
            for (std::size_t i = 0; i < self.grad.size(); ++i) pa.grad[i] += self.grad[i] * pb.data[i];
        }
        if (pb.requires_grad) {
            pb.ensure_grad();
            for (std::size_t i = 0; i < self.grad.size(); ++i) pb.grad[i] += self.grad[i] * pa.data[i];
        }
    });
}

Tensor scale(const Tensor& x, real c) {
    std::vector<real> d(x.vec());
    for (auto& v : d) v *= c;
    return make_node(x.shape(), std::move(d), {x}, [c](TensorImpl& self) {
        TensorImpl& p = *self.parents[0];
        if (!p.requires_grad) return;
        p.ensure_grad();
        for (std::size_t i = 0; i < self.grad.size(); ++i) p.grad[i] += self.grad[i] * c;
    });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.ndim() > 2 || b.ndim() != 2 || a.cols() != b.rows()) {
        throw shape_error("matmul: incompatible shapes " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
    }
    int m = a.rows(), k = a.cols(), n = b.cols();
    std::vector<real> d(static_cast<std::size_t>(m) * n);
    gemm(false, false, m, n, k, 1, a.data(), k, b.data(), n, 0, d.data(), n);
    return make_node({m, n}, std::move(d), {a, b}, [m, k, n](TensorImpl& self) {
        TensorImpl& pa = *self.parents[0];
        TensorImpl& pb = *self.parents[1];
        if (pa.requires_grad) {
            pa.ensure_grad();
            gemm(false, true, m, k, n, 1, self.grad.data(), n, pb.data.data(), n, 1, pa.grad.data(), k);
        }
        if (pb.requires_grad) {
            pb.ensure_grad();
            gemm(true, false, k, n, m, 1, pa.data.data(), k, self.grad.data(), n, 1, pb.grad.data(), n);
        }
    });
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
    if (w.ndim() != 2 || x.cols() != w.rows()) {
        throw shape_error("linear: input shape " + shape_str(x.shape()) + " does not match weight shape " +
                          shape_str(w.shape()));
    }
    if (b.numel() != w.cols()) {
        throw shape_error("linear: bias shape " + shape_str(b.shape()) + " does not match weight shape " +
                          shape_str(w.shape()));
    }
    int m = x.rows(), k = x.cols(), n = w.cols();
    std::vector<real> d(static_cast<std::size_t>(m) * n);
    for (int r = 0; r < m; ++r) std::memcpy(d.data() + static_cast<std::size_t>(r) * n, b.data(), sizeof(real) * n);
    gemm(false, false, m, n, k, 1, x.data(), k, w.data(), n, 1, d.data(), n);
    std::vector<int> out_shape = x.ndim() == 1 ? std::vector<int>{n} : std::vector<int>{m, n};
    return make_node(std::move(out_shape), std::move(d), {x, w, b}, [m, k, n](TensorImpl& self) {
        TensorImpl& px = *self.parents[0];
        TensorImpl& pw = *self.parents[1];
        TensorImpl& pb = *self.parents[2];
        if (px.requires_grad) {
            px.ensure_grad();
            gemm(false, true, m, k, n, 1, self.grad.data(), n, pw.data.data(), n, 1, px.grad.data(), k);
        }
        if (pw.requires_grad) {
            pw.ensure_grad();
            gemm(true, false, k, n, m, 1, px.data.data(), k, self.grad.data(), n, 1, pw.grad.data(), n);
        }
        if (pb.requires_grad) {
            pb.ensure_grad();
            for (int r = 0; r < m; ++r)
                for (int c = 0; c < n; ++c) pb.grad[c] += self.grad[static_cast<std::size_t>(r) * n + c];
        }
    });
}

namespace {

// Shared layer-norm kernel; gain/bias may be undefined (plain normalization).
Tensor layer_norm_impl(const Tensor& x, const Tensor& gain, const Tensor& bias, real eps, bool affine) {
    int m = x.rows(), dcols = x.cols();
    if (affine && (gain.numel() != dcols || bias.numel() != dcols)) {
        throw shape_error("layer_norm: gain/bias shape " + shape_str(gain.shape()) + "/" + shape_str(bias.shape()) +
                          " does not match feature dim of " + shape_str(x.shape()));
    }
    if (eps <= 0) throw config_error("layer_norm: eps must be positive");
    std::vector<real> d(x.vec().size());
    for (int r = 0; r < m; ++r) {
        const real* xr = x.data() + static_cast<std::size_t>(r) * dcols;
        real* yr = d.data() + static_cast<std::size_t>(r) * dcols;
        real mean = 0;
        for (int c = 0; c < dcols; ++c) mean += xr[c];
        mean /= dcols;
        real var = 0;
        for (int c = 0; c < dcols; ++c) {
            real t = xr[c] - mean;
            var += t * t;
        }
        var /= dcols;
        real inv = real(1) / std::sqrt(var + eps);
        for (int c = 0; c < dcols; ++c) {
            real xhat = (xr[c] - mean) * inv;
            yr[c] = affine ? xhat * gain.data()[c] + bias.data()[c] : xhat;
        }
    }
    std::vector<Tensor> parents = affine ? std::vector<Tensor>{x, gain, bias} : std::vector<Tensor>{x};
    return make_node(x.shape(), std::move(d), std::move(parents), [m, dcols, eps, affine](TensorImpl& self) {
        TensorImpl& px = *self.parents[0];
        TensorImpl* pg = affine ? self.parents[1].get() : nullptr;
        TensorImpl* pbias = affine ? self.parents[2].get() : nullptr;
        if (affine) {
            if (pg->requires_grad) pg->ensure_grad();
            if (pbias->requires_grad) pbias->ensure_grad();
        }
        if (px.requires_grad) px.ensure_grad();
        std::vector<real> xhat(static_cast<std::size_t>(dcols));
        std::vector<real> dxhat(static_cast<std::size_t>(dcols));
        for (int r = 0; r < m; ++r) {
            const real* xr = px.data.data() + static_cast<std::size_t>(r) * dcols;
            const real* gr = self.grad.data() + static_cast<std::size_t>(r) * dcols;
            real mean = 0;
            for (int c = 0; c < dcols; ++c) mean += xr[c];
            mean /= dcols;
            real var = 0;
            for (int c = 0; c < dcols; ++c) {
                real t = xr[c] - mean;
                var += t * t;
            }
            var /= dcols;
            real inv = real(1) / std::sqrt(var + eps);
            for (int c = 0; c < dcols; ++c) xhat[c] = (xr[c] - mean) * inv;
            if (affine) {
                for (int c = 0; c < dcols; ++c) {
                    if (pg->requires_grad) pg->grad[c] += gr[c] * xhat[c];
                    if (pbias->requires_grad) pbias->grad[c] += gr[c];
                }
            }
            if (!px.requires_grad) continue;
            real mean_dx = 0, mean_dxx = 0;
            for (int c = 0; c < dcols; ++c) {
                dxhat[c] = affine ? gr[c] * pg->data[c] : gr[c];
                mean_dx += dxhat[c];
                mean_dxx += dxhat[c] * xhat[c];
            }
            mean_dx /= dcols;
            mean_dxx /= dcols;
            real* pxg = px.grad.data() + static_cast<std::size_t>(r) * dcols;
            for (int c = 0; c < dcols; ++c) pxg[c] += inv * (dxhat[c] - mean_dx - xhat[c] * mean_dxx);
        }
    });
}

}  // namespace

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, real eps) {
    return layer_norm_impl(x, gain, bias, eps, true);
}

Tensor norm_rows(const Tensor& x, real eps) {
    return layer_norm_impl(x, Tensor(), Tensor(), eps, false);
}

Tensor softmax_rows(const Tensor& x) {
    int m = x.rows(), n = x.cols();
    std::vector<real> d(x.vec().size());
    for (int r = 0; r < m; ++r) {
        const real* xr = x.data() + static_cast<std::size_t>(r) * n;
        real* yr = d.data() + static_cast<std::size_t>(r) * n;
        real mx = xr[0];
        for (int c = 1; c < n; ++c) mx = std::max(mx, xr[c]);
        real sum = 0;
        for (int c = 0; c < n; ++c) {
            yr[c] = std::exp(xr[c] - mx);
            sum += yr[c];
        }
        for (int c = 0; c < n; ++c) yr[c] /= sum;
    }
    return make_node(x.shape(), std::move(d), {x}, [m, n](TensorImpl& self) {
        TensorImpl& px = *self.parents[0];
        if (!px.requires_grad) return;
        px.ensure_grad();
        for (int r = 0; r < m; ++r) {
            const real* yr = self.data.data() + static_cast<std::size_t>(r) * n;
            const real* gr = self.grad.data() + static_cast<std::size_t>(r) * n;
            real dot = 0;
            for (int c = 0; c < n; ++c) dot += gr[c] * yr[c];
            real* pxg = px.grad.data() + static_cast<std::size_t>(r) * n;
            for (int c = 0; c < n; ++c) pxg[c] += yr[c] * (gr[c] - dot);
        }
    });
}

Tensor softmax(const Tensor& x, int axis) {
    if (x.ndim() == 1) {
        if (axis != 0) throw shape_error("softmax: axis " + std::to_string(axis) + " invalid for 1-d tensor");
        return softmax_rows(x);
    }
    if (x.ndim() != 2 || (axis != 0 && axis != 1)) {
        throw shape_error("softmax: axis " + std::to_string(axis) + " invalid for shape " + shape_str(x.shape()));
    }
    if (axis == 1) return softmax_rows(x);
    int m = x.rows(), n = x.cols();
    std::vector<real> d(x.vec().size());
    for (int c = 0; c < n; ++c) {
        real mx = x.at(0, c);
        for (int r = 1; r < m; ++r) mx = std::max(mx, x.at(r, c));
        real sum = 0;
        for (int r = 0; r < m; ++r) {
            real e = std::exp(x.at(r, c) - mx);
            d[static_cast<std::size_t>(r) * n + c] = e;
            sum += e;
        }
        for (int r = 0; r < m; ++r) d[static_cast<std::size_t>(r) * n + c] /= sum;
    }
    return make_node(x.shape(), std::move(d), {x}, [m, n](TensorImpl& self) {
        TensorImpl& px = *self.parents[0];
        if (!px.requires_grad) return;
        px.ensure_grad();
        for (int c = 0; c < n; ++c) {
            real dot = 0;
            for (int r = 0; r < m; ++r) {
                std::size_t i = static_cast<std::size_t>(r) * n + c;
                dot += self.grad[i] * self.data[i];
            }
            for (int r = 0; r < m; ++r) {
                std::size_t i = static_cast<std::size_t>(r) * n + c;
                px.grad[i] += self.data[i] * (self.grad[i] - dot);
            }
        }
    });
}

Tensor gelu(const Tensor& x) {
    constexpr real kA = real(0.7978845608028654);  // sqrt(2/pi)
    constexpr real kC = real(0.044715);
    std::vector<real> d(x.vec().size());
    for (std::size_t i = 0; i < d.size(); ++i) {
        real v = x.vec()[i];
        d[i] = real(0.5) * v * (real(1) + std::tanh(kA * (v + kC * v * v * v)));
    }
    return make_node(x.shape(), std::move(d), {x}, [](TensorImpl& self) {
        TensorImpl& px = *self.parents[0];
        if (!px.requires_grad) return;
        px.ensure_grad();
        constexpr real a = real(0.7978845608028654);
        constexpr real c = real(0.044715);
        for (std::size_t i = 0; i < self.grad.size(); ++i) {
            real v = px.data[i];
            real th = std::tanh(a * (v + c * v * v * v));
            real deriv = real(0.5) * (real(1) + th) +
                         real(0.5) * v * (real(1) - th * th) * a * (real(1) + 3 * c * v * v);
            px.grad[i] += self.grad[i] * deriv;
        }
    });
}

Tensor sum_all(const Tensor& x) {
    real s = 0;
    for (real v : x.vec()) s += v;
    return make_node({1}, {s}, {x}, [](TensorImpl& self) {
        TensorImpl& px = *self.parents[0];
        if (!px.requires_grad) return;
        px.ensure_grad();
        for (auto& g : px.grad) g += self.grad[0];
    });
}

Tensor mean_sq_diff(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "mean_sq_diff");
    std::int64_t n = a.numel();
    real s = 0;
    for (std::int64_t i = 0; i < n; ++i) {
        real t = a.at(i) - b.at(i);
        s += t * t;
    }
    s /= static_cast<real>(n);
    return make_node({1}, {s}, {a, b}, [n](TensorImpl& self) {
        TensorImpl& pa = *self.parents[0];
        TensorImpl& pb = *self.parents[1];
        real g = self.grad[0] * 2 / static_cast<real>(n);
        if (pa.requires_grad) pa.ensure_grad();
        if (pb.requires_grad) pb.ensure_grad();
        for (std::int64_t i = 0; i < n; ++i) {
            real t = g * (pa.data[static_cast<std::size_t>(i)] - pb.data[static_cast<std::size_t>(i)]);
            if (pa.requires_grad) pa.grad[static_cast<std::size_t>(i)] += t;
            if (pb.requires_grad) pb.grad[static_cast<std::size_t>(i)] -= t;
        }
    });
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw shape_error("concat_rows: no parts");
    int n = parts[0].cols();
    int total = 0;
    for (const auto& p : parts) {
        if (p.cols() != n) {
            throw shape_error("concat_rows: column mismatch " + shape_str(parts[0].shape()) + " vs " +
                              shape_str(p.shape()));
        }
        total += p.rows();
    }
    std::vector<real> d;
    d.reserve(static_cast<std::size_t>(total) * n);
    for (const auto& p : parts) d.insert(d.end(), p.vec().begin(), p.vec().end());
    std::vector<int> row_counts;
    for (const auto& p : parts) row_counts.push_back(p.rows());
    return make_node({total, n}, std::move(d), parts, [row_counts, n](TensorImpl& self) {
        std::size_t offset = 0;
        for (std::size_t pi = 0; pi < self.parents.size(); ++pi) {
            TensorImpl& p = *self.parents[pi];
            std::size_t count = static_cast<std::size_t>(row_counts[pi]) * n;
            if (p.requires_grad) {
                p.ensure_grad();
                for (std::size_t i = 0; i < count; ++i) p.grad[i] += self.grad[offset + i];
            }
            offset += count;
        }
    });
}

Tensor slice_rows(const Tensor& x, int begin, int len) {
    int m = x.rows(), n = x.cols();
    if (begin < 0 || len <= 0 || begin + len > m) {
        throw shape_error("slice_rows: range [" + std::to_string(begin) + "," + std::to_string(begin + len) +
                          ") invalid for " + shape_str(x.shape()));
    }
    std::vector<real> d(x.vec().begin() + static_cast<std::size_t>(begin) * n,
                        x.vec().begin() + static_cast<std::size_t>(begin + len) * n);
    return make_node({len, n}, std::move(d), {x}, [begin, len, n](TensorImpl& self) {
        TensorImpl& px = *self.parents[0];
        if (!px.requires_grad) return;
        px.ensure_grad();
        std::size_t off = static_cast<std::size_t>(begin) * n;
        for (std::size_t i = 0; i < static_cast<std::size_t>(len) * n; ++i) px.grad[off + i] += self.grad[i];
    });
}

Tensor gather_rows(const Tensor& table, const std::vector<int>& ids) {
    int v = table.rows(), n = table.cols();
    std::vector<real> d(ids.size() * static_cast<std::size_t>(n));
    for (std::size_t i = 0; i < ids.size(); ++i) {
        if (ids[i] < 0 || ids[i] >= v) {
            throw shape_error("gather_rows: id " + std::to_string(ids[i]) + " out of range for table " +
                              shape_str(table.shape()));
        }
        std::memcpy(d.data() + i * n, table.data() + static_cast<std::size_t>(ids[i]) * n, sizeof(real) * n);
    }
    auto ids_copy = ids;
    return make_node({static_cast<int>(ids.size()), n}, std::move(d), {table},
                     [ids_copy, n](TensorImpl& self) {
                         TensorImpl& pt = *self.parents[0];
                         if (!pt.requires_grad) return;
                         pt.ensure_grad();
                         for (std::size_t i = 0; i < ids_copy.size(); ++i) {
                             real* dst = pt.grad.data() + static_cast<std::size_t>(ids_copy[i]) * n;
                             const real* src = self.grad.data() + i * n;
                             for (int c = 0; c < n; ++c) dst[c] += src[c];
                         }
                     });
}

Tensor add_tiled(const Tensor& x, const Tensor& p, int group) {
    int m = x.rows(), n = x.cols();
    if (p.rows() != group || p.cols() != n || m % group != 0) {
        throw shape_error("add_tiled: tile " + shape_str(p.shape()) + " incompatible with " + shape_str(x.shape()) +
                          " at group " + std::to_string(group));
    }
    std::vector<real> d(x.vec());
    for (int r = 0; r < m; ++r) {
        const real* pr = p.data() + static_cast<std::size_t>(r % group) * n;
        real* dr = d.data() + static_cast<std::size_t>(r) * n;
        for (int c = 0; c < n; ++c) dr[c] += pr[c];
    }
    return make_node(x.shape(), std::move(d), {x, p}, [m, n, group](TensorImpl& self) {
        TensorImpl& px = *self.parents[0];
        TensorImpl& pp = *self.parents[1];
        if (px.requires_grad) accumulate(px, self.grad);
        if (pp.requires_grad) {
            pp.ensure_grad();
            for (int r = 0; r < m; ++r) {
                real* dst = pp.grad.data() + static_cast<std::size_t>(r % group) * n;
                const real* src = self.grad.data() + static_cast<std::size_t>(r) * n;
                for (int c = 0; c < n; ++c) dst[c] += src[c];
            }
        }
    });
}

Tensor rows_affine(const Tensor& x, const Tensor& s, const Tensor& t, int group) {
    int m = x.rows(), n = x.cols();
    int b = m / group;
    if (group <= 0 || m % group != 0 || s.rows() != b || s.cols() != n || t.rows() != b || t.cols() != n) {
        throw shape_error("rows_affine: modulation " + shape_str(s.shape()) + "/" + shape_str(t.shape()) +
                          " incompatible with " + shape_str(x.shape()) + " at group " + std::to_string(group));
    }
    std::vector<real> d(x.vec().size());
    for (int r = 0; r < m; ++r) {
        int bi = r / group;
        const real* xr = x.data() + static_cast<std::size_t>(r) * n;
        const real* sr = s.data() + static_cast<std::size_t>(bi) * n;
        const real* tr = t.data() + static_cast<std::size_t>(bi) * n;
        real* dr = d.data() + static_cast<std::size_t>(r) * n;
        for (int c = 0; c < n; ++c) dr[c] = xr[c] * (real(1) + sr[c]) + tr[c];
    }
    return make_node(x.shape(), std::move(d), {x, s, t}, [m, n, group](TensorImpl& self) {
        TensorImpl& px = *self.parents[0];
        TensorImpl& ps = *self.parents[1];
        TensorImpl& pt = *self.parents[2];
        if (px.requires_grad) px.ensure_grad();
        if (ps.requires_grad) ps.ensure_grad();
        if (pt.requires_grad) pt.ensure_grad();
        for (int r = 0; r < m; ++r) {
            int bi = r / group;
            const real* gr = self.grad.data() + static_cast<std::size_t>(r) * n;
            const real* xr = px.data.data() + static_cast<std::size_t>(r) * n;
            const real* sr = ps.data.data() + static_cast<std::size_t>(bi) * n;
            for (int c = 0; c < n; ++c) {
                if (px.requires_grad) px.grad[static_cast<std::size_t>(r) * n + c] += gr[c] * (real(1) + sr[c]);
                if (ps.requires_grad) ps.grad[static_cast<std::size_t>(bi) * n + c] += gr[c] * xr[c];
                if (pt.requires_grad) pt.grad[static_cast<std::size_t>(bi) * n + c] += gr[c];
            }
        }
    });
}

Tensor rows_gate(const Tensor& x, const Tensor& g, int group) {
    int m = x.rows(), n = x.cols();
    int b = m / group;
    if (group <= 0 || m % group != 0 || g.rows() != b || g.cols() != n) {
        throw shape_error("rows_gate: gate " + shape_str(g.shape()) + " incompatible with " + shape_str(x.shape()) +
                          " at group " + std::to_string(group));
    }
    std::vector<real> d(x.vec().size());
    for (int r = 0; r < m; ++r) {
        int bi = r / group;
        const real* xr = x.data() + static_cast<std::size_t>(r) * n;
        const real* gr = g.data() + static_cast<std::size_t>(bi) * n;
        real* dr = d.data() + static_cast<std::size_t>(r) * n;
        for (int c = 0; c < n; ++c) dr[c] = xr[c] * gr[c];
    }
    return make_node(x.shape(), std::move(d), {x, g}, [m, n, group](TensorImpl& self) {
        TensorImpl& px = *self.parents[0];
        TensorImpl& pg = *self.parents[1];
        if (px.requires_grad) px.ensure_grad();
        if (pg.requires_grad) pg.ensure_grad();
        for (int r = 0; r < m; ++r) {
            int bi = r / group;
            const real* gr = self.grad.data() + static_cast<std::size_t>(r) * n;
            const real* xr = px.data.data() + static_cast<std::size_t>(r) * n;
            const real* gg = pg.data.data() + static_cast<std::size_t>(bi) * n;
            for (int c = 0; c < n; ++c) {
                if (px.requires_grad) px.grad[static_cast<std::size_t>(r) * n + c] += gr[c] * gg[c];
                if (pg.requires_grad) pg.grad[static_cast<std::size_t>(bi) * n + c] += gr[c] * xr[c];
            }
        }
    });
}

Tensor unshuffle_grid(const Tensor& x, int side, int f) {
    int c = x.cols();
    if (f <= 0 || side <= 0 || x.rows() != side * side) {
        throw shape_error("unshuffle_grid: " + shape_str(x.shape()) + " is not a " + std::to_string(side) + "x" +
                          std::to_string(side) + " grid");
    }
    if (side % f != 0) {
        throw config_error("unshuffle_grid: grid side " + std::to_string(side) + " not divisible by factor " +
                           std::to_string(f));
    }
    int out_side = side / f;
    int out_c = c * f * f;
    // Flat index permutation: output row (R,C), block cell (i,j), channel ch
    // reads input row (R*f+i)*side + C*f+j, channel ch.
    std::vector<std::size_t> src_index(static_cast<std::size_t>(out_side) * out_side * out_c);
    std::size_t k = 0;
    for (int R = 0; R < out_side; ++R) {
        for (int C = 0; C < out_side; ++C) {
            for (int i = 0; i < f; ++i) {
                for (int j = 0; j < f; ++j) {
                    std::size_t in_row = static_cast<std::size_t>(R * f + i) * side + (C * f + j);
                    for (int ch = 0; ch < c; ++ch) src_index[k++] = in_row * c + ch;
                }
            }
        }
    }
    std::vector<real> d(src_index.size());
    for (std::size_t i = 0; i < d.size(); ++i) d[i] = x.vec()[src_index[i]];
    auto idx = std::make_shared<std::vector<std::size_t>>(std::move(src_index));
    return make_node({out_side * out_side, out_c}, std::move(d), {x}, [idx](TensorImpl& self) {
        TensorImpl& px = *self.parents[0];
        if (!px.requires_grad) return;
        px.ensure_grad();
        for (std::size_t i = 0; i < self.grad.size(); ++i) px.grad[(*idx)[i]] += self.grad[i];
    });
}

AttentionOut attention_core(const Tensor& q, const Tensor& k, const Tensor& v, int batch, int n_heads) {
    int d = q.cols();
    if (k.cols() != d || v.cols() != d) {
        throw shape_error("attention_core: feature dims differ: " + shape_str(q.shape()) + " " +
                          shape_str(k.shape()) + " " + shape_str(v.shape()));
    }
    if (n_heads <= 0 || d % n_heads != 0) {
        throw config_error("attention_core: width " + std::to_string(d) + " not divisible by " +
                           std::to_string(n_heads) + " heads");
    }
    if (batch <= 0 || q.rows() % batch != 0 || k.rows() % batch != 0 || k.rows() != v.rows()) {
        throw shape_error("attention_core: rows " + shape_str(q.shape()) + "/" + shape_str(k.shape()) +
                          " not divisible into " + std::to_string(batch) + " segments");
    }
    int tq = q.rows() / batch;
    int tkv = k.rows() / batch;
    int dh = d / n_heads;
    real att_scale = real(1) / std::sqrt(static_cast<real>(dh));

    auto weights = std::make_shared<std::vector<real>>(
        static_cast<std::size_t>(batch) * n_heads * tq * tkv);
    std::vector<real> out(static_cast<std::size_t>(batch) * tq * d, real(0));

    std::vector<real> scores(static_cast<std::size_t>(tq) * tkv);
    for (int b = 0; b < batch; ++b) {
        for (int h = 0; h < n_heads; ++h) {
            const real* qs = q.data() + static_cast<std::size_t>(b) * tq * d + static_cast<std::size_t>(h) * dh;
            const real* ks = k.data() + static_cast<std::size_t>(b) * tkv * d + static_cast<std::size_t>(h) * dh;
            const real* vs = v.data() + static_cast<std::size_t>(b) * tkv * d + static_cast<std::size_t>(h) * dh;
            gemm(false, true, tq, tkv, dh, att_scale, qs, d, ks, d, 0, scores.data(), tkv);
            real* w = weights->data() + (static_cast<std::size_t>(b) * n_heads + h) * tq * tkv;
            for (int r = 0; r < tq; ++r) {
                real* sr = scores.data() + static_cast<std::size_t>(r) * tkv;
                real mx = sr[0];
                for (int c = 1; c < tkv; ++c) mx = std::max(mx, sr[c]);
                real sum = 0;
                real* wr = w + static_cast<std::size_t>(r) * tkv;
                for (int c = 0; c < tkv; ++c) {
                    wr[c] = std::exp(sr[c] - mx);
                    sum += wr[c];
                }
                for (int c = 0; c < tkv; ++c) wr[c] /= sum;
            }
            real* os = out.data() + static_cast<std::size_t>(b) * tq * d + static_cast<std::size_t>(h) * dh;
            gemm(false, false, tq, dh, tkv, 1, w, tkv, vs, d, 0, os, d);
        }
    }

    AttentionOut result;
    result.batch = batch;
    result.heads = n_heads;
    result.tq = tq;
    result.tkv = tkv;
    result.weights = weights;
    result.out = make_node({batch * tq, d}, std::move(out), {q, k, v},
                           [batch, n_heads, tq, tkv, dh, d, att_scale, weights](TensorImpl& self) {
        TensorImpl& pq = *self.parents[0];
        TensorImpl& pk = *self.parents[1];
        TensorImpl& pv = *self.parents[2];
        if (pq.requires_grad) pq.ensure_grad();
        if (pk.requires_grad) pk.ensure_grad();
        if (pv.requires_grad) pv.ensure_grad();
        std::vector<real> dw(static_cast<std::size_t>(tq) * tkv);
        std::vector<real> ds(static_cast<std::size_t>(tq) * tkv);
        for (int b = 0; b < batch; ++b) {
            for (int h = 0; h < n_heads; ++h) {
                const real* w = weights->data() + (static_cast<std::size_t>(b) * n_heads + h) * tq * tkv;
                const real* go = self.grad.data() + static_cast<std::size_t>(b) * tq * d + static_cast<std::size_t>(h) * dh;
                const real* qs = pq.data.data() + static_cast<std::size_t>(b) * tq * d + static_cast<std::size_t>(h) * dh;
                const real* ks = pk.data.data() + static_cast<std::size_t>(b) * tkv * d + static_cast<std::size_t>(h) * dh;
                const real* vs = pv.data.data() + static_cast<std::size_t>(b) * tkv * d + static_cast<std::size_t>(h) * dh;
                // dW = dOut * V^T
                gemm(false, true, tq, tkv, dh, 1, go, d, vs, d, 0, dw.data(), tkv);
                if (pv.requires_grad) {
                    real* vg = pv.grad.data() + static_cast<std::size_t>(b) * tkv * d + static_cast<std::size_t>(h) * dh;
                    gemm(true, false, tkv, dh, tq, 1, w, tkv, go, d, 1, vg, d);
                }
                // softmax jacobian per row
                for (int r = 0; r < tq; ++r) {
                    const real* wr = w + static_cast<std::size_t>(r) * tkv;
                    const real* dwr = dw.data() + static_cast<std::size_t>(r) * tkv;
                    real* dsr = ds.data() + static_cast<std::size_t>(r) * tkv;
                    real dot = 0;
                    for (int c = 0; c < tkv; ++c) dot += dwr[c] * wr[c];
                    for (int c = 0; c < tkv; ++c) dsr[c] = wr[c] * (dwr[c] - dot);
                }
                if (pq.requires_grad) {
                    real* qg = pq.grad.data() + static_cast<std::size_t>(b) * tq * d + static_cast<std::size_t>(h) * dh;
                    gemm(false, false, tq, dh, tkv, att_scale, ds.data(), tkv, ks, d, 1, qg, d);
                }
                if (pk.requires_grad) {
                    real* kg = pk.grad.data() + static_cast<std::size_t>(b) * tkv * d + static_cast<std::size_t>(h) * dh;
                    gemm(true, false, tkv, dh, tq, att_scale, ds.data(), tkv, qs, d, 1, kg, d);
                }
            }
        }
    });
    return result;
}

Tensor sinusoidal_embedding(double t, int dim) {
    if (dim <= 0 || dim % 2 != 0) {
        throw config_error("sinusoidal_embedding: dim must be a positive even integer, got " + std::to_string(dim));
    }
    int half = dim / 2;
    std::vector<real> d(static_cast<std::size_t>(dim));
    for (int i = 0; i < half; ++i) {
        double freq = half > 1 ? std::pow(1e4, static_cast<double>(i) / (half - 1)) : 1.0;
        d[static_cast<std::size_t>(2 * i)] = static_cast<real>(std::sin(t * freq));
        d[static_cast<std::size_t>(2 * i) + 1] = static_cast<real>(std::cos(t * freq));
    }
    return Tensor::from(std::move(d), {dim});
}

}  // namespace ops

std::vector<real> MhaResult::head_mean(int b) const {
    std::vector<real> avg(static_cast<std::size_t>(tq) * tkv, real(0));
    for (int h = 0; h < heads; ++h) {
        const real* w = weights->data() + (static_cast<std::size_t>(b) * heads + h) * tq * tkv;
        for (std::size_t i = 0; i < avg.size(); ++i) avg[i] += w[i];
    }
    for (auto& v : avg) v /= static_cast<real>(heads);
    return avg;
}

MhaResult multi_head_attention(const Tensor& q_in, const Tensor& kv_in, ParamStore& store,
                               const std::string& prefix, int n_heads, int batch) {
    Tensor q = ops::linear(q_in, store.get(prefix + ".wq"), store.get(prefix + ".bq"));
    Tensor k = ops::linear(kv_in, store.get(prefix + ".wk"), store.get(prefix + ".bk"));
    Tensor v = ops::linear(kv_in, store.get(prefix + ".wv"), store.get(prefix + ".bv"));
    ops::AttentionOut att = ops::attention_core(q, k, v, batch, n_heads);
    MhaResult res;
    res.out = ops::linear(att.out, store.get(prefix + ".wo"), store.get(prefix + ".bo"));
    res.weights = att.weights;
    res.batch = att.batch;
    res.heads = att.heads;
    res.tq = att.tq;
    res.tkv = att.tkv;
    return res;
}

}  // namespace evoact
