#pragma once

#include <memory>
#include <vector>

#include "evoact/tensor.hpp"

namespace evoact {
namespace ops {

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, real c);

// a[M,K] * b[K,N]; BLAS-backed.
Tensor matmul(const Tensor& a, const Tensor& b);
// x[M,K] * W[K,N] + b[N] in one node.
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b);

// Per-row normalization with the biased 1/d variance convention.
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, real eps = real(1e-5));
// Same normalization without the affine pair (adaptive-norm blocks).
Tensor norm_rows(const Tensor& x, real eps = real(1e-5));

Tensor softmax_rows(const Tensor& x);
// axis 0 or 1 on 2-d tensors; 1-d tensors use axis 0.
Tensor softmax(const Tensor& x, int axis);

Tensor gelu(const Tensor& x);

Tensor sum_all(const Tensor& x);
// mean((a-b)^2) over all entries -> scalar.
Tensor mean_sq_diff(const Tensor& a, const Tensor& b);

Tensor concat_rows(const std::vector<Tensor>& parts);
Tensor slice_rows(const Tensor& x, int begin, int len);
// out[i] = table[ids[i]]; backward scatter-adds into the table.
Tensor gather_rows(const Tensor& table, const std::vector<int>& ids);

// x[B*G, d] + p[G, d] tiled over the B groups (position embeddings).
Tensor add_tiled(const Tensor& x, const Tensor& p, int group);
// Per-group modulation: y_r = x_r * (1 + s_b) + t_b with b = r / group.
Tensor rows_affine(const Tensor& x, const Tensor& s, const Tensor& t, int group);
// Per-group gate: y_r = x_r * g_b.
Tensor rows_gate(const Tensor& x, const Tensor& g, int group);

// Space-to-depth on a square token grid: [side*side, c] laid out row-major
// becomes [(side/f)^2, c*f*f], each output row the concatenation of its
// f x f input block in row-major block order. Pure index shuffle.
Tensor unshuffle_grid(const Tensor& x, int side, int f);

// Scaled dot-product attention over `batch` independent (Tq, Tkv) segments,
// heads packed along the feature dim. Stores per-head weights (needed for
// the backward pass; also served as diagnostics).
struct AttentionOut {
    Tensor out;                                  // [B*Tq, d]
    std::shared_ptr<std::vector<real>> weights;  // [B, heads, Tq, Tkv]
    int batch = 1;
    int heads = 1;
    int tq = 0;
    int tkv = 0;
};
AttentionOut attention_core(const Tensor& q, const Tensor& k, const Tensor& v, int batch, int n_heads);

// Interleaved [sin(t*f_0), cos(t*f_0), sin(t*f_1), ...] with dim/2 geometric
// frequencies spanning [1, 1e4]. Plain data tensor, no gradient.
Tensor sinusoidal_embedding(double t, int dim);

}  // namespace ops

class ParamStore;

// Full multi-head attention: Q/K/V/output projections around attention_core.
// Parameters live under `prefix` in the store (wq, bq, wk, bk, wv, bv, wo, bo).
// Self-attention is q_in == kv_in. `batch` splits the rows into independent
// segments of equal length.
struct MhaResult {
    Tensor out;
    std::shared_ptr<std::vector<real>> weights;  // [B, heads, Tq, Tkv]
    int batch = 1;
    int heads = 1;
    int tq = 0;
    int tkv = 0;

    // Head-averaged weights for segment b as a row-major Tq x Tkv matrix.
    std::vector<real> head_mean(int b) const;
};
MhaResult multi_head_attention(const Tensor& q_in, const Tensor& kv_in, ParamStore& store,
                               const std::string& prefix, int n_heads, int batch = 1);

}  // namespace evoact
