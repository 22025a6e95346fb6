#pragma once

#include <cstddef>
#include <vector>

#include "omniclip/autodiff.hpp"

namespace omniclip {

// ---- elementwise / broadcast ----
// add/sub/mul broadcast numpy-style (right-aligned, 1-extents stretch).
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double c);
Var gelu(const Var& x);

// ---- linear algebra ----
// Batched contraction over the last two axes; batch extents broadcast.
Var matmul(const Var& a, const Var& b);
// a @ b^T with b: [..., n, k]; saves the explicit transpose in attention.
Var matmul_nt(const Var& a, const Var& b);
// x @ w + b with w: [in, out], b: [out].
Var linear(const Var& x, const Var& w, const Var& b);

// ---- normalization / reductions ----
Var softmax(const Var& x, int axis);
Var log_softmax(const Var& x, int axis);
Var layer_norm(const Var& x, const Var& gamma, const Var& beta, double eps = 1e-5);
Var l2_normalize(const Var& x); // last axis; throws NumericError on zero norm
Var mean(const Var& x, std::size_t axis);
Var sum(const Var& x, std::size_t axis);
Var mean_all(const Var& x); // rank-0 output

// ---- data movement ----
Var reshape(const Var& x, Shape s);
Var transpose(const Var& x, const std::vector<std::size_t>& perm);
Var concat(const std::vector<Var>& xs, std::size_t axis);
Var slice(const Var& x, std::size_t axis, std::size_t start, std::size_t len);
Var expand(const Var& x, const Shape& target); // broadcast materialize
Var gather_rows(const Var& table, const std::vector<std::size_t>& rows);

// ---- pooling over a [..., s, s, d] grid ----
Var avg_pool_2x2(const Var& grid);
Var max_pool_2x2(const Var& grid);

// ---- order-canonical reductions ----
// These sum in IEEE total order of the summand values instead of index
// order, so results are invariant under permutations of the reduced axis.
// Used by the frame aggregator, where permutation invariance is a contract.
Var softmax_canon(const Var& x); // last axis
Var matmul_canon(const Var& a, const Var& b);
Var mean_canon(const Var& x, std::size_t axis);

// ---- attention ----
// No key bias: softmax is invariant to per-query score shifts, so a key
// bias is a pure no-op direction with identically zero gradient.
struct MhaParams {
    Var wq, bq, wk, wv, bv, wo, bo;
    std::size_t heads = 1;
};

// Scaled dot-product attention over the second-to-last axis, any number of
// leading batch axes. `attn` (optional) receives the softmax weights
// [..., heads, n, n]; `canonical` switches the sequence-axis reductions to
// the order-canonical primitives above.
Var multi_head_attention(const Var& x, const MhaParams& p, Var* attn = nullptr, bool canonical = false);

} // namespace omniclip
