#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "morphctl/numerics/rng.hpp"
#include "morphctl/numerics/tape.hpp"

// Differentiable operations over Tape variables. Matrices are 2-D row-major
// tensors; "rows" below means the leading dimension.
namespace morphctl::ops {

// ---- dense kernels shared by the differentiable ops ----
// y[n, out] = x[n, in] * wt[in, out] (+ bias). Each output element is summed
// in ascending input order regardless of n, so a row's result never depends
// on what else is in the batch.
void matmul_wt(const double* x, const double* wt, const double* bias, double* y,
               std::size_t n, std::size_t in, std::size_t out);
// Row-wise max-subtracted softmax restricted to mask entries (mask may be null).
void softmax_row(const double* x, const std::uint8_t* mask, double* y, std::size_t m);

// ---- affine ----
// x[n, d_in], W[d_out, d_in], b[d_out] -> x W^T + b.
Var linear(Var x, Var w, Var b);
// Per-row parameters: row r of x uses params[index[r]], laid out as
// [wt (d_in x d_out, input-major), bias (d_out)].
Var nodewise_linear(Var x, Var params, std::vector<std::size_t> index,
                    std::size_t d_in, std::size_t d_out);

// ---- elementwise ----
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double s);
Var add_scalar(Var a, double s);
Var relu(Var a);
Var tanh(Var a);
Var exp(Var a);
Var square(Var a);
Var clamp(Var a, double lo, double hi);
Var minimum(Var a, Var b);

// ---- reductions and reshaping ----
Var sum(Var a);
Var mean(Var a);
Var reshape(Var a, std::vector<std::size_t> shape);
Var concat_cols(Var a, Var b);
// out[r] = x[index[r]]
Var gather_rows(Var x, std::vector<std::size_t> index);
// x[groups * per_group, c] -> mean over rows with mask set, per group: [groups, c].
Var masked_mean_rows(Var x, const Mask& mask, std::size_t groups);

// ---- normalization and attention ----
Var layer_norm(Var x, Var gain, Var bias, double eps = 1e-5);
Var softmax_rows(Var x);
// Masked entries come out exactly 0; a fully masked row is rejected.
Var masked_softmax_rows(Var x, const Mask& mask);
// q, k: [groups * n, heads * d_head] -> scaled scores [groups * heads * n, n],
// row (g, h, i) holding q_i . k_j / sqrt(d_head) for head h.
Var attention_scores(Var q, Var k, std::size_t groups, std::size_t n, std::size_t heads);
// probs [groups * heads * n, n], v [groups * n, heads * d_v] -> [groups * n, heads * d_v].
Var attention_mix(Var probs, Var v, std::size_t groups, std::size_t n, std::size_t heads);

// ---- distributions ----
// Diagonal Gaussian log density summed over the m action dimensions of every
// included row and over the rows of each group:
// actions, mu [groups * per_group, m], log_std [m] -> [groups].
Var gaussian_logprob(const Tensor& actions, Var mu, Var log_std, const Mask& include,
                     std::size_t groups);
// Single-vector form: a, mu, log_std all [m] -> scalar.
Var gaussian_logprob(const Tensor& a, Var mu, Var log_std);

// ---- dropout ----
struct DropoutResult {
  Var out;
  Mask mask;  // the mask actually applied
};
// With a supplied mask it is reused verbatim; otherwise a fresh mask is drawn
// from rng. Survivors are scaled by 1 / (1 - rate).
DropoutResult dropout(Var x, double rate, const Mask* mask, Rng* rng);

}  // namespace morphctl::ops
