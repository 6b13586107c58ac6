#include "morphctl/numerics/ops.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numbers>
#include <string>

namespace morphctl::ops {

namespace {

// The message is only built on failure; these checks sit on hot paths.
#define MORPHCTL_REQUIRE(ok, what)      \
  do {                                  \
    if (!(ok)) throw ShapeError(what);  \
  } while (0)

void require_matrix(const Tensor& t, const char* op, const char* arg) {
  MORPHCTL_REQUIRE(t.rank() == 2, std::string(op) + ": " + arg + " must be a matrix, got shape " +
                             shape_string(t.shape()));
}

void require_same_size(const Tensor& a, const Tensor& b, const char* op) {
  MORPHCTL_REQUIRE(a.size() == b.size(), std::string(op) + ": shape mismatch " +
                                    shape_string(a.shape()) + " vs " + shape_string(b.shape()));
}

Tape& tape_of(Var a) {
  if (a.tape == nullptr) throw std::invalid_argument("operation on an unbound variable");
  return *a.tape;
}

void same_tape(Var a, Var b) {
  if (a.tape != b.tape) throw std::invalid_argument("variables recorded on different tapes");
}

template <typename F>
Var unary(Var a, Tensor out, F local_grad) {
  Tape& t = tape_of(a);
  const int ia = a.id;
  const int io = static_cast<int>(t.size());
  Tape* tp = &t;
  return t.record(std::move(out), {ia},
                  [tp, ia, io, local_grad](const Tensor& g, std::span<Tensor* const> gi) {
                    const Tensor& x = tp->value(ia);
                    const Tensor& y = tp->value(io);
                    Tensor& gx = *gi[0];
                    for (std::size_t k = 0; k < g.size(); ++k) {
                      gx[k] += g[k] * local_grad(x[k], y[k]);
                    }
                  });
}

}  // namespace

// ---------------------------------------------------------------- kernels

namespace {

// Register-blocked tile: R rows of x against NV vectors of output columns.
// Every output element is still accumulated from 0 in ascending k, so the
// tile shape never changes the result (contraction is disabled globally).
using Vec8 = double __attribute__((vector_size(64)));
constexpr std::size_t kLanes = 8;

template <std::size_t R, std::size_t NV>
inline void tile(const double* x, std::size_t in, const double* wt, std::size_t out, double* y,
                 std::size_t o0) {
  Vec8 acc[R][NV] = {};
  for (std::size_t k = 0; k < in; ++k) {
    const double* wk = wt + k * out + o0;
    Vec8 w[NV];
    for (std::size_t c = 0; c < NV; ++c) std::memcpy(&w[c], wk + c * kLanes, sizeof(Vec8));
    for (std::size_t r = 0; r < R; ++r) {
      const double xk = x[r * in + k];
      for (std::size_t c = 0; c < NV; ++c) acc[r][c] += xk * w[c];
    }
  }
  for (std::size_t r = 0; r < R; ++r) {
    for (std::size_t c = 0; c < NV; ++c) {
      std::memcpy(y + r * out + o0 + c * kLanes, &acc[r][c], sizeof(Vec8));
    }
  }
}

template <std::size_t R>
inline void row_block(const double* x, std::size_t in, const double* wt, std::size_t out,
                      double* y) {
  std::size_t o = 0;
  for (; o + 2 * kLanes <= out; o += 2 * kLanes) tile<R, 2>(x, in, wt, out, y, o);
  for (; o + kLanes <= out; o += kLanes) tile<R, 1>(x, in, wt, out, y, o);
  for (; o < out; ++o) {
    for (std::size_t r = 0; r < R; ++r) {
      double acc = 0.0;
      for (std::size_t k = 0; k < in; ++k) acc += x[r * in + k] * wt[k * out + o];
      y[r * out + o] = acc;
    }
  }
}

}  // namespace

void matmul_wt(const double* x, const double* wt, const double* bias, double* y,
               std::size_t n, std::size_t in, std::size_t out) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) row_block<4>(x + i * in, in, wt, out, y + i * out);
  for (; i < n; ++i) row_block<1>(x + i * in, in, wt, out, y + i * out);
  if (bias != nullptr) {
    for (std::size_t r = 0; r < n; ++r) {
      double* yr = y + r * out;
      for (std::size_t o = 0; o < out; ++o) yr[o] += bias[o];
    }
  }
}

void softmax_row(const double* x, const std::uint8_t* mask, double* y, std::size_t m) {
  double mx = -std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < m; ++j) {
    if (mask == nullptr || mask[j]) mx = std::max(mx, x[j]);
  }
  MORPHCTL_REQUIRE(mx != -std::numeric_limits<double>::infinity(),
          "masked_softmax_rows: row has no unmasked entry");
  double total = 0.0;
  for (std::size_t j = 0; j < m; ++j) {
    if (mask == nullptr || mask[j]) {
      y[j] = std::exp(x[j] - mx);
      total += y[j];
    } else {
      y[j] = 0.0;
    }
  }
  const double inv = 1.0 / total;
  for (std::size_t j = 0; j < m; ++j) y[j] *= inv;
}

// ---------------------------------------------------------------- affine

Var linear(Var x, Var w, Var b) {
  same_tape(x, w);
  same_tape(x, b);
  Tape& t = tape_of(x);
  const Tensor& xv = x.value();
  const Tensor& wv = w.value();
  const Tensor& bv = b.value();
  require_matrix(xv, "linear", "x");
  require_matrix(wv, "linear", "W");
  const std::size_t n = xv.dim(0), in = xv.dim(1), out = wv.dim(0);
  MORPHCTL_REQUIRE(wv.dim(1) == in, "linear: x has " + std::to_string(in) + " columns but W is " +
                               shape_string(wv.shape()));
  MORPHCTL_REQUIRE(bv.size() == out, "linear: bias of shape " + shape_string(bv.shape()) +
                                " does not match W " + shape_string(wv.shape()));

  Tensor wt = Tensor::uninitialized({in, out});
  for (std::size_t o = 0; o < out; ++o) {
    for (std::size_t k = 0; k < in; ++k) wt.at(k, o) = wv.at(o, k);
  }
  Tensor y = Tensor::uninitialized({n, out});
  matmul_wt(xv.data(), wt.data(), bv.data(), y.data(), n, in, out);

  Tape* tp = &t;
  const int ix = x.id, iw = w.id;
  return t.record(std::move(y), {x.id, w.id, b.id},
                  [tp, ix, iw, n, in, out](const Tensor& g, std::span<Tensor* const> gi) {
                    const Tensor& xv = tp->value(ix);
                    const Tensor& wv = tp->value(iw);
                    if (gi[0] != nullptr) {
                      Tensor dx = Tensor::uninitialized({n, in});
                      matmul_wt(g.data(), wv.data(), nullptr, dx.data(), n, out, in);
                      Tensor& gx = *gi[0];
                      for (std::size_t k = 0; k < dx.size(); ++k) gx[k] += dx[k];
                    }
                    if (gi[1] != nullptr) {
                      // dW = g^T x, as a [out, n] x [n, in] product.
                      Tensor gt = Tensor::uninitialized({out, n});
                      for (std::size_t i = 0; i < n; ++i) {
                        for (std::size_t o = 0; o < out; ++o) gt[o * n + i] = g[i * out + o];
                      }
                      Tensor dw = Tensor::uninitialized({out, in});
                      matmul_wt(gt.data(), xv.data(), nullptr, dw.data(), out, n, in);
                      Tensor& gw = *gi[1];
                      for (std::size_t k = 0; k < dw.size(); ++k) gw[k] += dw[k];
                    }
                    if (gi[2] != nullptr) {
                      Tensor& gb = *gi[2];
                      for (std::size_t i = 0; i < n; ++i) {
                        const double* gr = g.row(i);
                        for (std::size_t o = 0; o < out; ++o) gb[o] += gr[o];
                      }
                    }
                  });
}

Var nodewise_linear(Var x, Var params, std::vector<std::size_t> index, std::size_t d_in,
                    std::size_t d_out) {
  same_tape(x, params);
  Tape& t = tape_of(x);
  const Tensor& xv = x.value();
  const Tensor& pv = params.value();
  require_matrix(xv, "nodewise_linear", "x");
  require_matrix(pv, "nodewise_linear", "params");
  const std::size_t n = xv.dim(0);
  const std::size_t stride = d_in * d_out + d_out;
  MORPHCTL_REQUIRE(xv.dim(1) == d_in, "nodewise_linear: x has " + std::to_string(xv.dim(1)) +
                                 " columns, expected " + std::to_string(d_in));
  MORPHCTL_REQUIRE(pv.dim(1) == stride, "nodewise_linear: parameter rows have " +
                                   std::to_string(pv.dim(1)) + " entries, expected " +
                                   std::to_string(stride));
  MORPHCTL_REQUIRE(index.size() == n, "nodewise_linear: index length does not match rows of x");
  for (std::size_t r : index) MORPHCTL_REQUIRE(r < pv.dim(0), "nodewise_linear: index out of range");

  Tensor y = Tensor::uninitialized({n, d_out});
  for (std::size_t r = 0; r < n; ++r) {
    const double* p = pv.row(index[r]);
    matmul_wt(xv.row(r), p, p + d_in * d_out, y.row(r), 1, d_in, d_out);
  }
  Tape* tp = &t;
  const int ix = x.id, ip = params.id;
  return t.record(
      std::move(y), {x.id, params.id},
      [tp, ix, ip, index = std::move(index), n, d_in, d_out](const Tensor& g,
                                                             std::span<Tensor* const> gi) {
        const Tensor& xv = tp->value(ix);
        const Tensor& pv = tp->value(ip);
        for (std::size_t r = 0; r < n; ++r) {
          const double* gr = g.row(r);
          if (gi[0] != nullptr) {
            const double* wt = pv.row(index[r]);
            double* gx = gi[0]->row(r);
            for (std::size_t k = 0; k < d_in; ++k) {
              const double* wk = wt + k * d_out;
              double acc = 0.0;
              for (std::size_t o = 0; o < d_out; ++o) acc += wk[o] * gr[o];
              gx[k] += acc;
            }
          }
          if (gi[1] != nullptr) {
            double* gp = gi[1]->row(index[r]);
            const double* xr = xv.row(r);
            for (std::size_t k = 0; k < d_in; ++k) {
              const double xk = xr[k];
              double* gk = gp + k * d_out;
              for (std::size_t o = 0; o < d_out; ++o) gk[o] += xk * gr[o];
            }
            double* gb = gp + d_in * d_out;
            for (std::size_t o = 0; o < d_out; ++o) gb[o] += gr[o];
          }
        }
      });
}

// ---------------------------------------------------------------- elementwise

namespace {

template <typename F, typename GA, typename GB>
Var binary(Var a, Var b, const char* name, F f, GA ga, GB gb) {
  same_tape(a, b);
  Tape& t = tape_of(a);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  require_same_size(av, bv, name);
  Tensor out = Tensor::uninitialized(av.shape());
  for (std::size_t k = 0; k < out.size(); ++k) out[k] = f(av[k], bv[k]);
  Tape* tp = &t;
  const int ia = a.id, ib = b.id;
  return t.record(std::move(out), {a.id, b.id},
                  [tp, ia, ib, ga, gb](const Tensor& g, std::span<Tensor* const> gi) {
                    const Tensor& av = tp->value(ia);
                    const Tensor& bv = tp->value(ib);
                    if (gi[0] != nullptr) {
                      for (std::size_t k = 0; k < g.size(); ++k) {
                        (*gi[0])[k] += g[k] * ga(av[k], bv[k]);
                      }
                    }
                    if (gi[1] != nullptr) {
                      for (std::size_t k = 0; k < g.size(); ++k) {
                        (*gi[1])[k] += g[k] * gb(av[k], bv[k]);
                      }
                    }
                  });
}

}  // namespace

Var add(Var a, Var b) {
  return binary(
      a, b, "add", [](double x, double y) { return x + y; },
      [](double, double) { return 1.0; }, [](double, double) { return 1.0; });
}

Var sub(Var a, Var b) {
  return binary(
      a, b, "sub", [](double x, double y) { return x - y; },
      [](double, double) { return 1.0; }, [](double, double) { return -1.0; });
}

Var mul(Var a, Var b) {
  return binary(
      a, b, "mul", [](double x, double y) { return x * y; },
      [](double, double y) { return y; }, [](double x, double) { return x; });
}

Var minimum(Var a, Var b) {
  return binary(
      a, b, "minimum", [](double x, double y) { return x <= y ? x : y; },
      [](double x, double y) { return x <= y ? 1.0 : 0.0; },
      [](double x, double y) { return x <= y ? 0.0 : 1.0; });
}

Var scale(Var a, double s) {
  Tensor out = a.value();
  for (double& v : out.values()) v *= s;
  return unary(a, std::move(out), [s](double, double) { return s; });
}

Var add_scalar(Var a, double s) {
  Tensor out = a.value();
  for (double& v : out.values()) v += s;
  return unary(a, std::move(out), [](double, double) { return 1.0; });
}

Var relu(Var a) {
  Tensor out = a.value();
  // NaN passes through so downstream finiteness checks still see it.
  for (double& v : out.values()) v = (v > 0.0 || std::isnan(v)) ? v : 0.0;
  return unary(a, std::move(out), [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Var tanh(Var a) {
  Tensor out = a.value();
  for (double& v : out.values()) v = std::tanh(v);
  return unary(a, std::move(out), [](double, double y) { return 1.0 - y * y; });
}

Var exp(Var a) {
  Tensor out = a.value();
  for (double& v : out.values()) v = std::exp(v);
  return unary(a, std::move(out), [](double, double y) { return y; });
}

Var square(Var a) {
  Tensor out = a.value();
  for (double& v : out.values()) v = v * v;
  return unary(a, std::move(out), [](double x, double) { return 2.0 * x; });
}

Var clamp(Var a, double lo, double hi) {
  MORPHCTL_REQUIRE(lo <= hi, "clamp: lo > hi");
  Tensor out = a.value();
  for (double& v : out.values()) v = std::clamp(v, lo, hi);
  return unary(a, std::move(out),
               [lo, hi](double x, double) { return (x >= lo && x <= hi) ? 1.0 : 0.0; });
}

// ---------------------------------------------------------------- reductions

Var sum(Var a) {
  Tape& t = tape_of(a);
  double s = 0.0;
  for (double v : a.value().values()) s += v;
  return t.record(Tensor::scalar(s), {a.id},
                  [](const Tensor& g, std::span<Tensor* const> gi) {
                    for (double& v : gi[0]->values()) v += g[0];
                  });
}

Var mean(Var a) {
  const std::size_t n = a.value().size();
  MORPHCTL_REQUIRE(n > 0, "mean of an empty tensor");
  return scale(sum(a), 1.0 / static_cast<double>(n));
}

Var reshape(Var a, std::vector<std::size_t> shape) {
  Tape& t = tape_of(a);
  Tensor out = a.value().reshaped(std::move(shape));
  return t.record(std::move(out), {a.id}, [](const Tensor& g, std::span<Tensor* const> gi) {
    Tensor& ga = *gi[0];
    for (std::size_t k = 0; k < g.size(); ++k) ga[k] += g[k];
  });
}

Var concat_cols(Var a, Var b) {
  same_tape(a, b);
  Tape& t = tape_of(a);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  require_matrix(av, "concat_cols", "a");
  require_matrix(bv, "concat_cols", "b");
  MORPHCTL_REQUIRE(av.dim(0) == bv.dim(0), "concat_cols: row counts differ " +
                                      shape_string(av.shape()) + " vs " + shape_string(bv.shape()));
  const std::size_t n = av.dim(0), ca = av.dim(1), cb = bv.dim(1);
  Tensor out = Tensor::uninitialized({n, ca + cb});
  for (std::size_t i = 0; i < n; ++i) {
    std::copy_n(av.row(i), ca, out.row(i));
    std::copy_n(bv.row(i), cb, out.row(i) + ca);
  }
  return t.record(std::move(out), {a.id, b.id},
                  [n, ca, cb](const Tensor& g, std::span<Tensor* const> gi) {
                    for (std::size_t i = 0; i < n; ++i) {
                      const double* gr = g.data() + i * (ca + cb);
                      if (gi[0] != nullptr) {
                        double* d = gi[0]->data() + i * ca;
                        for (std::size_t c = 0; c < ca; ++c) d[c] += gr[c];
                      }
                      if (gi[1] != nullptr) {
                        double* d = gi[1]->data() + i * cb;
                        for (std::size_t c = 0; c < cb; ++c) d[c] += gr[ca + c];
                      }
                    }
                  });
}

Var gather_rows(Var x, std::vector<std::size_t> index) {
  Tape& t = tape_of(x);
  const Tensor& xv = x.value();
  MORPHCTL_REQUIRE(xv.rank() >= 1, "gather_rows: scalar input");
  const std::size_t c = xv.cols();
  for (std::size_t r : index) {
    MORPHCTL_REQUIRE(r < xv.rows(), "gather_rows: index " + std::to_string(r) + " out of range for " +
                               shape_string(xv.shape()));
  }
  std::vector<std::size_t> shape = xv.shape();
  shape[0] = index.size();
  Tensor out(std::move(shape));
  for (std::size_t i = 0; i < index.size(); ++i) std::copy_n(xv.row(index[i]), c, out.row(i));
  return t.record(std::move(out), {x.id},
                  [index = std::move(index), c](const Tensor& g, std::span<Tensor* const> gi) {
                    Tensor& gx = *gi[0];
                    for (std::size_t i = 0; i < index.size(); ++i) {
                      double* d = gx.data() + index[i] * c;
                      const double* s = g.data() + i * c;
                      for (std::size_t k = 0; k < c; ++k) d[k] += s[k];
                    }
                  });
}

Var masked_mean_rows(Var x, const Mask& mask, std::size_t groups) {
  Tape& t = tape_of(x);
  const Tensor& xv = x.value();
  require_matrix(xv, "masked_mean_rows", "x");
  MORPHCTL_REQUIRE(groups > 0 && xv.dim(0) % groups == 0,
          "masked_mean_rows: rows not divisible into groups");
  MORPHCTL_REQUIRE(mask.size() == xv.dim(0), "masked_mean_rows: mask length does not match rows");
  const std::size_t per = xv.dim(0) / groups, c = xv.dim(1);
  std::vector<double> inv(groups);
  Tensor out({groups, c});
  for (std::size_t g = 0; g < groups; ++g) {
    std::size_t count = 0;
    double* o = out.row(g);
    for (std::size_t r = 0; r < per; ++r) {
      if (!mask[g * per + r]) continue;
      ++count;
      const double* xr = xv.row(g * per + r);
      for (std::size_t k = 0; k < c; ++k) o[k] += xr[k];
    }
    MORPHCTL_REQUIRE(count > 0, "masked_mean_rows: group " + std::to_string(g) + " has no rows");
    inv[g] = 1.0 / static_cast<double>(count);
    for (std::size_t k = 0; k < c; ++k) o[k] *= inv[g];
  }
  return t.record(std::move(out), {x.id},
                  [mask, inv, per, c, groups](const Tensor& g, std::span<Tensor* const> gi) {
                    Tensor& gx = *gi[0];
                    for (std::size_t gr = 0; gr < groups; ++gr) {
                      for (std::size_t r = 0; r < per; ++r) {
                        if (!mask[gr * per + r]) continue;
                        double* d = gx.row(gr * per + r);
                        for (std::size_t k = 0; k < c; ++k) d[k] += g.at(gr, k) * inv[gr];
                      }
                    }
                  });
}

// ---------------------------------------------------------------- normalization

Var layer_norm(Var x, Var gain, Var bias, double eps) {
  same_tape(x, gain);
  same_tape(x, bias);
  Tape& t = tape_of(x);
  const Tensor& xv = x.value();
  require_matrix(xv, "layer_norm", "x");
  const std::size_t n = xv.dim(0), c = xv.dim(1);
  MORPHCTL_REQUIRE(gain.value().size() == c && bias.value().size() == c,
          "layer_norm: gain/bias width does not match " + shape_string(xv.shape()));
  Tensor out = Tensor::uninitialized({n, c});
  Tensor xhat = Tensor::uninitialized({n, c});
  std::vector<double> inv_std(n);
  const double* gv = gain.value().data();
  const double* bv = bias.value().data();
  for (std::size_t i = 0; i < n; ++i) {
    const double* xr = xv.row(i);
    double mu = 0.0;
    for (std::size_t k = 0; k < c; ++k) mu += xr[k];
    mu /= static_cast<double>(c);
    double var = 0.0;
    for (std::size_t k = 0; k < c; ++k) var += (xr[k] - mu) * (xr[k] - mu);
    var /= static_cast<double>(c);
    inv_std[i] = 1.0 / std::sqrt(var + eps);
    double* hr = xhat.row(i);
    double* orow = out.row(i);
    for (std::size_t k = 0; k < c; ++k) {
      hr[k] = (xr[k] - mu) * inv_std[i];
      orow[k] = hr[k] * gv[k] + bv[k];
    }
  }
  Tape* tp = &t;
  const int ig = gain.id;
  return t.record(std::move(out), {x.id, gain.id, bias.id},
                  [tp, ig, xhat = std::move(xhat), inv_std = std::move(inv_std), n, c](
                      const Tensor& g, std::span<Tensor* const> gi) {
                    const double* gv = tp->value(ig).data();
                    std::vector<double> dh(c);
                    for (std::size_t i = 0; i < n; ++i) {
                      const double* gr = g.row(i);
                      const double* hr = xhat.row(i);
                      if (gi[0] != nullptr) {
                        double s1 = 0.0, s2 = 0.0;
                        for (std::size_t k = 0; k < c; ++k) {
                          dh[k] = gr[k] * gv[k];
                          s1 += dh[k];
                          s2 += dh[k] * hr[k];
                        }
                        const double cc = static_cast<double>(c);
                        double* dx = gi[0]->row(i);
                        for (std::size_t k = 0; k < c; ++k) {
                          dx[k] += inv_std[i] / cc * (cc * dh[k] - s1 - hr[k] * s2);
                        }
                      }
                      if (gi[1] != nullptr) {
                        for (std::size_t k = 0; k < c; ++k) (*gi[1])[k] += gr[k] * hr[k];
                      }
                      if (gi[2] != nullptr) {
                        for (std::size_t k = 0; k < c; ++k) (*gi[2])[k] += gr[k];
                      }
                    }
                  });
}

namespace {

Var softmax_impl(Var x, const Mask* mask) {
  Tape& t = tape_of(x);
  const Tensor& xv = x.value();
  require_matrix(xv, "softmax_rows", "x");
  const std::size_t n = xv.dim(0), m = xv.dim(1);
  if (mask != nullptr) {
    MORPHCTL_REQUIRE(mask->size() == n * m, "masked_softmax_rows: mask size " +
                                       std::to_string(mask->size()) + " does not match " +
                                       shape_string(xv.shape()));
  }
  Tensor out = Tensor::uninitialized({n, m});
  for (std::size_t i = 0; i < n; ++i) {
    softmax_row(xv.row(i), mask ? mask->data() + i * m : nullptr, out.row(i), m);
  }
  Tape* tp = &t;
  const int io = static_cast<int>(t.size());
  return t.record(std::move(out), {x.id},
                  [tp, io, n, m](const Tensor& g, std::span<Tensor* const> gi) {
                    const Tensor& y = tp->value(io);
                    for (std::size_t i = 0; i < n; ++i) {
                      const double* yr = y.row(i);
                      const double* gr = g.row(i);
                      double dot = 0.0;
                      for (std::size_t j = 0; j < m; ++j) dot += gr[j] * yr[j];
                      double* dx = gi[0]->row(i);
                      for (std::size_t j = 0; j < m; ++j) dx[j] += yr[j] * (gr[j] - dot);
                    }
                  });
}

}  // namespace

Var softmax_rows(Var x) { return softmax_impl(x, nullptr); }

Var masked_softmax_rows(Var x, const Mask& mask) { return softmax_impl(x, &mask); }

// ---------------------------------------------------------------- attention

Var attention_scores(Var q, Var k, std::size_t groups, std::size_t n, std::size_t heads) {
  same_tape(q, k);
  Tape& t = tape_of(q);
  const Tensor& qv = q.value();
  const Tensor& kv = k.value();
  require_matrix(qv, "attention_scores", "q");
  MORPHCTL_REQUIRE(qv.shape() == kv.shape(), "attention_scores: q and k shapes differ");
  MORPHCTL_REQUIRE(qv.dim(0) == groups * n, "attention_scores: q rows != groups * n");
  MORPHCTL_REQUIRE(heads > 0 && qv.dim(1) % heads == 0, "attention_scores: width not divisible by heads");
  const std::size_t width = qv.dim(1), dh = width / heads;
  const double s = 1.0 / std::sqrt(static_cast<double>(dh));
  Tensor out = Tensor::uninitialized({groups * heads * n, n});
  for (std::size_t g = 0; g < groups; ++g) {
    for (std::size_t h = 0; h < heads; ++h) {
      for (std::size_t i = 0; i < n; ++i) {
        const double* qi = qv.row(g * n + i) + h * dh;
        double* orow = out.row((g * heads + h) * n + i);
        for (std::size_t j = 0; j < n; ++j) {
          const double* kj = kv.row(g * n + j) + h * dh;
          double acc = 0.0;
          for (std::size_t c = 0; c < dh; ++c) acc += qi[c] * kj[c];
          orow[j] = acc * s;
        }
      }
    }
  }
  Tape* tp = &t;
  const int iq = q.id, ik = k.id;
  return t.record(std::move(out), {q.id, k.id},
                  [tp, iq, ik, groups, n, heads, dh, width, s](const Tensor& gout,
                                                               std::span<Tensor* const> gi) {
                    const Tensor& qv = tp->value(iq);
                    const Tensor& kv = tp->value(ik);
                    for (std::size_t g = 0; g < groups; ++g) {
                      for (std::size_t h = 0; h < heads; ++h) {
                        for (std::size_t i = 0; i < n; ++i) {
                          const double* gr = gout.row((g * heads + h) * n + i);
                          for (std::size_t j = 0; j < n; ++j) {
                            const double w = gr[j] * s;
                            if (w == 0.0) continue;
                            if (gi[0] != nullptr) {
                              double* dq = gi[0]->data() + (g * n + i) * width + h * dh;
                              const double* kj = kv.row(g * n + j) + h * dh;
                              for (std::size_t c = 0; c < dh; ++c) dq[c] += w * kj[c];
                            }
                            if (gi[1] != nullptr) {
                              double* dk = gi[1]->data() + (g * n + j) * width + h * dh;
                              const double* qi = qv.row(g * n + i) + h * dh;
                              for (std::size_t c = 0; c < dh; ++c) dk[c] += w * qi[c];
                            }
                          }
                        }
                      }
                    }
                  });
}

Var attention_mix(Var probs, Var v, std::size_t groups, std::size_t n, std::size_t heads) {
  same_tape(probs, v);
  Tape& t = tape_of(probs);
  const Tensor& pv = probs.value();
  const Tensor& vv = v.value();
  require_matrix(pv, "attention_mix", "probs");
  require_matrix(vv, "attention_mix", "v");
  MORPHCTL_REQUIRE(pv.dim(0) == groups * heads * n && pv.dim(1) == n,
          "attention_mix: probs shape " + shape_string(pv.shape()) + " inconsistent");
  MORPHCTL_REQUIRE(vv.dim(0) == groups * n && vv.dim(1) % heads == 0,
          "attention_mix: values shape " + shape_string(vv.shape()) + " inconsistent");
  const std::size_t width = vv.dim(1), dv = width / heads;
  Tensor out({groups * n, width});
  for (std::size_t g = 0; g < groups; ++g) {
    for (std::size_t h = 0; h < heads; ++h) {
      for (std::size_t i = 0; i < n; ++i) {
        const double* pr = pv.row((g * heads + h) * n + i);
        double* orow = out.row(g * n + i) + h * dv;
        for (std::size_t j = 0; j < n; ++j) {
          const double p = pr[j];
          const double* vj = vv.row(g * n + j) + h * dv;
          for (std::size_t c = 0; c < dv; ++c) orow[c] += p * vj[c];
        }
      }
    }
  }
  Tape* tp = &t;
  const int ip = probs.id, iv = v.id;
  return t.record(std::move(out), {probs.id, v.id},
                  [tp, ip, iv, groups, n, heads, dv, width](const Tensor& gout,
                                                            std::span<Tensor* const> gi) {
                    const Tensor& pv = tp->value(ip);
                    const Tensor& vv = tp->value(iv);
                    for (std::size_t g = 0; g < groups; ++g) {
                      for (std::size_t h = 0; h < heads; ++h) {
                        for (std::size_t i = 0; i < n; ++i) {
                          const std::size_t prow = (g * heads + h) * n + i;
                          const double* go = gout.row(g * n + i) + h * dv;
                          for (std::size_t j = 0; j < n; ++j) {
                            const double* vj = vv.row(g * n + j) + h * dv;
                            if (gi[0] != nullptr) {
                              double acc = 0.0;
                              for (std::size_t c = 0; c < dv; ++c) acc += go[c] * vj[c];
                              gi[0]->at(prow, j) += acc;
                            }
                            if (gi[1] != nullptr) {
                              const double p = pv.at(prow, j);
                              if (p == 0.0) continue;
                              double* dvj = gi[1]->data() + (g * n + j) * width + h * dv;
                              for (std::size_t c = 0; c < dv; ++c) dvj[c] += p * go[c];
                            }
                          }
                        }
                      }
                    }
                  });
}

// ---------------------------------------------------------------- distributions

Var gaussian_logprob(const Tensor& actions, Var mu, Var log_std, const Mask& include,
                     std::size_t groups) {
  same_tape(mu, log_std);
  Tape& t = tape_of(mu);
  const Tensor& mv = mu.value();
  const Tensor& sv = log_std.value();
  require_matrix(mv, "gaussian_logprob", "mu");
  MORPHCTL_REQUIRE(actions.size() == mv.size(), "gaussian_logprob: actions shape " +
                                           shape_string(actions.shape()) + " vs mu " +
                                           shape_string(mv.shape()));
  const std::size_t rows = mv.dim(0), m = mv.dim(1);
  MORPHCTL_REQUIRE(sv.size() == m, "gaussian_logprob: log_std width does not match mu");
  MORPHCTL_REQUIRE(include.size() == rows, "gaussian_logprob: include mask length != rows");
  MORPHCTL_REQUIRE(groups > 0 && rows % groups == 0, "gaussian_logprob: rows not divisible into groups");
  const std::size_t per = rows / groups;
  const double half_log_2pi = 0.5 * std::log(2.0 * std::numbers::pi);
  Tensor out({groups});
  for (std::size_t r = 0; r < rows; ++r) {
    if (!include[r]) continue;
    double lp = 0.0;
    for (std::size_t d = 0; d < m; ++d) {
      const double z = (actions.at(r, d) - mv.at(r, d)) * std::exp(-sv[d]);
      lp += -0.5 * z * z - sv[d] - half_log_2pi;
    }
    out[r / per] += lp;
  }
  Tape* tp = &t;
  const int imu = mu.id, is = log_std.id;
  return t.record(std::move(out), {mu.id, log_std.id},
                  [tp, imu, is, actions, include, per, rows, m](const Tensor& g,
                                                                std::span<Tensor* const> gi) {
                    const Tensor& mv = tp->value(imu);
                    const Tensor& sv = tp->value(is);
                    for (std::size_t r = 0; r < rows; ++r) {
                      if (!include[r]) continue;
                      const double gg = g[r / per];
                      for (std::size_t d = 0; d < m; ++d) {
                        const double inv_var = std::exp(-2.0 * sv[d]);
                        const double diff = actions.at(r, d) - mv.at(r, d);
                        if (gi[0] != nullptr) gi[0]->at(r, d) += gg * diff * inv_var;
                        if (gi[1] != nullptr) (*gi[1])[d] += gg * (diff * diff * inv_var - 1.0);
                      }
                    }
                  });
}

Var gaussian_logprob(const Tensor& a, Var mu, Var log_std) {
  const std::size_t m = a.size();
  Var mu_row = reshape(mu, {1, m});
  Tensor a_row = a.reshaped({1, m});
  return gaussian_logprob(a_row, mu_row, log_std, Mask(1, 1), 1);
}

// ---------------------------------------------------------------- dropout

DropoutResult dropout(Var x, double rate, const Mask* mask, Rng* rng) {
  if (!(rate >= 0.0 && rate < 1.0)) {
    throw std::invalid_argument("dropout: rate must lie in [0, 1), got " + std::to_string(rate));
  }
  Tape& t = tape_of(x);
  const Tensor& xv = x.value();
  Mask used;
  if (mask != nullptr) {
    MORPHCTL_REQUIRE(mask->size() == xv.size(), "dropout: supplied mask length " +
                                           std::to_string(mask->size()) + " does not match " +
                                           shape_string(xv.shape()));
    used = *mask;
  } else if (rate == 0.0) {
    used.assign(xv.size(), 1);
  } else {
    if (rng == nullptr) throw std::invalid_argument("dropout: fresh mask requested without rng");
    used.resize(xv.size());
    for (auto& b : used) b = rng->bernoulli(rate) ? 0 : 1;
  }
  const double keep_scale = 1.0 / (1.0 - rate);
  Tensor out = Tensor::uninitialized(xv.shape());
  for (std::size_t k = 0; k < out.size(); ++k) out[k] = used[k] ? xv[k] * keep_scale : 0.0;
  Var y = t.record(std::move(out), {x.id},
                   [used, keep_scale](const Tensor& g, std::span<Tensor* const> gi) {
                     Tensor& gx = *gi[0];
                     for (std::size_t k = 0; k < g.size(); ++k) {
                       if (used[k]) gx[k] += g[k] * keep_scale;
                     }
                   });
  return {y, std::move(used)};
}

}  // namespace morphctl::ops
