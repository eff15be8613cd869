#include "lineage/nn/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "lineage/errors.hpp"
#include "lineage/kernels/kernels.hpp"

namespace lineage::nn::ops {
namespace {

const kernels::KernelTable& K() { return kernels::active(); }

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw LayoutError(std::string(op) + ": shape " + shape_to_string(a.shape()) + " vs " +
                      shape_to_string(b.shape()));
  }
}

void require_matrix(const Tensor& a, const char* op) {
  if (a.rank() != 2) throw LayoutError(std::string(op) + ": expected a matrix, got " + shape_to_string(a.shape()));
}

// Shared by layer and instance normalization: rows are normalized over their
// columns; the affine parameters are indexed by column (layer) or row (instance).
Var normalize_rows(Tape& t, OpKind kind, Var x, Var gamma, Var beta, double eps,
                   std::size_t rows, std::size_t cols, bool affine_per_row) {
  const Tensor& xv = t.value(x);
  const Tensor& gv = t.value(gamma);
  const Tensor& bv = t.value(beta);
  const std::size_t affine = affine_per_row ? rows : cols;
  if (gv.numel() != affine || bv.numel() != affine)
    throw LayoutError(std::string(op_name(kind)) + ": affine parameters need " + std::to_string(affine) + " values");
  Tensor y(xv.shape());
  Tensor xhat(xv.shape());
  std::vector<double> inv_std(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = xv.data().data() + r * cols;
    double mu = 0.0;
    for (std::size_t c = 0; c < cols; ++c) mu += xr[c];
    mu /= static_cast<double>(cols);
    double var = 0.0;
    for (std::size_t c = 0; c < cols; ++c) var += (xr[c] - mu) * (xr[c] - mu);
    var /= static_cast<double>(cols);
    inv_std[r] = 1.0 / std::sqrt(var + eps);
    for (std::size_t c = 0; c < cols; ++c) {
      const double h = (xr[c] - mu) * inv_std[r];
      xhat[r * cols + c] = h;
      const std::size_t a = affine_per_row ? r : c;
      y[r * cols + c] = gv[a] * h + bv[a];
    }
  }
  return t.record(kind, {x, gamma, beta}, std::move(y),
                  [x, gamma, beta, rows, cols, affine_per_row, xhat = std::move(xhat),
                   inv_std = std::move(inv_std)](Tape& tp, const Tensor& g) {
                    const Tensor& gv = tp.value(gamma);
                    if (tp.requires_grad(gamma) || tp.requires_grad(beta)) {
                      Tensor& gg = tp.grad_buffer(gamma);
                      Tensor& gb = tp.grad_buffer(beta);
                      for (std::size_t r = 0; r < rows; ++r)
                        for (std::size_t c = 0; c < cols; ++c) {
                          const std::size_t a = affine_per_row ? r : c;
                          gg[a] += g[r * cols + c] * xhat[r * cols + c];
                          gb[a] += g[r * cols + c];
                        }
                    }
                    if (!tp.requires_grad(x)) return;
                    Tensor& gx = tp.grad_buffer(x);
                    const double n = static_cast<double>(cols);
                    std::vector<double> gh(cols);
                    for (std::size_t r = 0; r < rows; ++r) {
                      double mean_gh = 0.0, mean_ghx = 0.0;
                      for (std::size_t c = 0; c < cols; ++c) {
                        const std::size_t a = affine_per_row ? r : c;
                        gh[c] = g[r * cols + c] * gv[a];
                        mean_gh += gh[c];
                        mean_ghx += gh[c] * xhat[r * cols + c];
                      }
                      mean_gh /= n;
                      mean_ghx /= n;
                      for (std::size_t c = 0; c < cols; ++c) {
                        gx[r * cols + c] +=
                            inv_std[r] * (gh[c] - mean_gh - xhat[r * cols + c] * mean_ghx);
                      }
                    }
                  });
}

}  // namespace

Var matmul(Tape& t, Var a, Var b) {
  const Tensor& av = t.value(a);
  const Tensor& bv = t.value(b);
  require_matrix(av, "matmul");
  require_matrix(bv, "matmul");
  const std::size_t m = av.rows(), k = av.cols(), n = bv.cols();
  if (bv.rows() != k) throw LayoutError("matmul: inner dimensions " + std::to_string(k) + " vs " + std::to_string(bv.rows()));
  Tensor c({m, n});
  K().gemm_nn(m, n, k, av.data().data(), bv.data().data(), c.data().data());
  return t.record(OpKind::matmul, {a, b}, std::move(c), [a, b, m, n, k](Tape& tp, const Tensor& g) {
    if (tp.requires_grad(a)) {
      K().gemm_nt(m, k, n, g.data().data(), tp.value(b).data().data(), tp.grad_buffer(a).data().data());
    }
    if (tp.requires_grad(b)) {
      K().gemm_tn(k, n, m, tp.value(a).data().data(), g.data().data(), tp.grad_buffer(b).data().data());
    }
  });
}

namespace {
Var linear_impl(Tape& t, Var x, Var w, const Var* b) {
  const Tensor& xv = t.value(x);
  const Tensor& wv = t.value(w);
  require_matrix(xv, "linear");
  require_matrix(wv, "linear");
  const std::size_t n = xv.rows(), d = xv.cols(), h = wv.rows();
  if (wv.cols() != d) {
    throw LayoutError("linear: input width " + std::to_string(d) + " vs weight " + shape_to_string(wv.shape()));
  }
  Tensor y({n, h});
  if (b) {
    const Tensor& bv = t.value(*b);
    if (bv.numel() != h) throw LayoutError("linear: bias needs " + std::to_string(h) + " values");
    for (std::size_t i = 0; i < n; ++i) std::copy(bv.data().begin(), bv.data().end(), y.data().begin() + static_cast<long>(i * h));
  }
  K().gemm_nt(n, h, d, xv.data().data(), wv.data().data(), y.data().data());
  std::vector<Var> inputs{x, w};
  if (b) inputs.push_back(*b);
  const bool has_bias = b != nullptr;
  const Var bias = b ? *b : Var{};
  return t.record(OpKind::linear, std::move(inputs), std::move(y),
                  [x, w, bias, has_bias, n, d, h](Tape& tp, const Tensor& g) {
                    if (tp.requires_grad(x)) {
                      K().gemm_nn(n, d, h, g.data().data(), tp.value(w).data().data(),
                                  tp.grad_buffer(x).data().data());
                    }
                    if (tp.requires_grad(w)) {
                      K().gemm_tn(h, d, n, g.data().data(), tp.value(x).data().data(),
                                  tp.grad_buffer(w).data().data());
                    }
                    if (has_bias && tp.requires_grad(bias)) {
                      Tensor& gb = tp.grad_buffer(bias);
                      for (std::size_t i = 0; i < n; ++i)
                        for (std::size_t j = 0; j < h; ++j) gb[j] += g[i * h + j];
                    }
                  });
}
}  // namespace

Var linear(Tape& t, Var x, Var w, Var b) { return linear_impl(t, x, w, &b); }
Var linear(Tape& t, Var x, Var w) { return linear_impl(t, x, w, nullptr); }

Var add(Tape& t, Var a, Var b) {
  require_same_shape(t.value(a), t.value(b), "add");
  Tensor y = t.value(a);
  K().axpy(1.0, t.value(b).data().data(), y.data().data(), y.numel());
  return t.record(OpKind::add, {a, b}, std::move(y), [a, b](Tape& tp, const Tensor& g) {
    if (tp.requires_grad(a)) K().axpy(1.0, g.data().data(), tp.grad_buffer(a).data().data(), g.numel());
    if (tp.requires_grad(b)) K().axpy(1.0, g.data().data(), tp.grad_buffer(b).data().data(), g.numel());
  });
}

Var sub(Tape& t, Var a, Var b) {
  require_same_shape(t.value(a), t.value(b), "sub");
  Tensor y = t.value(a);
  K().axpy(-1.0, t.value(b).data().data(), y.data().data(), y.numel());
  return t.record(OpKind::sub, {a, b}, std::move(y), [a, b](Tape& tp, const Tensor& g) {
    if (tp.requires_grad(a)) K().axpy(1.0, g.data().data(), tp.grad_buffer(a).data().data(), g.numel());
    if (tp.requires_grad(b)) K().axpy(-1.0, g.data().data(), tp.grad_buffer(b).data().data(), g.numel());
  });
}

Var mul(Tape& t, Var a, Var b) {
  const Tensor& av = t.value(a);
  const Tensor& bv = t.value(b);
  require_same_shape(av, bv, "mul");
  Tensor y(av.shape());
  for (std::size_t i = 0; i < y.numel(); ++i) y[i] = av[i] * bv[i];
  return t.record(OpKind::mul, {a, b}, std::move(y), [a, b](Tape& tp, const Tensor& g) {
    if (tp.requires_grad(a)) {
      Tensor& ga = tp.grad_buffer(a);
      const Tensor& bv = tp.value(b);
      for (std::size_t i = 0; i < g.numel(); ++i) ga[i] += g[i] * bv[i];
    }
    if (tp.requires_grad(b)) {
      Tensor& gb = tp.grad_buffer(b);
      const Tensor& av = tp.value(a);
      for (std::size_t i = 0; i < g.numel(); ++i) gb[i] += g[i] * av[i];
    }
  });
}

Var scale(Tape& t, Var a, double s) {
  Tensor y = t.value(a);
  for (double& v : y.data()) v *= s;
  return t.record(OpKind::scale, {a}, std::move(y), [a, s](Tape& tp, const Tensor& g) {
    if (tp.requires_grad(a)) K().axpy(s, g.data().data(), tp.grad_buffer(a).data().data(), g.numel());
  });
}

Var add_row(Tape& t, Var x, Var r) {
  const Tensor& xv = t.value(x);
  require_matrix(xv, "add_row");
  const std::size_t n = xv.rows(), d = xv.cols();
  if (t.value(r).numel() != d) throw LayoutError("add_row: row needs " + std::to_string(d) + " values");
  Tensor y = xv;
  for (std::size_t i = 0; i < n; ++i) K().axpy(1.0, t.value(r).data().data(), y.data().data() + i * d, d);
  return t.record(OpKind::add_row, {x, r}, std::move(y), [x, r, n, d](Tape& tp, const Tensor& g) {
    if (tp.requires_grad(x)) K().axpy(1.0, g.data().data(), tp.grad_buffer(x).data().data(), g.numel());
    if (tp.requires_grad(r)) {
      Tensor& gr = tp.grad_buffer(r);
      for (std::size_t i = 0; i < n; ++i) K().axpy(1.0, g.data().data() + i * d, gr.data().data(), d);
    }
  });
}

Var relu(Tape& t, Var x) {
  const Tensor& xv = t.value(x);
  Tensor y(xv.shape());
  for (std::size_t i = 0; i < xv.numel(); ++i) y[i] = xv[i] > 0.0 ? xv[i] : 0.0;
  return t.record(OpKind::relu, {x}, std::move(y), [x](Tape& tp, const Tensor& g) {
    if (!tp.requires_grad(x)) return;
    const Tensor& xv = tp.value(x);
    Tensor& gx = tp.grad_buffer(x);
    for (std::size_t i = 0; i < g.numel(); ++i)
      if (xv[i] > 0.0) gx[i] += g[i];
  });
}

Var tanh(Tape& t, Var x) {
  const Tensor& xv = t.value(x);
  Tensor y(xv.shape());
  for (std::size_t i = 0; i < xv.numel(); ++i) y[i] = std::tanh(xv[i]);
  Tensor saved = y;
  return t.record(OpKind::tanh, {x}, std::move(y), [x, saved = std::move(saved)](Tape& tp, const Tensor& g) {
    if (!tp.requires_grad(x)) return;
    Tensor& gx = tp.grad_buffer(x);
    for (std::size_t i = 0; i < g.numel(); ++i) gx[i] += g[i] * (1.0 - saved[i] * saved[i]);
  });
}

Var exp(Tape& t, Var x) {
  const Tensor& xv = t.value(x);
  Tensor y(xv.shape());
  for (std::size_t i = 0; i < xv.numel(); ++i) y[i] = std::exp(xv[i]);
  Tensor saved = y;
  return t.record(OpKind::exp, {x}, std::move(y), [x, saved = std::move(saved)](Tape& tp, const Tensor& g) {
    if (!tp.requires_grad(x)) return;
    Tensor& gx = tp.grad_buffer(x);
    for (std::size_t i = 0; i < g.numel(); ++i) gx[i] += g[i] * saved[i];
  });
}

Var log(Tape& t, Var x) {
  const Tensor& xv = t.value(x);
  Tensor y(xv.shape());
  for (std::size_t i = 0; i < xv.numel(); ++i) y[i] = std::log(xv[i]);
  return t.record(OpKind::log, {x}, std::move(y), [x](Tape& tp, const Tensor& g) {
    if (!tp.requires_grad(x)) return;
    const Tensor& xv = tp.value(x);
    Tensor& gx = tp.grad_buffer(x);
    for (std::size_t i = 0; i < g.numel(); ++i) gx[i] += g[i] / xv[i];
  });
}

Var square(Tape& t, Var x) {
  const Tensor& xv = t.value(x);
  Tensor y(xv.shape());
  for (std::size_t i = 0; i < xv.numel(); ++i) y[i] = xv[i] * xv[i];
  return t.record(OpKind::square, {x}, std::move(y), [x](Tape& tp, const Tensor& g) {
    if (!tp.requires_grad(x)) return;
    const Tensor& xv = tp.value(x);
    Tensor& gx = tp.grad_buffer(x);
    for (std::size_t i = 0; i < g.numel(); ++i) gx[i] += 2.0 * g[i] * xv[i];
  });
}

Var sum(Tape& t, Var x) {
  double s = 0.0;
  for (double v : t.value(x).data()) s += v;
  return t.record(OpKind::sum, {x}, Tensor::scalar(s), [x](Tape& tp, const Tensor& g) {
    if (!tp.requires_grad(x)) return;
    for (double& v : tp.grad_buffer(x).data()) v += g[0];
  });
}

Var mean(Tape& t, Var x) {
  const double n = static_cast<double>(t.value(x).numel());
  double s = 0.0;
  for (double v : t.value(x).data()) s += v;
  return t.record(OpKind::mean, {x}, Tensor::scalar(s / n), [x, n](Tape& tp, const Tensor& g) {
    if (!tp.requires_grad(x)) return;
    for (double& v : tp.grad_buffer(x).data()) v += g[0] / n;
  });
}

Var weighted_sum(Tape& t, Var x, Tensor weights) {
  const Tensor& xv = t.value(x);
  if (weights.numel() != xv.numel()) {
    throw ContractError("weighted_sum: weights " + shape_to_string(weights.shape()) + " vs values " +
                        shape_to_string(xv.shape()));
  }
  const double s = K().dot(xv.data().data(), weights.data().data(), xv.numel());
  return t.record(OpKind::weighted_sum, {x}, Tensor::scalar(s),
                  [x, w = std::move(weights)](Tape& tp, const Tensor& g) {
                    if (!tp.requires_grad(x)) return;
                    K().axpy(g[0], w.data().data(), tp.grad_buffer(x).data().data(), w.numel());
                  });
}

Var softmax_rows(Tape& t, Var x) {
  const Tensor& xv = t.value(x);
  require_matrix(xv, "softmax_rows");
  const std::size_t n = xv.rows(), k = xv.cols();
  Tensor y(xv.shape());
  for (std::size_t i = 0; i < n; ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < k; ++j) mx = std::max(mx, xv[i * k + j]);
    double z = 0.0;
    for (std::size_t j = 0; j < k; ++j) z += (y[i * k + j] = std::exp(xv[i * k + j] - mx));
    for (std::size_t j = 0; j < k; ++j) y[i * k + j] /= z;
  }
  Tensor saved = y;
  return t.record(OpKind::softmax_rows, {x}, std::move(y),
                  [x, n, k, s = std::move(saved)](Tape& tp, const Tensor& g) {
                    if (!tp.requires_grad(x)) return;
                    Tensor& gx = tp.grad_buffer(x);
                    for (std::size_t i = 0; i < n; ++i) {
                      double dotgs = 0.0;
                      for (std::size_t j = 0; j < k; ++j) dotgs += g[i * k + j] * s[i * k + j];
                      for (std::size_t j = 0; j < k; ++j) gx[i * k + j] += s[i * k + j] * (g[i * k + j] - dotgs);
                    }
                  });
}

Var log_softmax_rows(Tape& t, Var x) {
  const Tensor& xv = t.value(x);
  require_matrix(xv, "log_softmax_rows");
  const std::size_t n = xv.rows(), k = xv.cols();
  Tensor y(xv.shape());
  Tensor probs(xv.shape());
  for (std::size_t i = 0; i < n; ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < k; ++j) mx = std::max(mx, xv[i * k + j]);
    double z = 0.0;
    for (std::size_t j = 0; j < k; ++j) z += std::exp(xv[i * k + j] - mx);
    const double lse = mx + std::log(z);
    for (std::size_t j = 0; j < k; ++j) {
      y[i * k + j] = xv[i * k + j] - lse;
      probs[i * k + j] = std::exp(y[i * k + j]);
    }
  }
  return t.record(OpKind::log_softmax_rows, {x}, std::move(y),
                  [x, n, k, p = std::move(probs)](Tape& tp, const Tensor& g) {
                    if (!tp.requires_grad(x)) return;
                    Tensor& gx = tp.grad_buffer(x);
                    for (std::size_t i = 0; i < n; ++i) {
                      double gs = 0.0;
                      for (std::size_t j = 0; j < k; ++j) gs += g[i * k + j];
                      for (std::size_t j = 0; j < k; ++j) gx[i * k + j] += g[i * k + j] - p[i * k + j] * gs;
                    }
                  });
}

Var softmax_xent(Tape& t, Var logits, std::span<const std::size_t> labels) {
  const Tensor& xv = t.value(logits);
  require_matrix(xv, "softmax_xent");
  const std::size_t n = xv.rows(), k = xv.cols();
  if (labels.size() != n) throw ContractError("softmax_xent: one label per row required");
  Tensor probs(xv.shape());
  double loss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (labels[i] >= k) throw ContractError("softmax_xent: label out of range");
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < k; ++j) mx = std::max(mx, xv[i * k + j]);
    double z = 0.0;
    for (std::size_t j = 0; j < k; ++j) z += (probs[i * k + j] = std::exp(xv[i * k + j] - mx));
    for (std::size_t j = 0; j < k; ++j) probs[i * k + j] /= z;
    loss += -(xv[i * k + labels[i]] - mx - std::log(z));
  }
  loss /= static_cast<double>(n);
  std::vector<std::size_t> lab(labels.begin(), labels.end());
  return t.record(OpKind::softmax_xent, {logits}, Tensor::scalar(loss),
                  [logits, n, k, p = std::move(probs), lab = std::move(lab)](Tape& tp, const Tensor& g) {
                    if (!tp.requires_grad(logits)) return;
                    Tensor& gx = tp.grad_buffer(logits);
                    const double s = g[0] / static_cast<double>(n);
                    for (std::size_t i = 0; i < n; ++i) {
                      for (std::size_t j = 0; j < k; ++j) gx[i * k + j] += s * p[i * k + j];
                      gx[i * k + lab[i]] -= s;
                    }
                  });
}

Var layer_norm(Tape& t, Var x, Var gamma, Var beta, double eps) {
  const Tensor& xv = t.value(x);
  require_matrix(xv, "layer_norm");
  return normalize_rows(t, OpKind::layer_norm, x, gamma, beta, eps, xv.rows(), xv.cols(), false);
}

Var instance_norm(Tape& t, Var x, Var gamma, Var beta, double eps) {
  const Tensor& xv = t.value(x);
  if (xv.rank() < 2) throw LayoutError("instance_norm: expected [C×...]");
  const std::size_t c = xv.dim(0);
  return normalize_rows(t, OpKind::instance_norm, x, gamma, beta, eps, c, xv.numel() / c, true);
}

Var conv2d(Tape& t, Var x, Var w, Var b, std::size_t pad) {
  const Tensor& xv = t.value(x);
  const Tensor& wv = t.value(w);
  if (xv.rank() != 3 || wv.rank() != 4) throw LayoutError("conv2d: expects x[C×H×W] and w[O×C×kh×kw]");
  const std::size_t cin = xv.dim(0), h = xv.dim(1), wd = xv.dim(2);
  const std::size_t cout = wv.dim(0), kh = wv.dim(2), kw = wv.dim(3);
  if (wv.dim(1) != cin) throw LayoutError("conv2d: channel mismatch");
  if (h + 2 * pad < kh || wd + 2 * pad < kw) throw LayoutError("conv2d: kernel larger than padded input");
  if (t.value(b).numel() != cout) throw LayoutError("conv2d: bias size");
  const std::size_t oh = h + 2 * pad - kh + 1, ow = wd + 2 * pad - kw + 1;
  const std::size_t p = oh * ow, ck = cin * kh * kw;

  // col[(c,ky,kx) × (oy,ox)]
  Tensor col({ck, p});
  for (std::size_t c = 0; c < cin; ++c)
    for (std::size_t ky = 0; ky < kh; ++ky)
      for (std::size_t kx = 0; kx < kw; ++kx) {
        double* dst = col.data().data() + ((c * kh + ky) * kw + kx) * p;
        for (std::size_t oy = 0; oy < oh; ++oy) {
          const long iy = static_cast<long>(oy + ky) - static_cast<long>(pad);
          for (std::size_t ox = 0; ox < ow; ++ox) {
            const long ix = static_cast<long>(ox + kx) - static_cast<long>(pad);
            dst[oy * ow + ox] = (iy >= 0 && iy < static_cast<long>(h) && ix >= 0 && ix < static_cast<long>(wd))
                                    ? xv[(c * h + static_cast<std::size_t>(iy)) * wd + static_cast<std::size_t>(ix)]
                                    : 0.0;
          }
        }
      }
  Tensor y({cout, oh, ow});
  const Tensor& bv = t.value(b);
  for (std::size_t o = 0; o < cout; ++o) std::fill_n(y.data().begin() + static_cast<long>(o * p), p, bv[o]);
  K().gemm_nn(cout, p, ck, wv.data().data(), col.data().data(), y.data().data());

  return t.record(
      OpKind::conv2d, {x, w, b}, std::move(y),
      [x, w, b, cin, h, wd, cout, kh, kw, oh, ow, p, ck, pad, col = std::move(col)](Tape& tp, const Tensor& g) {
        if (tp.requires_grad(b)) {
          Tensor& gb = tp.grad_buffer(b);
          for (std::size_t o = 0; o < cout; ++o) {
            double s = 0.0;
            for (std::size_t i = 0; i < p; ++i) s += g[o * p + i];
            gb[o] += s;
          }
        }
        if (tp.requires_grad(w)) {
          K().gemm_nt(cout, ck, p, g.data().data(), col.data().data(), tp.grad_buffer(w).data().data());
        }
        if (tp.requires_grad(x)) {
          Tensor gcol({ck, p});
          K().gemm_tn(ck, p, cout, tp.value(w).data().data(), g.data().data(), gcol.data().data());
          Tensor& gx = tp.grad_buffer(x);
          for (std::size_t c = 0; c < cin; ++c)
            for (std::size_t ky = 0; ky < kh; ++ky)
              for (std::size_t kx = 0; kx < kw; ++kx) {
                const double* src = gcol.data().data() + ((c * kh + ky) * kw + kx) * p;
                for (std::size_t oy = 0; oy < oh; ++oy) {
                  const long iy = static_cast<long>(oy + ky) - static_cast<long>(pad);
                  if (iy < 0 || iy >= static_cast<long>(h)) continue;
                  for (std::size_t ox = 0; ox < ow; ++ox) {
                    const long ix = static_cast<long>(ox + kx) - static_cast<long>(pad);
                    if (ix < 0 || ix >= static_cast<long>(wd)) continue;
                    gx[(c * h + static_cast<std::size_t>(iy)) * wd + static_cast<std::size_t>(ix)] += src[oy * ow + ox];
                  }
                }
              }
        }
      });
}

Var mean_trailing(Tape& t, Var x) {
  const Tensor& xv = t.value(x);
  if (xv.rank() < 2) throw LayoutError("mean_trailing: expected [C×...]");
  const std::size_t c = xv.dim(0), p = xv.numel() / c;
  Tensor y({c});
  for (std::size_t i = 0; i < c; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < p; ++j) s += xv[i * p + j];
    y[i] = s / static_cast<double>(p);
  }
  return t.record(OpKind::mean_trailing, {x}, std::move(y), [x, c, p](Tape& tp, const Tensor& g) {
    if (!tp.requires_grad(x)) return;
    Tensor& gx = tp.grad_buffer(x);
    for (std::size_t i = 0; i < c; ++i) {
      const double v = g[i] / static_cast<double>(p);
      for (std::size_t j = 0; j < p; ++j) gx[i * p + j] += v;
    }
  });
}

Var slice_rows(Tape& t, Var x, std::size_t start, std::size_t count) {
  const Tensor& xv = t.value(x);
  require_matrix(xv, "slice_rows");
  const std::size_t d = xv.cols();
  if (start + count > xv.rows()) throw LayoutError("slice_rows out of range");
  Tensor y({count, d}, std::vector<double>(xv.data().begin() + static_cast<long>(start * d),
                                           xv.data().begin() + static_cast<long>((start + count) * d)));
  return t.record(OpKind::slice_rows, {x}, std::move(y), [x, start, d](Tape& tp, const Tensor& g) {
    if (!tp.requires_grad(x)) return;
    K().axpy(1.0, g.data().data(), tp.grad_buffer(x).data().data() + start * d, g.numel());
  });
}

Var slice_cols(Tape& t, Var x, std::size_t start, std::size_t count) {
  const Tensor& xv = t.value(x);
  require_matrix(xv, "slice_cols");
  const std::size_t n = xv.rows(), d = xv.cols();
  if (start + count > d) throw LayoutError("slice_cols out of range");
  Tensor y({n, count});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < count; ++j) y[i * count + j] = xv[i * d + start + j];
  return t.record(OpKind::slice_cols, {x}, std::move(y), [x, start, count, n, d](Tape& tp, const Tensor& g) {
    if (!tp.requires_grad(x)) return;
    Tensor& gx = tp.grad_buffer(x);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < count; ++j) gx[i * d + start + j] += g[i * count + j];
  });
}

Var concat_rows(Tape& t, std::span<const Var> parts) {
  if (parts.empty()) throw ContractError("concat_rows: no parts");
  const std::size_t d = t.value(parts[0]).shape().back();
  std::vector<std::size_t> row_counts;
  std::vector<double> data;
  for (Var v : parts) {
    const Tensor& pv = t.value(v);
    if (pv.shape().back() != d) throw LayoutError("concat_rows: width mismatch");
    row_counts.push_back(pv.numel() / d);
    data.insert(data.end(), pv.data().begin(), pv.data().end());
  }
  const std::size_t total_rows = data.size() / d;
  std::vector<Var> inputs(parts.begin(), parts.end());
  return t.record(OpKind::concat_rows, inputs, Tensor({total_rows, d}, std::move(data)),
                  [inputs, row_counts, d](Tape& tp, const Tensor& g) {
                    std::size_t off = 0;
                    for (std::size_t i = 0; i < inputs.size(); ++i) {
                      const std::size_t len = row_counts[i] * d;
                      if (tp.requires_grad(inputs[i]))
                        K().axpy(1.0, g.data().data() + off, tp.grad_buffer(inputs[i]).data().data(), len);
                      off += len;
                    }
                  });
}

Var concat_cols(Tape& t, std::span<const Var> parts) {
  if (parts.empty()) throw ContractError("concat_cols: no parts");
  const std::size_t n = t.value(parts[0]).rows();
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  for (Var v : parts) {
    const Tensor& pv = t.value(v);
    if (pv.rows() != n) throw LayoutError("concat_cols: row count mismatch");
    widths.push_back(pv.cols());
    total += pv.cols();
  }
  Tensor y({n, total});
  std::size_t off = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const Tensor& pv = t.value(parts[k]);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < widths[k]; ++j) y[i * total + off + j] = pv[i * widths[k] + j];
    off += widths[k];
  }
  std::vector<Var> inputs(parts.begin(), parts.end());
  return t.record(OpKind::concat_cols, inputs, std::move(y), [inputs, widths, n, total](Tape& tp, const Tensor& g) {
    std::size_t off = 0;
    for (std::size_t k = 0; k < inputs.size(); ++k) {
      if (tp.requires_grad(inputs[k])) {
        Tensor& gp = tp.grad_buffer(inputs[k]);
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t j = 0; j < widths[k]; ++j) gp[i * widths[k] + j] += g[i * total + off + j];
      }
      off += widths[k];
    }
  });
}

Var transpose(Tape& t, Var x) {
  return t.record(OpKind::transpose, {x}, t.value(x).transposed(), [x](Tape& tp, const Tensor& g) {
    if (!tp.requires_grad(x)) return;
    Tensor gt = g.transposed();
    K().axpy(1.0, gt.data().data(), tp.grad_buffer(x).data().data(), gt.numel());
  });
}

Var reshape(Tape& t, Var x, Shape shape) {
  return t.record(OpKind::reshape, {x}, t.value(x).reshaped(std::move(shape)), [x](Tape& tp, const Tensor& g) {
    if (!tp.requires_grad(x)) return;
    K().axpy(1.0, g.data().data(), tp.grad_buffer(x).data().data(), g.numel());
  });
}

}  // namespace lineage::nn::ops
