#include "snn/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "snn/error.hpp"

namespace snn {

using detail::grad_buf;
using detail::should_track;

namespace {

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (!same_shape(a.shape(), b.shape()))
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
}

void require_rank(const Tensor& t, std::size_t rank, const char* op) {
  if (t.shape().size() != rank)
    throw ShapeError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                     shape_str(t.shape()));
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  Tensor out = Tensor::zeros(a.shape());
  const double* pa = a.data();
  const double* pb = b.data();
  double* po = out.data();
  for (std::size_t i = 0; i < out.size(); ++i) po[i] = pa[i] + pb[i];
  if (should_track({&a, &b})) {
    out.mark_parameter();
    auto ai = a.impl(), bi = b.impl(), oi = out.impl();
    Tape::record([ai, bi, oi] {
      if (oi->grad.empty()) return;
      if (ai->tracked) {
        auto& g = grad_buf(*ai);
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += oi->grad[i];
      }
      if (bi->tracked) {
        auto& g = grad_buf(*bi);
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += oi->grad[i];
      }
    });
  }
  return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  Tensor out = Tensor::zeros(a.shape());
  const double* pa = a.data();
  const double* pb = b.data();
  double* po = out.data();
  for (std::size_t i = 0; i < out.size(); ++i) po[i] = pa[i] - pb[i];
  if (should_track({&a, &b})) {
    out.mark_parameter();
    auto ai = a.impl(), bi = b.impl(), oi = out.impl();
    Tape::record([ai, bi, oi] {
      if (oi->grad.empty()) return;
      if (ai->tracked) {
        auto& g = grad_buf(*ai);
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += oi->grad[i];
      }
      if (bi->tracked) {
        auto& g = grad_buf(*bi);
        for (std::size_t i = 0; i < g.size(); ++i) g[i] -= oi->grad[i];
      }
    });
  }
  return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  Tensor out = Tensor::zeros(a.shape());
  const double* pa = a.data();
  const double* pb = b.data();
  double* po = out.data();
  for (std::size_t i = 0; i < out.size(); ++i) po[i] = pa[i] * pb[i];
  if (should_track({&a, &b})) {
    out.mark_parameter();
    auto ai = a.impl(), bi = b.impl(), oi = out.impl();
    Tape::record([ai, bi, oi] {
      if (oi->grad.empty()) return;
      if (ai->tracked) {
        auto& g = grad_buf(*ai);
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += oi->grad[i] * bi->value[i];
      }
      if (bi->tracked) {
        auto& g = grad_buf(*bi);
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += oi->grad[i] * ai->value[i];
      }
    });
  }
  return out;
}

Tensor affine(const Tensor& x, double s, double shift) {
  Tensor out = Tensor::zeros(x.shape());
  const double* px = x.data();
  double* po = out.data();
  for (std::size_t i = 0; i < out.size(); ++i) po[i] = s * px[i] + shift;
  if (should_track({&x})) {
    out.mark_parameter();
    auto xi = x.impl(), oi = out.impl();
    Tape::record([xi, oi, s] {
      if (oi->grad.empty()) return;
      auto& g = grad_buf(*xi);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += s * oi->grad[i];
    });
  }
  return out;
}

namespace {

template <typename Fwd, typename Dfx>
Tensor unary_elementwise(const Tensor& x, Fwd fwd, Dfx dfx) {
  Tensor out = Tensor::zeros(x.shape());
  const double* px = x.data();
  double* po = out.data();
  for (std::size_t i = 0; i < out.size(); ++i) po[i] = fwd(px[i]);
  if (should_track({&x})) {
    out.mark_parameter();
    auto xi = x.impl(), oi = out.impl();
    Tape::record([xi, oi, dfx] {
      if (oi->grad.empty()) return;
      auto& g = grad_buf(*xi);
      for (std::size_t i = 0; i < g.size(); ++i)
        g[i] += oi->grad[i] * dfx(xi->value[i], oi->value[i]);
    });
  }
  return out;
}

}  // namespace

Tensor sigmoid(const Tensor& x) {
  return unary_elementwise(
      x,
      [](double v) {
        return v >= 0.0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
      },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor tanh(const Tensor& x) {
  return unary_elementwise(x, [](double v) { return std::tanh(v); },
                           [](double, double y) { return 1.0 - y * y; });
}

Tensor exp(const Tensor& x) {
  return unary_elementwise(x, [](double v) { return std::exp(v); },
                           [](double, double y) { return y; });
}

Tensor log(const Tensor& x) {
  return unary_elementwise(x, [](double v) { return std::log(v); },
                           [](double v, double) { return 1.0 / v; });
}

Tensor add_rowvec(const Tensor& x, const Tensor& v) {
  require_rank(x, 2, "add_rowvec");
  require_rank(v, 1, "add_rowvec");
  const std::size_t rows = x.dim(0), cols = x.dim(1);
  if (v.dim(0) != cols)
    throw ShapeError("add_rowvec: vector length " + std::to_string(v.dim(0)) +
                     " vs columns " + std::to_string(cols));
  Tensor out = Tensor::zeros(x.shape());
  const double* px = x.data();
  const double* pv = v.data();
  double* po = out.data();
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) po[r * cols + c] = px[r * cols + c] + pv[c];
  if (should_track({&x, &v})) {
    out.mark_parameter();
    auto xi = x.impl(), vi = v.impl(), oi = out.impl();
    Tape::record([xi, vi, oi, rows, cols] {
      if (oi->grad.empty()) return;
      if (xi->tracked) {
        auto& g = grad_buf(*xi);
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += oi->grad[i];
      }
      if (vi->tracked) {
        auto& g = grad_buf(*vi);
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t c = 0; c < cols; ++c) g[c] += oi->grad[r * cols + c];
      }
    });
  }
  return out;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank(a, 2, "matmul");
  require_rank(b, 2, "matmul");
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k)
    throw ShapeError("matmul: inner dims disagree " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  Tensor out = Tensor::zeros({m, n});
  const double* pa = a.data();
  const double* pb = b.data();
  double* po = out.data();
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      const double av = pa[i * k + p];
      if (av == 0.0) continue;  // spike inputs are mostly zero
      const double* brow = pb + p * n;
      double* orow = po + i * n;
      for (std::size_t j = 0; j < n; ++j) orow[j] += av * brow[j];
    }
  }
  if (should_track({&a, &b})) {
    out.mark_parameter();
    auto ai = a.impl(), bi = b.impl(), oi = out.impl();
    Tape::record([ai, bi, oi, m, k, n] {
      if (oi->grad.empty()) return;
      const auto& go = oi->grad;
      if (ai->tracked) {
        auto& ga = grad_buf(*ai);
        // dA = dC * B^T
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t p = 0; p < k; ++p) {
            double acc = 0.0;
            const double* grow = go.data() + i * n;
            const double* brow = bi->value.data() + p * n;
            for (std::size_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
            ga[i * k + p] += acc;
          }
      }
      if (bi->tracked) {
        auto& gb = grad_buf(*bi);
        // dB = A^T * dC
        for (std::size_t i = 0; i < m; ++i) {
          const double* arow = ai->value.data() + i * k;
          const double* grow = go.data() + i * n;
          for (std::size_t p = 0; p < k; ++p) {
            const double av = arow[p];
            if (av == 0.0) continue;
            double* brow = gb.data() + p * n;
            for (std::size_t j = 0; j < n; ++j) brow[j] += av * grow[j];
          }
        }
      }
    });
  }
  return out;
}

Tensor transpose(const Tensor& x) {
  require_rank(x, 2, "transpose");
  const std::size_t m = x.dim(0), n = x.dim(1);
  Tensor out = Tensor::zeros({n, m});
  const double* px = x.data();
  double* po = out.data();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) po[j * m + i] = px[i * n + j];
  if (should_track({&x})) {
    out.mark_parameter();
    auto xi = x.impl(), oi = out.impl();
    Tape::record([xi, oi, m, n] {
      if (oi->grad.empty()) return;
      auto& g = grad_buf(*xi);
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) g[i * n + j] += oi->grad[j * m + i];
    });
  }
  return out;
}

Tensor conv2d(const Tensor& x, const Tensor& k, const Tensor& bias, std::size_t stride,
              std::size_t pad) {
  require_rank(x, 4, "conv2d");
  require_rank(k, 4, "conv2d");
  const std::size_t B = x.dim(0), cin = x.dim(1), H = x.dim(2), W = x.dim(3);
  const std::size_t cout = k.dim(0), kh = k.dim(2), kw = k.dim(3);
  if (k.dim(1) != cin)
    throw ShapeError("conv2d: kernel channels " + std::to_string(k.dim(1)) + " vs input " +
                     std::to_string(cin));
  if (bias.defined() && (bias.shape().size() != 1 || bias.dim(0) != cout))
    throw ShapeError("conv2d: bias shape mismatch");
  const std::size_t hp = H + 2 * pad, wp = W + 2 * pad;
  if (hp < kh || wp < kw || (hp - kh) % stride != 0 || (wp - kw) % stride != 0)
    throw ShapeError("conv2d: non-integral output size for input " + shape_str(x.shape()) +
                     " kernel " + shape_str(k.shape()));
  const std::size_t oh = (hp - kh) / stride + 1, ow = (wp - kw) / stride + 1;

  Tensor out = Tensor::zeros({B, cout, oh, ow});
  const double* px = x.data();
  const double* pk = k.data();
  double* po = out.data();
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t co = 0; co < cout; ++co) {
      const double bv = bias.defined() ? bias.at(co) : 0.0;
      for (std::size_t oy = 0; oy < oh; ++oy) {
        for (std::size_t ox = 0; ox < ow; ++ox) {
          double acc = bv;
          for (std::size_t ci = 0; ci < cin; ++ci) {
            for (std::size_t ky = 0; ky < kh; ++ky) {
              const long iy = static_cast<long>(oy * stride + ky) - static_cast<long>(pad);
              if (iy < 0 || iy >= static_cast<long>(H)) continue;
              for (std::size_t kx = 0; kx < kw; ++kx) {
                const long ix = static_cast<long>(ox * stride + kx) - static_cast<long>(pad);
                if (ix < 0 || ix >= static_cast<long>(W)) continue;
                acc += px[((b * cin + ci) * H + iy) * W + ix] *
                       pk[((co * cin + ci) * kh + ky) * kw + kx];
              }
            }
          }
          po[((b * cout + co) * oh + oy) * ow + ox] = acc;
        }
      }
    }
  }
  if (should_track({&x, &k, &bias})) {
    out.mark_parameter();
    auto xi = x.impl(), ki = k.impl(), oi = out.impl();
    auto bimpl = bias.defined() ? bias.impl() : nullptr;
    Tape::record([xi, ki, bimpl, oi, B, cin, H, W, cout, kh, kw, oh, ow, stride, pad] {
      if (oi->grad.empty()) return;
      const auto& go = oi->grad;
      const bool dx = xi->tracked, dk = ki->tracked;
      const bool db = bimpl && bimpl->tracked;
      std::vector<double>* gx = dx ? &grad_buf(*xi) : nullptr;
      std::vector<double>* gk = dk ? &grad_buf(*ki) : nullptr;
      std::vector<double>* gb = db ? &grad_buf(*bimpl) : nullptr;
      for (std::size_t b = 0; b < B; ++b) {
        for (std::size_t co = 0; co < cout; ++co) {
          for (std::size_t oy = 0; oy < oh; ++oy) {
            for (std::size_t ox = 0; ox < ow; ++ox) {
              const double g = go[((b * cout + co) * oh + oy) * ow + ox];
              if (g == 0.0) continue;
              if (gb) (*gb)[co] += g;
              for (std::size_t ci = 0; ci < cin; ++ci) {
                for (std::size_t ky = 0; ky < kh; ++ky) {
                  const long iy = static_cast<long>(oy * stride + ky) - static_cast<long>(pad);
                  if (iy < 0 || iy >= static_cast<long>(H)) continue;
                  for (std::size_t kx = 0; kx < kw; ++kx) {
                    const long ix = static_cast<long>(ox * stride + kx) - static_cast<long>(pad);
                    if (ix < 0 || ix >= static_cast<long>(W)) continue;
                    const std::size_t xoff = ((b * cin + ci) * H + iy) * W + ix;
                    const std::size_t koff = ((co * cin + ci) * kh + ky) * kw + kx;
                    if (gx) (*gx)[xoff] += g * ki->value[koff];
                    if (gk) (*gk)[koff] += g * xi->value[xoff];
                  }
                }
              }
            }
          }
        }
      }
    });
  }
  return out;
}

Tensor maxpool2d(const Tensor& x) {
  require_rank(x, 4, "maxpool2d");
  const std::size_t B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const std::size_t oh = H / 2, ow = W / 2;
  if (oh == 0 || ow == 0) throw ShapeError("maxpool2d: input too small " + shape_str(x.shape()));
  Tensor out = Tensor::zeros({B, C, oh, ow});
  auto argmax = std::make_shared<std::vector<std::size_t>>(out.size());
  const double* px = x.data();
  double* po = out.data();
  std::size_t o = 0;
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t c = 0; c < C; ++c) {
      const double* plane = px + (b * C + c) * H * W;
      for (std::size_t oy = 0; oy < oh; ++oy) {
        for (std::size_t ox = 0; ox < ow; ++ox, ++o) {
          std::size_t best = (2 * oy) * W + 2 * ox;
          double bv = plane[best];
          for (std::size_t dy = 0; dy < 2; ++dy)
            for (std::size_t dx = 0; dx < 2; ++dx) {
              const std::size_t idx = (2 * oy + dy) * W + (2 * ox + dx);
              if (plane[idx] > bv) {
                bv = plane[idx];
                best = idx;
              }
            }
          po[o] = bv;
          (*argmax)[o] = (b * C + c) * H * W + best;
        }
      }
    }
  }
  if (should_track({&x})) {
    out.mark_parameter();
    auto xi = x.impl(), oi = out.impl();
    Tape::record([xi, oi, argmax] {
      if (oi->grad.empty()) return;
      auto& g = grad_buf(*xi);
      for (std::size_t i = 0; i < oi->grad.size(); ++i) g[(*argmax)[i]] += oi->grad[i];
    });
  }
  return out;
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (numel(shape) != x.size())
    throw ShapeError("reshape: size mismatch " + shape_str(x.shape()) + " to " + shape_str(shape));
  Tensor out = Tensor::zeros(shape);
  std::copy(x.data(), x.data() + x.size(), out.data());
  if (should_track({&x})) {
    out.mark_parameter();
    auto xi = x.impl(), oi = out.impl();
    Tape::record([xi, oi] {
      if (oi->grad.empty()) return;
      auto& g = grad_buf(*xi);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += oi->grad[i];
    });
  }
  return out;
}

Tensor concat0(const Tensor& a, const Tensor& b) {
  if (a.shape().size() != b.shape().size() || a.shape().empty())
    throw ShapeError("concat0: rank mismatch");
  for (std::size_t i = 1; i < a.shape().size(); ++i)
    if (a.dim(i) != b.dim(i)) throw ShapeError("concat0: trailing dims differ");
  Shape shape = a.shape();
  shape[0] += b.dim(0);
  Tensor out = Tensor::zeros(shape);
  std::copy(a.data(), a.data() + a.size(), out.data());
  std::copy(b.data(), b.data() + b.size(), out.data() + a.size());
  if (should_track({&a, &b})) {
    out.mark_parameter();
    auto ai = a.impl(), bi = b.impl(), oi = out.impl();
    const std::size_t na = a.size();
    Tape::record([ai, bi, oi, na] {
      if (oi->grad.empty()) return;
      if (ai->tracked) {
        auto& g = grad_buf(*ai);
        for (std::size_t i = 0; i < na; ++i) g[i] += oi->grad[i];
      }
      if (bi->tracked) {
        auto& g = grad_buf(*bi);
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += oi->grad[na + i];
      }
    });
  }
  return out;
}

Tensor sum(const Tensor& x) {
  double acc = 0.0;
  const double* px = x.data();
  for (std::size_t i = 0; i < x.size(); ++i) acc += px[i];
  Tensor out = Tensor::scalar(acc);
  if (should_track({&x})) {
    out.mark_parameter();
    auto xi = x.impl(), oi = out.impl();
    Tape::record([xi, oi] {
      if (oi->grad.empty()) return;
      auto& g = grad_buf(*xi);
      const double go = oi->grad[0];
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += go;
    });
  }
  return out;
}

Tensor mean(const Tensor& x) { return scale(sum(x), 1.0 / static_cast<double>(x.size())); }

Tensor mean_axis0(const Tensor& x) {
  if (x.shape().empty()) throw ShapeError("mean_axis0: scalar input");
  const std::size_t t = x.dim(0);
  Shape rest(x.shape().begin() + 1, x.shape().end());
  if (rest.empty()) rest = {1};
  const std::size_t inner = numel(rest);
  Tensor out = Tensor::zeros(rest);
  const double* px = x.data();
  double* po = out.data();
  for (std::size_t i = 0; i < t; ++i)
    for (std::size_t j = 0; j < inner; ++j) po[j] += px[i * inner + j];
  const double inv = 1.0 / static_cast<double>(t);
  for (std::size_t j = 0; j < inner; ++j) po[j] *= inv;
  if (should_track({&x})) {
    out.mark_parameter();
    auto xi = x.impl(), oi = out.impl();
    Tape::record([xi, oi, t, inner, inv] {
      if (oi->grad.empty()) return;
      auto& g = grad_buf(*xi);
      for (std::size_t i = 0; i < t; ++i)
        for (std::size_t j = 0; j < inner; ++j) g[i * inner + j] += inv * oi->grad[j];
    });
  }
  return out;
}

Tensor l2_normalize_rows(const Tensor& x) {
  require_rank(x, 2, "l2_normalize_rows");
  const std::size_t rows = x.dim(0), cols = x.dim(1);
  Tensor out = Tensor::zeros(x.shape());
  auto norms = std::make_shared<std::vector<double>>(rows);
  const double* px = x.data();
  double* po = out.data();
  for (std::size_t r = 0; r < rows; ++r) {
    double sq = 0.0;
    for (std::size_t c = 0; c < cols; ++c) sq += px[r * cols + c] * px[r * cols + c];
    const double n = std::sqrt(sq + 1e-24);  // smooth guard for silent rows
    (*norms)[r] = n;
    for (std::size_t c = 0; c < cols; ++c) po[r * cols + c] = px[r * cols + c] / n;
  }
  if (should_track({&x})) {
    out.mark_parameter();
    auto xi = x.impl(), oi = out.impl();
    Tape::record([xi, oi, norms, rows, cols] {
      if (oi->grad.empty()) return;
      auto& g = grad_buf(*xi);
      for (std::size_t r = 0; r < rows; ++r) {
        const double n = (*norms)[r];
        double dot = 0.0;
        for (std::size_t c = 0; c < cols; ++c)
          dot += oi->grad[r * cols + c] * oi->value[r * cols + c];
        for (std::size_t c = 0; c < cols; ++c)
          g[r * cols + c] += (oi->grad[r * cols + c] - oi->value[r * cols + c] * dot) / n;
      }
    });
  }
  return out;
}

Tensor softmax_rows(const Tensor& x) {
  require_rank(x, 2, "softmax_rows");
  check_finite(x, "softmax input");
  const std::size_t rows = x.dim(0), cols = x.dim(1);
  Tensor out = Tensor::zeros(x.shape());
  const double* px = x.data();
  double* po = out.data();
  for (std::size_t r = 0; r < rows; ++r) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < cols; ++c) mx = std::max(mx, px[r * cols + c]);
    double z = 0.0;
    for (std::size_t c = 0; c < cols; ++c) {
      po[r * cols + c] = std::exp(px[r * cols + c] - mx);
      z += po[r * cols + c];
    }
    for (std::size_t c = 0; c < cols; ++c) po[r * cols + c] /= z;
  }
  if (should_track({&x})) {
    out.mark_parameter();
    auto xi = x.impl(), oi = out.impl();
    Tape::record([xi, oi, rows, cols] {
      if (oi->grad.empty()) return;
      auto& g = grad_buf(*xi);
      for (std::size_t r = 0; r < rows; ++r) {
        double dot = 0.0;
        for (std::size_t c = 0; c < cols; ++c)
          dot += oi->grad[r * cols + c] * oi->value[r * cols + c];
        for (std::size_t c = 0; c < cols; ++c)
          g[r * cols + c] += oi->value[r * cols + c] * (oi->grad[r * cols + c] - dot);
      }
    });
  }
  return out;
}

Tensor log_softmax_rows(const Tensor& x) {
  require_rank(x, 2, "log_softmax_rows");
  check_finite(x, "log_softmax input");
  const std::size_t rows = x.dim(0), cols = x.dim(1);
  Tensor out = Tensor::zeros(x.shape());
  const double* px = x.data();
  double* po = out.data();
  for (std::size_t r = 0; r < rows; ++r) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < cols; ++c) mx = std::max(mx, px[r * cols + c]);
    double z = 0.0;
    for (std::size_t c = 0; c < cols; ++c) z += std::exp(px[r * cols + c] - mx);
    const double lz = mx + std::log(z);
    for (std::size_t c = 0; c < cols; ++c) po[r * cols + c] = px[r * cols + c] - lz;
  }
  if (should_track({&x})) {
    out.mark_parameter();
    auto xi = x.impl(), oi = out.impl();
    Tape::record([xi, oi, rows, cols] {
      if (oi->grad.empty()) return;
      auto& g = grad_buf(*xi);
      for (std::size_t r = 0; r < rows; ++r) {
        double gsum = 0.0;
        for (std::size_t c = 0; c < cols; ++c) gsum += oi->grad[r * cols + c];
        for (std::size_t c = 0; c < cols; ++c)
          g[r * cols + c] += oi->grad[r * cols + c] - std::exp(oi->value[r * cols + c]) * gsum;
      }
    });
  }
  return out;
}

Tensor nll_mean(const Tensor& logp, const std::vector<int>& labels) {
  require_rank(logp, 2, "nll_mean");
  const std::size_t rows = logp.dim(0), cols = logp.dim(1);
  if (labels.size() != rows) throw ShapeError("nll_mean: label count mismatch");
  double acc = 0.0;
  for (std::size_t r = 0; r < rows; ++r) {
    const int y = labels[r];
    if (y < 0 || static_cast<std::size_t>(y) >= cols)
      throw ConfigError("nll_mean: label " + std::to_string(y) + " out of range");
    acc -= logp.at(r * cols + y);
  }
  Tensor out = Tensor::scalar(acc / static_cast<double>(rows));
  if (should_track({&logp})) {
    out.mark_parameter();
    auto li = logp.impl(), oi = out.impl();
    auto ys = std::make_shared<std::vector<int>>(labels);
    Tape::record([li, oi, ys, rows, cols] {
      if (oi->grad.empty()) return;
      auto& g = grad_buf(*li);
      const double go = oi->grad[0] / static_cast<double>(rows);
      for (std::size_t r = 0; r < rows; ++r) g[r * cols + (*ys)[r]] -= go;
    });
  }
  return out;
}

Tensor masked_logsumexp_rows(const Tensor& s, const Tensor& mask) {
  require_rank(s, 2, "masked_logsumexp_rows");
  require_same_shape(s, mask, "masked_logsumexp_rows");
  const std::size_t rows = s.dim(0), cols = s.dim(1);
  Tensor out = Tensor::zeros({rows});
  const double* ps = s.data();
  const double* pm = mask.data();
  double* po = out.data();
  for (std::size_t r = 0; r < rows; ++r) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < cols; ++c)
      if (pm[r * cols + c] != 0.0) mx = std::max(mx, ps[r * cols + c]);
    if (mx == -std::numeric_limits<double>::infinity()) {
      po[r] = 0.0;  // empty mask row
      continue;
    }
    double z = 0.0;
    for (std::size_t c = 0; c < cols; ++c)
      if (pm[r * cols + c] != 0.0) z += std::exp(ps[r * cols + c] - mx);
    po[r] = mx + std::log(z);
  }
  if (should_track({&s})) {
    out.mark_parameter();
    auto si = s.impl(), mi = mask.impl(), oi = out.impl();
    Tape::record([si, mi, oi, rows, cols] {
      if (oi->grad.empty()) return;
      auto& g = grad_buf(*si);
      for (std::size_t r = 0; r < rows; ++r) {
        const double go = oi->grad[r];
        if (go == 0.0) continue;
        bool any = false;
        for (std::size_t c = 0; c < cols; ++c)
          if (mi->value[r * cols + c] != 0.0) {
            any = true;
            break;
          }
        if (!any) continue;
        for (std::size_t c = 0; c < cols; ++c) {
          if (mi->value[r * cols + c] == 0.0) continue;
          g[r * cols + c] += go * std::exp(si->value[r * cols + c] - oi->value[r]);
        }
      }
    });
  }
  return out;
}

Tensor detach(const Tensor& x) { return x.detached(); }

}  // namespace snn
