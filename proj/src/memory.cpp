#include "snn/memory.hpp"

#include <cmath>
#include <limits>

#include "snn/error.hpp"
#include "snn/ops.hpp"

namespace snn {

Tensor scl_loss(const Tensor& z, const std::vector<int>& labels, const SCLConfig& cfg) {
  if (z.shape().size() != 2) throw ShapeError("scl_loss: embeddings must be (batch, dim)");
  const std::size_t B = z.dim(0);
  if (B < 2) throw ConfigError("scl_loss: need a batch of at least 2 embeddings");
  if (labels.size() != B) throw ShapeError("scl_loss: labels/batch size mismatch");
  if (cfg.tau <= 0.0) throw ConfigError("scl_loss: tau must be > 0");

  Tensor zn = l2_normalize_rows(z);
  Tensor sim = affine(matmul(zn, transpose(zn)), 1.0 / cfg.tau, 0.0);

  Tensor denom_mask = Tensor::zeros({B, B});
  Tensor pos_mask = Tensor::zeros({B, B});
  Tensor anchor_weight = Tensor::zeros({B});
  std::size_t anchors = 0;
  for (std::size_t i = 0; i < B; ++i) {
    bool has_pos = false;
    for (std::size_t k = 0; k < B; ++k) {
      if (k == i) continue;
      denom_mask.at(i * B + k) = 1.0;
      if (labels[k] == labels[i]) {
        pos_mask.at(i * B + k) = 1.0;
        has_pos = true;
      }
    }
    if (has_pos) {
      anchor_weight.at(i) = 1.0;
      ++anchors;
    }
  }
  if (anchors == 0) return Tensor::scalar(0.0);
  for (std::size_t i = 0; i < B; ++i) anchor_weight.at(i) /= static_cast<double>(anchors);

  Tensor denom = masked_logsumexp_rows(sim, denom_mask);
  Tensor numer = masked_logsumexp_rows(sim, pos_mask);  // 0 on anchors without positives
  return sum(mul(sub(denom, numer), anchor_weight));
}

Tensor hopfield_retrieve(const Tensor& patterns, const Tensor& queries, double beta,
                         std::size_t iters) {
  if (patterns.shape().size() != 2 || queries.shape().size() != 2)
    throw ShapeError("hopfield_retrieve: patterns and queries must be rank 2");
  if (patterns.dim(1) != queries.dim(1))
    throw ShapeError("hopfield_retrieve: dim mismatch, patterns " + shape_str(patterns.shape()) +
                     " vs queries " + shape_str(queries.shape()));
  if (beta <= 0.0) throw ConfigError("hopfield_retrieve: beta must be > 0");
  Tensor xi = queries;
  Tensor pt = transpose(patterns);
  for (std::size_t it = 0; it < iters; ++it) {
    Tensor attn = softmax_rows(affine(matmul(xi, pt), beta, 0.0));
    xi = matmul(attn, patterns);
  }
  return xi;
}

std::vector<double> hopfield_energy_quadratic(const Tensor& patterns, const Tensor& queries) {
  const std::size_t N = patterns.dim(0), D = patterns.dim(1), B = queries.dim(0);
  if (queries.dim(1) != D) throw ShapeError("hopfield_energy_quadratic: dim mismatch");
  std::vector<double> out(B);
  const double* P = patterns.data();
  const double* Q = queries.data();
  for (std::size_t b = 0; b < B; ++b) {
    double e = 0.0;
    for (std::size_t mu = 0; mu < N; ++mu) {
      double dot = 0.0;
      for (std::size_t d = 0; d < D; ++d) dot += P[mu * D + d] * Q[b * D + d];
      e += dot * dot;  // xi^T P^T P xi = sum_mu (p_mu . xi)^2
    }
    out[b] = -e;
  }
  return out;
}

std::vector<double> hopfield_energy_lse(const Tensor& patterns, const Tensor& queries,
                                        double beta) {
  if (beta <= 0.0) throw ConfigError("hopfield_energy_lse: beta must be > 0");
  const std::size_t N = patterns.dim(0), D = patterns.dim(1), B = queries.dim(0);
  if (queries.dim(1) != D) throw ShapeError("hopfield_energy_lse: dim mismatch");
  std::vector<double> out(B);
  const double* P = patterns.data();
  const double* Q = queries.data();
  for (std::size_t b = 0; b < B; ++b) {
    double maxdot = -std::numeric_limits<double>::infinity();
    std::vector<double> dots(N);
    for (std::size_t mu = 0; mu < N; ++mu) {
      double dot = 0.0;
      for (std::size_t d = 0; d < D; ++d) dot += P[mu * D + d] * Q[b * D + d];
      dots[mu] = dot;
      maxdot = std::max(maxdot, dot);
    }
    double lse = 0.0;
    for (std::size_t mu = 0; mu < N; ++mu) lse += std::exp(beta * (dots[mu] - maxdot));
    lse = maxdot + std::log(lse) / beta;
    double sq = 0.0;
    for (std::size_t d = 0; d < D; ++d) sq += Q[b * D + d] * Q[b * D + d];
    out[b] = -lse + 0.5 * sq;
  }
  return out;
}

Tensor hgrn_step(const Tensor& x, const Tensor& h, const HGRNWeights& w) {
  if (x.shape().size() != 2 || h.shape().size() != 2)
    throw ShapeError("hgrn_step: x and h must be (batch, dim)");
  if (x.dim(0) != h.dim(0)) throw ShapeError("hgrn_step: batch mismatch");
  Tensor r = sigmoid(add_rowvec(add(matmul(x, w.w_r), matmul(h, w.u_r)), w.b_r));
  Tensor cand = tanh(add_rowvec(matmul(x, w.w_h), w.b_h));
  // h' = (1-r).h + r.cand, written as h + r.(cand - h)
  return add(h, mul(r, sub(cand, h)));
}

}  // namespace snn
