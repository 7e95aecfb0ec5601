#pragma once

#include <cstddef>
#include <vector>

#include "snn/tensor.hpp"

namespace snn {

// ---------------------------------------------------------------------------
// Supervised contrastive loss over a batch of embeddings.
//
// Rows of z are embeddings; labels give the class per row. For anchor i with
// positive set P(i) = {j != i : label_j == label_i}:
//   loss_i = logsumexp_{k != i}(z_i.z_k / tau) - logsumexp_{j in P(i)}(z_i.z_j / tau)
// The batch loss is the mean over anchors with at least one positive; anchors
// without positives contribute nothing. Embeddings are L2-normalized here, so
// callers may pass raw features.
// ---------------------------------------------------------------------------
struct SCLConfig {
  double tau = 0.1;
  double weight = 0.5;  // lambda in total = ce + lambda * scl
};

Tensor scl_loss(const Tensor& z, const std::vector<int>& labels, const SCLConfig& cfg);

// ---------------------------------------------------------------------------
// Modern Hopfield retrieval over a learnable pattern bank P (patterns x dim).
// One update step per query row xi:
//   xi <- P^T softmax(beta * P xi)
// ---------------------------------------------------------------------------
Tensor hopfield_retrieve(const Tensor& patterns, const Tensor& queries, double beta,
                         std::size_t iters);

// Quadratic energy -xi^T (P^T P) xi per query row (classic Hopfield form with
// the learned patterns as stored memories).
std::vector<double> hopfield_energy_quadratic(const Tensor& patterns, const Tensor& queries);

// Log-sum-exp energy of the modern (continuous-state) formulation,
//   E(xi) = -(1/beta) log sum_mu exp(beta * p_mu . xi) + 0.5 * xi . xi,
// which the retrieval update never increases.
std::vector<double> hopfield_energy_lse(const Tensor& patterns, const Tensor& queries,
                                        double beta);

// ---------------------------------------------------------------------------
// Hierarchically gated recurrent cell:
//   r_t = sigmoid(W_r x_t + U_r h_{t-1} + b_r)
//   h_t = (1 - r_t) . h_{t-1} + r_t . tanh(W_h x_t + b_h)
// ---------------------------------------------------------------------------
struct HGRNWeights {
  Tensor w_r;  // (in, hidden)
  Tensor u_r;  // (hidden, hidden)
  Tensor b_r;  // (hidden)
  Tensor w_h;  // (in, hidden)
  Tensor b_h;  // (hidden)
};

Tensor hgrn_step(const Tensor& x, const Tensor& h, const HGRNWeights& w);

}  // namespace snn
