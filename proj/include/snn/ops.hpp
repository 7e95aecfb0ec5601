#pragma once

#include "snn/tensor.hpp"

namespace snn {

// Elementwise (same shape unless noted). Each op computes eagerly and, when a
// tape is active and an input is tracked, records its backward closure.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor affine(const Tensor& x, double scale, double shift);  // scale*x + shift
inline Tensor scale(const Tensor& x, double s) { return affine(x, s, 0.0); }
Tensor sigmoid(const Tensor& x);
Tensor tanh(const Tensor& x);
Tensor exp(const Tensor& x);
Tensor log(const Tensor& x);

// x:[R,C] + v:[C], added to every row.
Tensor add_rowvec(const Tensor& x, const Tensor& v);

// a:[m,k] * b:[k,n] -> [m,n]
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& x);  // [m,n] -> [n,m]

// Cross-correlation convolution. x:[B,Cin,H,W], k:[Cout,Cin,KH,KW],
// bias:[Cout] or undefined. Output size must be integral.
Tensor conv2d(const Tensor& x, const Tensor& k, const Tensor& bias,
              std::size_t stride, std::size_t pad);

// 2x2/stride-2 max pooling, floor semantics (trailing row/col dropped).
Tensor maxpool2d(const Tensor& x);

Tensor reshape(const Tensor& x, Shape shape);
Tensor concat0(const Tensor& a, const Tensor& b);  // along axis 0

Tensor sum(const Tensor& x);   // -> scalar
Tensor mean(const Tensor& x);  // -> scalar
Tensor mean_axis0(const Tensor& x);  // [T,rest...] -> [rest...]

// Rows of x:[R,C] scaled to unit L2 norm (smooth guard near zero rows).
Tensor l2_normalize_rows(const Tensor& x);

// Numerically stable row softmax / log-softmax over the last axis of [R,C].
Tensor softmax_rows(const Tensor& x);
Tensor log_softmax_rows(const Tensor& x);

// -mean_i logp[i, labels[i]]
Tensor nll_mean(const Tensor& logp, const std::vector<int>& labels);

// Row-wise log(sum_j exp(s[r,j])) restricted to mask[r,j] != 0. Rows whose
// mask is empty yield 0; the caller decides what an empty row means.
Tensor masked_logsumexp_rows(const Tensor& s, const Tensor& mask);

// Gradient barrier: same values, no history.
Tensor detach(const Tensor& x);

}  // namespace snn
