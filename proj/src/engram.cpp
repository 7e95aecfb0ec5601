#include "snn/engram.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

#include "snn/error.hpp"
#include "snn/ops.hpp"
#include "snn/rng.hpp"

namespace snn {

FeatureMatrix rate_features(const Model& model, const Dataset& data, std::size_t per_class,
                            std::uint64_t seed, std::size_t batch_size) {
  if (per_class == 0) throw ConfigError("rate_features: per_class must be >= 1");
  const int num_classes = model.spec().num_classes;
  std::map<int, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < data.size(); ++i) by_class[data.labels[i]].push_back(i);

  FeatureMatrix fm;
  std::vector<std::size_t> picked;
  for (int c = 0; c < num_classes; ++c) {
    auto it = by_class.find(c);
    if (it == by_class.end())
      throw ConfigError("rate_features: class " + std::to_string(c) + " missing from dataset");
    auto& idx = it->second;
    Rng rng = Rng::derive(seed, "engram/class" + std::to_string(c));
    rng.shuffle(idx);
    if (idx.size() < per_class) fm.balanced = false;
    for (std::size_t k = 0; k < std::min(per_class, idx.size()); ++k) picked.push_back(idx[k]);
  }

  NoGrad ng;
  const std::size_t d = model.spec().feature_dim;
  fm.x = Tensor::zeros({picked.size(), d});
  fm.labels.reserve(picked.size());
  std::size_t row = 0;
  for (std::size_t lo = 0; lo < picked.size(); lo += batch_size) {
    const std::size_t hi = std::min(lo + batch_size, picked.size());
    std::vector<Tensor> in;
    for (std::size_t k = lo; k < hi; ++k) in.push_back(data.inputs[picked[k]]);
    ForwardResult fr = model.forward(stack_samples(in), data.modality,
                                     /*record_activity=*/false);
    std::copy(fr.rates.data(), fr.rates.data() + fr.rates.size(), fm.x.data() + row * d);
    for (std::size_t k = lo; k < hi; ++k) fm.labels.push_back(data.labels[picked[k]]);
    row += hi - lo;
  }
  return fm;
}

namespace {

double row_dist(const double* a, const double* b, std::size_t d) {
  double sq = 0.0;
  for (std::size_t i = 0; i < d; ++i) {
    const double diff = a[i] - b[i];
    sq += diff * diff;
  }
  return std::sqrt(sq);
}

std::map<int, std::vector<std::size_t>> group_by_label(const std::vector<int>& labels) {
  std::map<int, std::vector<std::size_t>> g;
  for (std::size_t i = 0; i < labels.size(); ++i) g[labels[i]].push_back(i);
  return g;
}

void check_features(const Tensor& x, const std::vector<int>& labels, const char* op) {
  if (x.shape().size() != 2) throw ShapeError(std::string(op) + ": features must be (n, d)");
  if (x.dim(0) != labels.size()) throw ShapeError(std::string(op) + ": labels/rows mismatch");
}

}  // namespace

double silhouette(const Tensor& x, const std::vector<int>& labels, bool* degenerate) {
  check_features(x, labels, "silhouette");
  const std::size_t n = x.dim(0), d = x.dim(1);
  auto groups = group_by_label(labels);
  if (groups.size() < 2) throw ConfigError("silhouette: need at least 2 clusters");
  if (degenerate) *degenerate = false;

  const double* p = x.data();
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& own = groups[labels[i]];
    if (own.size() == 1) {
      if (degenerate) *degenerate = true;
      continue;  // contributes 0
    }
    double a = 0.0;
    for (std::size_t j : own)
      if (j != i) a += row_dist(p + i * d, p + j * d, d);
    a /= static_cast<double>(own.size() - 1);

    double b = std::numeric_limits<double>::infinity();
    for (const auto& [label, members] : groups) {
      if (label == labels[i]) continue;
      double m = 0.0;
      for (std::size_t j : members) m += row_dist(p + i * d, p + j * d, d);
      b = std::min(b, m / static_cast<double>(members.size()));
    }
    const double denom = std::max(a, b);
    if (denom == 0.0) {
      if (degenerate) *degenerate = true;
      continue;  // identical points, contributes 0
    }
    total += (b - a) / denom;
  }
  return total / static_cast<double>(n);
}

double davies_bouldin(const Tensor& x, const std::vector<int>& labels, bool* degenerate) {
  check_features(x, labels, "davies_bouldin");
  const std::size_t d = x.dim(1);
  auto groups = group_by_label(labels);
  if (groups.size() < 2) throw ConfigError("davies_bouldin: need at least 2 clusters");
  if (degenerate) *degenerate = false;

  const double* p = x.data();
  std::vector<std::vector<double>> centroids;
  std::vector<double> scatter;
  for (const auto& [label, members] : groups) {
    std::vector<double> c(d, 0.0);
    for (std::size_t j : members)
      for (std::size_t k = 0; k < d; ++k) c[k] += p[j * d + k];
    for (double& v : c) v /= static_cast<double>(members.size());
    double s = 0.0;
    for (std::size_t j : members) s += row_dist(p + j * d, c.data(), d);
    centroids.push_back(std::move(c));
    scatter.push_back(s / static_cast<double>(members.size()));
  }

  const std::size_t C = centroids.size();
  double db = 0.0;
  for (std::size_t i = 0; i < C; ++i) {
    double worst = 0.0;
    for (std::size_t j = 0; j < C; ++j) {
      if (j == i) continue;
      const double m = row_dist(centroids[i].data(), centroids[j].data(), d);
      double r;
      if (m == 0.0) {
        if (degenerate) *degenerate = true;
        r = std::numeric_limits<double>::infinity();
      } else {
        r = (scatter[i] + scatter[j]) / m;
      }
      worst = std::max(worst, r);
    }
    db += worst;
  }
  return db / static_cast<double>(C);
}

Tensor cross_modal_alignment(const FeatureMatrix& a, const FeatureMatrix& b, int num_classes) {
  if (num_classes < 1) throw ConfigError("cross_modal_alignment: need at least 1 class");
  check_features(a.x, a.labels, "cross_modal_alignment");
  check_features(b.x, b.labels, "cross_modal_alignment");
  if (a.x.dim(1) != b.x.dim(1))
    throw ShapeError("cross_modal_alignment: feature dims differ");
  const std::size_t d = a.x.dim(1);
  const std::size_t C = static_cast<std::size_t>(num_classes);

  auto centroids = [&](const FeatureMatrix& fm) {
    std::vector<std::vector<double>> cent(C, std::vector<double>(d, 0.0));
    std::vector<std::size_t> count(C, 0);
    const double* p = fm.x.data();
    for (std::size_t i = 0; i < fm.labels.size(); ++i) {
      const int label = fm.labels[i];
      if (label < 0 || label >= num_classes)
        throw ConfigError("cross_modal_alignment: label outside class range");
      for (std::size_t k = 0; k < d; ++k) cent[label][k] += p[i * d + k];
      ++count[label];
    }
    for (std::size_t c = 0; c < C; ++c) {
      if (count[c] == 0)
        throw ConfigError("cross_modal_alignment: class " + std::to_string(c) +
                          " missing from one modality");
      for (double& v : cent[c]) v /= static_cast<double>(count[c]);
    }
    return cent;
  };
  auto ca = centroids(a);
  auto cb = centroids(b);

  Tensor out = Tensor::zeros({C, C});
  for (std::size_t i = 0; i < C; ++i) {
    for (std::size_t j = 0; j < C; ++j) {
      double dot = 0.0, na = 0.0, nb = 0.0;
      for (std::size_t k = 0; k < d; ++k) {
        dot += ca[i][k] * cb[j][k];
        na += ca[i][k] * ca[i][k];
        nb += cb[j][k] * cb[j][k];
      }
      out.at(i * C + j) = (na == 0.0 || nb == 0.0) ? 0.0 : dot / std::sqrt(na * nb);
    }
  }
  return out;
}

double mean_diagonal(const Tensor& square) {
  if (square.shape().size() != 2 || square.dim(0) != square.dim(1))
    throw ShapeError("mean_diagonal: need a square matrix");
  const std::size_t n = square.dim(0);
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += square.at(i * n + i);
  return s / static_cast<double>(n);
}

double zero_shot_transfer(const FeatureMatrix& train, const FeatureMatrix& test,
                          int num_classes) {
  check_features(train.x, train.labels, "zero_shot_transfer");
  check_features(test.x, test.labels, "zero_shot_transfer");
  if (train.x.dim(1) != test.x.dim(1))
    throw ShapeError("zero_shot_transfer: feature dims differ");
  const std::size_t n = train.x.dim(0), d = train.x.dim(1);
  const std::size_t C = static_cast<std::size_t>(num_classes);
  if (num_classes < 2) throw ConfigError("zero_shot_transfer: need at least 2 classes");

  const double l2 = 1e-3;
  const int iters = 500;
  const double* X = train.x.data();

  double max_sq = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double sq = 0.0;
    for (std::size_t k = 0; k < d; ++k) sq += X[i * d + k] * X[i * d + k];
    max_sq = std::max(max_sq, sq);
  }
  const double lr = 1.0 / (0.5 * max_sq + l2);

  std::vector<double> w(d * C, 0.0), bias(C, 0.0);
  std::vector<double> gw(d * C), gb(C), logits(C);
  for (int it = 0; it < iters; ++it) {
    std::fill(gw.begin(), gw.end(), 0.0);
    std::fill(gb.begin(), gb.end(), 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      const double* xi = X + i * d;
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t c = 0; c < C; ++c) {
        double z = bias[c];
        for (std::size_t k = 0; k < d; ++k) z += xi[k] * w[k * C + c];
        logits[c] = z;
        mx = std::max(mx, z);
      }
      double zsum = 0.0;
      for (std::size_t c = 0; c < C; ++c) zsum += std::exp(logits[c] - mx);
      const int y = train.labels[i];
      if (y < 0 || y >= num_classes)
        throw ConfigError("zero_shot_transfer: label outside class range");
      for (std::size_t c = 0; c < C; ++c) {
        const double p = std::exp(logits[c] - mx) / zsum;
        const double err = p - (static_cast<std::size_t>(y) == c ? 1.0 : 0.0);
        gb[c] += err;
        for (std::size_t k = 0; k < d; ++k) gw[k * C + c] += err * xi[k];
      }
    }
    const double inv_n = 1.0 / static_cast<double>(n);
    for (std::size_t j = 0; j < w.size(); ++j) w[j] -= lr * (gw[j] * inv_n + l2 * w[j]);
    for (std::size_t c = 0; c < C; ++c) bias[c] -= lr * gb[c] * inv_n;
  }

  const double* Xt = test.x.data();
  std::size_t correct = 0;
  for (std::size_t i = 0; i < test.x.dim(0); ++i) {
    std::size_t best = 0;
    double best_z = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < C; ++c) {
      double z = bias[c];
      for (std::size_t k = 0; k < d; ++k) z += Xt[i * d + k] * w[k * C + c];
      if (z > best_z) {
        best_z = z;
        best = c;
      }
    }
    if (static_cast<int>(best) == test.labels[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(test.x.dim(0));
}

std::vector<double> sym_eigenvalues(std::vector<double> a, std::size_t n) {
  if (a.size() != n * n) throw ShapeError("sym_eigenvalues: buffer/size mismatch");
  auto off_norm = [&] {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j) s += 2.0 * a[i * n + j] * a[i * n + j];
    return std::sqrt(s);
  };
  double frob = 0.0;
  for (double v : a) frob += v * v;
  frob = std::sqrt(frob);
  const double tol = std::max(1e-300, 1e-12 * frob);

  for (int sweep = 0; sweep < 100 && off_norm() > tol; ++sweep) {
    for (std::size_t p = 0; p < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        const double apq = a[p * n + q];
        if (std::fabs(apq) < 1e-300) continue;
        const double app = a[p * n + p], aqq = a[q * n + q];
        const double theta = (aqq - app) / (2.0 * apq);
        const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                         (std::fabs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          const double akp = a[k * n + p], akq = a[k * n + q];
          a[k * n + p] = c * akp - s * akq;
          a[k * n + q] = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double apk = a[p * n + k], aqk = a[q * n + k];
          a[p * n + k] = c * apk - s * aqk;
          a[q * n + k] = s * apk + c * aqk;
        }
      }
    }
  }
  std::vector<double> eig(n);
  for (std::size_t i = 0; i < n; ++i) eig[i] = a[i * n + i];
  std::sort(eig.begin(), eig.end(), std::greater<double>());
  return eig;
}

EffectiveDim effective_dim(const Tensor& x, double variance_threshold) {
  if (x.shape().size() != 2) throw ShapeError("effective_dim: features must be (n, d)");
  if (variance_threshold <= 0.0 || variance_threshold > 1.0)
    throw ConfigError("effective_dim: threshold must be in (0, 1]");
  const std::size_t n = x.dim(0), d = x.dim(1);
  if (n < 2) throw ConfigError("effective_dim: need at least 2 samples");
  const double* p = x.data();

  std::vector<double> mean(d, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 0; k < d; ++k) mean[k] += p[i * d + k];
  for (double& v : mean) v /= static_cast<double>(n);

  // Eigenvalues of the covariance come from whichever Gram matrix is
  // smaller: (d x d) X^T X or (n x n) X X^T share nonzero spectrum.
  EffectiveDim out;
  const std::size_t m = std::min(n, d);
  std::vector<double> g(m * m, 0.0);
  std::vector<double> centered(n * d);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 0; k < d; ++k) centered[i * d + k] = p[i * d + k] - mean[k];
  if (d <= n) {
    for (std::size_t a = 0; a < d; ++a)
      for (std::size_t b = a; b < d; ++b) {
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i) s += centered[i * d + a] * centered[i * d + b];
        g[a * d + b] = g[b * d + a] = s;
      }
  } else {
    for (std::size_t a = 0; a < n; ++a)
      for (std::size_t b = a; b < n; ++b) {
        double s = 0.0;
        for (std::size_t k = 0; k < d; ++k) s += centered[a * d + k] * centered[b * d + k];
        g[a * n + b] = g[b * n + a] = s;
      }
  }
  std::vector<double> eig = sym_eigenvalues(std::move(g), m);

  double total = 0.0;
  for (double v : eig) total += std::max(0.0, v);
  if (total <= 0.0) {
    out.degenerate = true;
    return out;
  }
  double acc = 0.0;
  std::size_t k = 0;
  for (; k < eig.size(); ++k) {
    acc += std::max(0.0, eig[k]);
    if (acc >= variance_threshold * total) {
      ++k;
      break;
    }
  }
  out.components = k;
  out.fraction = static_cast<double>(k) / static_cast<double>(d);
  return out;
}

}  // namespace snn
