#pragma once

#include <cstddef>
#include <vector>

#include "snn/model.hpp"
#include "snn/train.hpp"

namespace snn {

// Rows are per-sample feature vectors (time-averaged firing rates of the
// feature layer); labels align with rows. balanced is cleared when some class
// could not fill its per-class quota.
struct FeatureMatrix {
  Tensor x;  // (n, d)
  std::vector<int> labels;
  bool balanced = true;
};

// Draws up to per_class samples of each class (seeded, without replacement)
// and runs the encoder; features are the pre-memory spike rates. Every class
// the model knows about must appear in the dataset.
FeatureMatrix rate_features(const Model& model, const Dataset& data, std::size_t per_class,
                            std::uint64_t seed, std::size_t batch_size = 32);

// Mean Euclidean silhouette. Points in singleton clusters score 0 and set
// *degenerate; so do coincident points where max(a, b) = 0.
double silhouette(const Tensor& x, const std::vector<int>& labels, bool* degenerate = nullptr);

// Davies-Bouldin index (lower = tighter clusters). Coincident centroids make
// the index +inf and set *degenerate rather than failing.
double davies_bouldin(const Tensor& x, const std::vector<int>& labels,
                      bool* degenerate = nullptr);

// (C, C) cosine similarities between class centroids of two feature sets;
// entry (i, j) compares class i of a with class j of b. Every class must be
// present on both sides; zero-norm centroids yield cosine 0.
Tensor cross_modal_alignment(const FeatureMatrix& a, const FeatureMatrix& b, int num_classes);

double mean_diagonal(const Tensor& square);

// Multinomial logistic probe: trained on one modality's features, scored on
// the other's. Full-batch gradient descent from zero weights, L2 1e-3,
// 500 iterations, step 1/L with L = 0.5 * max row squared norm + L2.
double zero_shot_transfer(const FeatureMatrix& train, const FeatureMatrix& test,
                          int num_classes);

struct EffectiveDim {
  std::size_t components = 0;  // principal components for >= threshold variance
  double fraction = 0.0;       // components / feature dimension
  bool degenerate = false;     // zero total variance
};

EffectiveDim effective_dim(const Tensor& x, double variance_threshold = 0.95);

// Eigenvalues of a dense symmetric matrix (cyclic Jacobi), descending.
std::vector<double> sym_eigenvalues(std::vector<double> a, std::size_t n);

}  // namespace snn
