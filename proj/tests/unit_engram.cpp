// Cluster metrics, alignment, the transfer probe and effective dimensionality,
// each checked against independent brute-force references.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "doctest.h"
#include "snn/engram.hpp"
#include "snn/error.hpp"
#include "snn/events.hpp"
#include "snn/rng.hpp"
#include "snn/tensor.hpp"

using namespace snn;

namespace {

// Reference silhouette built from an explicit pairwise distance matrix.
double silhouette_reference(const Tensor& x, const std::vector<int>& labels) {
  const std::size_t n = x.dim(0), d = x.dim(1);
  std::vector<std::vector<double>> dist(n, std::vector<double>(n, 0.0));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      double sq = 0.0;
      for (std::size_t k = 0; k < d; ++k) {
        const double v = x.at(i * d + k) - x.at(j * d + k);
        sq += v * v;
      }
      dist[i][j] = dist[j][i] = std::sqrt(sq);
    }
  }
  const int C = *std::max_element(labels.begin(), labels.end()) + 1;
  std::vector<std::size_t> count(C, 0);
  for (int l : labels) count[l]++;

  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (count[labels[i]] <= 1) continue;  // singleton scores 0
    double a = 0.0;
    std::vector<double> sums(C, 0.0);
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      if (labels[j] == labels[i])
        a += dist[i][j];
      else
        sums[labels[j]] += dist[i][j];
    }
    a /= static_cast<double>(count[labels[i]] - 1);
    double b = std::numeric_limits<double>::infinity();
    for (int c = 0; c < C; ++c)
      if (c != labels[i] && count[c] > 0) b = std::min(b, sums[c] / count[c]);
    const double m = std::max(a, b);
    if (m > 0.0) total += (b - a) / m;
  }
  return total / static_cast<double>(n);
}

double db_reference(const Tensor& x, const std::vector<int>& labels) {
  const std::size_t n = x.dim(0), d = x.dim(1);
  const int C = *std::max_element(labels.begin(), labels.end()) + 1;
  std::vector<std::vector<double>> cent(C, std::vector<double>(d, 0.0));
  std::vector<double> count(C, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    count[labels[i]] += 1.0;
    for (std::size_t k = 0; k < d; ++k) cent[labels[i]][k] += x.at(i * d + k);
  }
  for (int c = 0; c < C; ++c)
    for (std::size_t k = 0; k < d; ++k) cent[c][k] /= count[c];

  std::vector<double> scatter(C, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    double sq = 0.0;
    for (std::size_t k = 0; k < d; ++k) {
      const double v = x.at(i * d + k) - cent[labels[i]][k];
      sq += v * v;
    }
    scatter[labels[i]] += std::sqrt(sq);
  }
  for (int c = 0; c < C; ++c) scatter[c] /= count[c];

  double db = 0.0;
  for (int i = 0; i < C; ++i) {
    double worst = 0.0;
    for (int j = 0; j < C; ++j) {
      if (j == i) continue;
      double m = 0.0;
      for (std::size_t k = 0; k < d; ++k) {
        const double v = cent[i][k] - cent[j][k];
        m += v * v;
      }
      m = std::sqrt(m);
      worst = std::max(worst, m > 0.0 ? (scatter[i] + scatter[j]) / m
                                      : std::numeric_limits<double>::infinity());
    }
    db += worst;
  }
  return db / C;
}

FeatureMatrix fm(Tensor x, std::vector<int> labels) {
  FeatureMatrix f;
  f.x = std::move(x);
  f.labels = std::move(labels);
  return f;
}

}  // namespace

TEST_CASE("silhouette and davies-bouldin: two tight, distant pairs") {
  Tensor x = Tensor::from({4, 2}, {0, 0, 0, 1, 10, 10, 10, 11});
  std::vector<int> labels = {0, 0, 1, 1};
  CHECK(silhouette(x, labels) == doctest::Approx(0.9293).epsilon(1e-3));
  CHECK(davies_bouldin(x, labels) == doctest::Approx(1.0 / std::sqrt(200.0)).epsilon(1e-5));
}

TEST_CASE("cluster metrics match brute-force references on 50 instances") {
  double worst_sil = 0.0, worst_db = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    Rng rng(500 + static_cast<std::uint64_t>(trial));
    const std::size_t n = 6 + rng.index(20);
    const std::size_t d = 1 + rng.index(6);
    const int C = 2 + static_cast<int>(rng.index(3));
    Tensor x = Tensor::zeros({n, d});
    std::vector<int> labels(n);
    // At least one point per class, then random fill.
    for (std::size_t i = 0; i < n; ++i)
      labels[i] = i < static_cast<std::size_t>(C) ? static_cast<int>(i)
                                                  : static_cast<int>(rng.index(C));
    for (std::size_t i = 0; i < x.size(); ++i) x.at(i) = rng.uniform(-3, 3);

    worst_sil = std::max(worst_sil,
                         std::fabs(silhouette(x, labels) - silhouette_reference(x, labels)));
    worst_db =
        std::max(worst_db, std::fabs(davies_bouldin(x, labels) - db_reference(x, labels)));
  }
  CHECK(worst_sil <= 1e-9);
  CHECK(worst_db <= 1e-9);
}

TEST_CASE("silhouette is invariant to sample order") {
  Rng rng(9);
  Tensor x = Tensor::zeros({8, 3});
  for (std::size_t i = 0; i < x.size(); ++i) x.at(i) = rng.uniform(-1, 1);
  std::vector<int> labels = {0, 1, 2, 0, 1, 2, 0, 1};
  const double base = silhouette(x, labels);

  std::vector<std::size_t> perm = {7, 2, 5, 0, 3, 6, 1, 4};
  Tensor xp = Tensor::zeros({8, 3});
  std::vector<int> lp(8);
  for (std::size_t i = 0; i < 8; ++i) {
    lp[i] = labels[perm[i]];
    for (std::size_t k = 0; k < 3; ++k) xp.at(i * 3 + k) = x.at(perm[i] * 3 + k);
  }
  CHECK(silhouette(xp, lp) == doctest::Approx(base).epsilon(1e-12));
}

TEST_CASE("cluster metric degeneracies are scored, not fatal") {
  SUBCASE("singleton cluster points score 0 and raise the flag") {
    Tensor x = Tensor::from({3, 1}, {0, 1, 10});
    bool degenerate = false;
    const double s = silhouette(x, {0, 0, 1}, &degenerate);
    CHECK(degenerate);
    // Point 3 contributes 0; for the pair, a = 1 and b = 10 resp. 9.
    const double s1 = (10.0 - 1.0) / 10.0, s2 = (9.0 - 1.0) / 9.0;
    CHECK(s == doctest::Approx((s1 + s2) / 3.0).epsilon(1e-12));
  }
  SUBCASE("coincident points score 0 via the max(a,b) guard") {
    Tensor x = Tensor::from({4, 1}, {1, 1, 1, 1});
    bool degenerate = false;
    CHECK(silhouette(x, {0, 0, 1, 1}, &degenerate) == 0.0);
    CHECK(degenerate);
  }
  SUBCASE("two singleton clusters give zero scatter, DB = 0") {
    Tensor x = Tensor::from({2, 2}, {0, 0, 5, 5});
    CHECK(davies_bouldin(x, {0, 1}) == 0.0);
  }
  SUBCASE("coincident centroids blow up to +inf with the flag set") {
    // Classes interleaved around the same mean.
    Tensor x = Tensor::from({4, 1}, {-1, 1, -2, 2});
    bool degenerate = false;
    const double db = davies_bouldin(x, {0, 0, 1, 1}, &degenerate);
    CHECK(std::isinf(db));
    CHECK(degenerate);
  }
}

TEST_CASE("cross-modal alignment") {
  SUBCASE("a modality against itself has a unit diagonal") {
    Rng rng(15);
    Tensor x = Tensor::zeros({6, 4});
    for (std::size_t i = 0; i < x.size(); ++i) x.at(i) = rng.uniform(-1, 1);
    FeatureMatrix f = fm(x, {0, 1, 2, 0, 1, 2});
    Tensor m = cross_modal_alignment(f, f, 3);
    CHECK(m.shape() == Shape{3, 3});
    for (std::size_t c = 0; c < 3; ++c)
      CHECK(m.at(c * 3 + c) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(mean_diagonal(m) == doctest::Approx(1.0).epsilon(1e-12));
  }
  SUBCASE("orthogonal centroids score 0") {
    FeatureMatrix a = fm(Tensor::from({2, 2}, {1, 0, 1, 0}), {0, 0});
    FeatureMatrix b = fm(Tensor::from({2, 2}, {0, 1, 0, 1}), {0, 0});
    Tensor m = cross_modal_alignment(a, b, 1);
    CHECK(m.at(0) == doctest::Approx(0.0).epsilon(1e-12));
  }
  SUBCASE("entries are cosines, bounded by 1 in magnitude") {
    Rng rng(16);
    Tensor xa = Tensor::zeros({8, 5}), xb = Tensor::zeros({8, 5});
    for (std::size_t i = 0; i < xa.size(); ++i) {
      xa.at(i) = rng.uniform(-2, 2);
      xb.at(i) = rng.uniform(-2, 2);
    }
    std::vector<int> labels = {0, 1, 2, 3, 0, 1, 2, 3};
    Tensor m = cross_modal_alignment(fm(xa, labels), fm(xb, labels), 4);
    for (std::size_t i = 0; i < m.size(); ++i) {
      CHECK(m.at(i) <= 1.0 + 1e-12);
      CHECK(m.at(i) >= -1.0 - 1e-12);
    }
  }
  SUBCASE("high-dimensional random centroids are near-orthogonal") {
    Rng rng(17);
    const std::size_t d = 512;
    Tensor xa = Tensor::zeros({10, d}), xb = Tensor::zeros({10, d});
    for (std::size_t i = 0; i < xa.size(); ++i) {
      xa.at(i) = rng.normal();
      xb.at(i) = rng.normal();
    }
    std::vector<int> labels(10);
    for (int i = 0; i < 10; ++i) labels[i] = i;
    Tensor m = cross_modal_alignment(fm(xa, labels), fm(xb, labels), 10);
    CHECK(std::fabs(mean_diagonal(m)) < 0.1);
  }
  SUBCASE("a class missing on either side is an error") {
    FeatureMatrix a = fm(Tensor::from({2, 2}, {1, 0, 0, 1}), {0, 1});
    FeatureMatrix b = fm(Tensor::from({2, 2}, {1, 0, 0, 1}), {0, 0});
    CHECK_THROWS_AS(cross_modal_alignment(a, b, 2), ConfigError);
  }
  SUBCASE("zero-norm centroids yield cosine 0") {
    FeatureMatrix a = fm(Tensor::from({1, 2}, {0, 0}), {0});
    FeatureMatrix b = fm(Tensor::from({1, 2}, {1, 0}), {0});
    CHECK(cross_modal_alignment(a, b, 1).at(0) == 0.0);
  }
}

TEST_CASE("mean_diagonal") {
  Tensor m = Tensor::from({2, 2}, {1, 9, 9, 3});
  CHECK(mean_diagonal(m) == doctest::Approx(2.0).epsilon(1e-15));
  CHECK_THROWS_AS(mean_diagonal(Tensor::zeros({2, 3})), ShapeError);
}

TEST_CASE("zero-shot transfer probe") {
  SUBCASE("linearly separable features transfer almost perfectly") {
    Rng rng(19);
    const int C = 4;
    const std::size_t per = 20, d = 6;
    auto make = [&](double noise) {
      Tensor x = Tensor::zeros({per * C, d});
      std::vector<int> labels(per * C);
      for (std::size_t i = 0; i < per * C; ++i) {
        const int c = static_cast<int>(i % C);
        labels[i] = c;
        for (std::size_t k = 0; k < d; ++k)
          x.at(i * d + k) = (static_cast<int>(k) == c ? 1.0 : 0.0) + noise * rng.uniform(-1, 1);
      }
      return fm(std::move(x), std::move(labels));
    };
    FeatureMatrix train = make(0.05), test = make(0.05);
    CHECK(zero_shot_transfer(train, test, C) > 0.95);
  }
  SUBCASE("unstructured features score at chance") {
    // Mean over a few seeds to keep the check tight but stable.
    double acc = 0.0;
    const int runs = 5;
    for (int r = 0; r < runs; ++r) {
      Rng rng(700 + r);
      const std::size_t n = 200, d = 64;
      Tensor xa = Tensor::zeros({n, d}), xb = Tensor::zeros({n, d});
      std::vector<int> la(n), lb(n);
      for (std::size_t i = 0; i < n; ++i) {
        la[i] = static_cast<int>(i % 10);
        lb[i] = static_cast<int>(i % 10);
        for (std::size_t k = 0; k < d; ++k) {
          xa.at(i * d + k) = rng.normal();
          xb.at(i * d + k) = rng.normal();
        }
      }
      acc += zero_shot_transfer(fm(xa, la), fm(xb, lb), 10);
    }
    acc /= runs;
    CHECK(acc > 0.10 - 0.05);
    CHECK(acc < 0.10 + 0.05);
  }
  SUBCASE("deterministic: same inputs, same accuracy") {
    Rng rng(21);
    Tensor x = Tensor::zeros({30, 4});
    std::vector<int> labels(30);
    for (std::size_t i = 0; i < 30; ++i) labels[i] = static_cast<int>(i % 3);
    for (std::size_t i = 0; i < x.size(); ++i) x.at(i) = rng.uniform(-1, 1);
    FeatureMatrix f = fm(x, labels);
    CHECK(zero_shot_transfer(f, f, 3) == zero_shot_transfer(f, f, 3));
  }
}

TEST_CASE("effective dimensionality") {
  SUBCASE("rank-1 data needs one component") {
    Tensor x = Tensor::zeros({6, 4});
    Rng rng(23);
    for (std::size_t i = 0; i < 6; ++i) {
      const double s = rng.uniform(-2, 2);
      for (std::size_t k = 0; k < 4; ++k) x.at(i * 4 + k) = s * static_cast<double>(k + 1);
    }
    EffectiveDim ed = effective_dim(x);
    CHECK(ed.components == 1);
    CHECK(ed.fraction == doctest::Approx(0.25).epsilon(1e-12));
    CHECK_FALSE(ed.degenerate);
  }
  SUBCASE("scaled orthogonal columns: hand-computable spectrum") {
    // Columns 10*c1, 1*c2, 0.1*c3 with orthogonal zero-mean c's of norm 2:
    // eigenvalues 400, 4, 0.04; the top one holds 99% of the variance.
    const double c1[4] = {1, 1, -1, -1}, c2[4] = {1, -1, 1, -1}, c3[4] = {1, -1, -1, 1};
    Tensor x = Tensor::zeros({4, 3});
    for (std::size_t i = 0; i < 4; ++i) {
      x.at(i * 3 + 0) = 10.0 * c1[i];
      x.at(i * 3 + 1) = 1.0 * c2[i];
      x.at(i * 3 + 2) = 0.1 * c3[i];
    }
    EffectiveDim ed = effective_dim(x, 0.95);
    CHECK(ed.components == 1);
    CHECK(ed.fraction == doctest::Approx(1.0 / 3.0).epsilon(1e-12));

    // Requiring more variance pulls in the next component.
    CHECK(effective_dim(x, 0.9999).components == 2);
  }
  SUBCASE("isotropic data uses most dimensions") {
    Rng rng(25);
    Tensor x = Tensor::zeros({400, 8});
    for (std::size_t i = 0; i < x.size(); ++i) x.at(i) = rng.normal();
    EffectiveDim ed = effective_dim(x);
    CHECK(ed.fraction > 0.5);
  }
  SUBCASE("constant data is degenerate") {
    EffectiveDim ed = effective_dim(Tensor::full({5, 3}, 2.5));
    CHECK(ed.degenerate);
  }
}

TEST_CASE("symmetric eigenvalues by jacobi rotation") {
  SUBCASE("2x2 reference") {
    auto ev = sym_eigenvalues({2, 1, 1, 2}, 2);
    REQUIRE(ev.size() == 2);
    CHECK(ev[0] == doctest::Approx(3.0).epsilon(1e-12));
    CHECK(ev[1] == doctest::Approx(1.0).epsilon(1e-12));
  }
  SUBCASE("trace and frobenius norm preserved, order descending") {
    Rng rng(27);
    for (int trial = 0; trial < 10; ++trial) {
      const std::size_t n = 2 + rng.index(6);
      std::vector<double> a(n * n);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j <= i; ++j) {
          const double v = rng.uniform(-2, 2);
          a[i * n + j] = a[j * n + i] = v;
        }
      double trace = 0.0, frob = 0.0;
      for (std::size_t i = 0; i < n; ++i) trace += a[i * n + i];
      for (double v : a) frob += v * v;

      auto ev = sym_eigenvalues(a, n);
      REQUIRE(ev.size() == n);
      double etr = 0.0, efr = 0.0;
      for (double l : ev) {
        etr += l;
        efr += l * l;
      }
      CHECK(etr == doctest::Approx(trace).epsilon(1e-9));
      CHECK(efr == doctest::Approx(frob).epsilon(1e-9));
      for (std::size_t i = 1; i < n; ++i) CHECK(ev[i - 1] >= ev[i] - 1e-12);
    }
  }
}

TEST_CASE("rate features: balanced, seeded, validated") {
  ModelSpec spec;
  spec.visual = false;
  spec.audio = true;
  spec.memory = MemoryKind::kNone;
  spec.audio_dims = {4, 10, 12, 8};
  spec.feature_dim = 16;
  spec.num_classes = 2;
  spec.lif.theta = 0.3;
  Model model(spec, 3);

  SynthParams p;
  p.channels = 10;
  auto streams = synth_dataset(SynthKind::kTemporal, 2, 6, 31, p);
  Dataset data = make_dataset(streams, 4, 2);

  FeatureMatrix f = rate_features(model, data, 4, 99);
  CHECK(f.x.shape() == Shape{8, 16});
  CHECK(f.labels.size() == 8);
  CHECK(f.balanced);
  int per_class[2] = {0, 0};
  for (int l : f.labels) per_class[l]++;
  CHECK(per_class[0] == 4);
  CHECK(per_class[1] == 4);
  for (std::size_t i = 0; i < f.x.size(); ++i) {
    CHECK(f.x.at(i) >= 0.0);
    CHECK(f.x.at(i) <= 1.0);
  }

  // Same seed, same draw; different seed may differ.
  FeatureMatrix g = rate_features(model, data, 4, 99);
  for (std::size_t i = 0; i < f.x.size(); ++i) CHECK(f.x.at(i) == g.x.at(i));

  // Quota larger than the class: short class clears the balanced flag.
  FeatureMatrix h = rate_features(model, data, 10, 99);
  CHECK(h.x.dim(0) == 12);
  CHECK_FALSE(h.balanced);

  // A class the model expects but the data lacks is an error.
  ModelSpec three = spec;
  three.num_classes = 3;
  Model m3(three, 3);
  CHECK_THROWS_AS(rate_features(m3, data, 4, 99), ConfigError);
  CHECK_THROWS_AS(rate_features(model, data, 0, 99), ConfigError);
}
