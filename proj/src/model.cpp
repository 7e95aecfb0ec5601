#include "snn/model.hpp"

#include <algorithm>
#include <cmath>

#include "snn/error.hpp"
#include "snn/ops.hpp"
#include "snn/rng.hpp"

namespace snn {

std::string to_string(MemoryKind k) {
  switch (k) {
    case MemoryKind::kNone: return "none";
    case MemoryKind::kScl: return "scl";
    case MemoryKind::kHopfield: return "hopfield";
    case MemoryKind::kHgrn: return "hgrn";
    case MemoryKind::kHybrid: return "hybrid";
  }
  throw ConfigError("unknown memory kind");
}

MemoryKind memory_kind_from_string(const std::string& s) {
  if (s == "none") return MemoryKind::kNone;
  if (s == "scl") return MemoryKind::kScl;
  if (s == "hopfield") return MemoryKind::kHopfield;
  if (s == "hgrn") return MemoryKind::kHgrn;
  if (s == "hybrid") return MemoryKind::kHybrid;
  throw ConfigError("unknown memory kind '" + s + "'");
}

bool uses_scl(MemoryKind k) { return k == MemoryKind::kScl || k == MemoryKind::kHybrid; }
bool uses_hopfield(MemoryKind k) { return k == MemoryKind::kHopfield || k == MemoryKind::kHybrid; }
bool uses_hgrn(MemoryKind k) { return k == MemoryKind::kHgrn || k == MemoryKind::kHybrid; }

std::size_t pooled_dim(std::size_t d) { return d / 2; }

std::size_t visual_flat_dim(const VisualDims& d) {
  return d.conv2 * pooled_dim(pooled_dim(d.height)) * pooled_dim(pooled_dim(d.width));
}

double ModelSpec::resolved_beta() const {
  return hopfield_beta > 0.0 ? hopfield_beta : 1.0 / std::sqrt(static_cast<double>(feature_dim));
}

void ModelSpec::validate() const {
  if (!visual && !audio) throw ConfigError("model: enable at least one modality");
  if (feature_dim == 0) throw ConfigError("model: feature_dim must be >= 1");
  if (num_classes < 2) throw ConfigError("model: need at least 2 classes");
  if (visual) {
    const auto& d = visual_dims;
    if (d.time == 0 || d.polarities == 0 || d.conv1 == 0 || d.conv2 == 0)
      throw ConfigError("model: bad visual dims");
    if (d.height < 4 || d.width < 4)
      throw ConfigError("model: visual grid must be at least 4x4 to survive two poolings");
  }
  if (audio) {
    const auto& d = audio_dims;
    if (d.time == 0 || d.channels == 0 || d.hidden1 == 0 || d.hidden2 == 0)
      throw ConfigError("model: bad audio dims");
  }
  if (uses_hopfield(memory)) {
    if (hopfield_patterns == 0) throw ConfigError("model: hopfield needs at least 1 pattern");
    if (hopfield_iters == 0) throw ConfigError("model: hopfield needs at least 1 iteration");
  }
  if (lif.tau_m <= 0.0 || lif.dt <= 0.0) throw ConfigError("model: lif tau_m and dt must be > 0");
  if (surrogate.alpha <= 0.0) throw ConfigError("model: surrogate alpha must be > 0");
}

namespace {

Tensor uniform_init(Shape shape, std::size_t fan_in, std::uint64_t seed, const std::string& name) {
  Rng rng = Rng::derive(seed, "init/" + name);
  Tensor t = Tensor::zeros(std::move(shape));
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  double* p = t.data();
  for (std::size_t i = 0; i < t.size(); ++i) p[i] = rng.uniform(-bound, bound);
  return t.mark_parameter();
}

Tensor zeros_init(Shape shape) { return Tensor::zeros(std::move(shape)).mark_parameter(); }

// Coverage table: how many output positions a given input coordinate feeds
// for a k-tap / stride-1 convolution with symmetric padding. Used to turn
// input spike counts into synaptic-operation counts.
std::vector<double> coverage(std::size_t in, std::size_t k, std::size_t pad) {
  const std::size_t out = in + 2 * pad - k + 1;
  std::vector<double> cov(in, 0.0);
  for (std::size_t y = 0; y < in; ++y) {
    const long hi = std::min<long>(static_cast<long>(y + pad), static_cast<long>(out) - 1);
    const long lo = std::max<long>(0, static_cast<long>(y + pad) - static_cast<long>(k) + 1);
    cov[y] = static_cast<double>(hi >= lo ? hi - lo + 1 : 0);
  }
  return cov;
}

double nnz(const Tensor& t) {
  const double* p = t.data();
  double n = 0.0;
  for (std::size_t i = 0; i < t.size(); ++i)
    if (p[i] != 0.0) n += 1.0;
  return n;
}

// x: (B, Cin, H, W) binary; synops = sum over active inputs of
// cov_h(y) * cov_w(x) * cout.
double conv_synops(const Tensor& x, const std::vector<double>& cov_h,
                   const std::vector<double>& cov_w, std::size_t cout) {
  const std::size_t B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const double* p = x.data();
  double ops = 0.0;
  std::size_t i = 0;
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t y = 0; y < H; ++y)
        for (std::size_t xx = 0; xx < W; ++xx, ++i)
          if (p[i] != 0.0) ops += cov_h[y] * cov_w[xx];
  return ops * static_cast<double>(cout);
}

// (B, T, rest...) -> (B, rest...) at timestep t. Input data only; no tape.
Tensor time_slice(const Tensor& x, std::size_t t) {
  const Shape& s = x.shape();
  Shape out_shape;
  out_shape.push_back(s[0]);
  for (std::size_t i = 2; i < s.size(); ++i) out_shape.push_back(s[i]);
  const std::size_t B = s[0], T = s[1], rest = x.size() / (B * T);
  Tensor out = Tensor::zeros(out_shape);
  const double* src = x.data();
  double* dst = out.data();
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t r = 0; r < rest; ++r) dst[b * rest + r] = src[(b * T + t) * rest + r];
  return out;
}

}  // namespace

Model::Model(ModelSpec spec, std::uint64_t seed) : spec_(std::move(spec)) {
  spec_.validate();
  const std::size_t F = spec_.feature_dim;

  if (spec_.visual) {
    const auto& d = spec_.visual_dims;
    vis_.c1w = uniform_init({d.conv1, d.polarities, 3, 3}, d.polarities * 9, seed,
                            "visual.conv1.w");
    vis_.c1b = zeros_init({d.conv1});
    vis_.c2w = uniform_init({d.conv2, d.conv1, 3, 3}, d.conv1 * 9, seed, "visual.conv2.w");
    vis_.c2b = zeros_init({d.conv2});
    const std::size_t flat = visual_flat_dim(d);
    vis_.fcw = uniform_init({flat, F}, flat, seed, "visual.fc.w");
    vis_.fcb = zeros_init({F});
    params_.emplace_back("visual.conv1.w", vis_.c1w);
    params_.emplace_back("visual.conv1.b", vis_.c1b);
    params_.emplace_back("visual.conv2.w", vis_.c2w);
    params_.emplace_back("visual.conv2.b", vis_.c2b);
    params_.emplace_back("visual.fc.w", vis_.fcw);
    params_.emplace_back("visual.fc.b", vis_.fcb);
    cov1_h_ = coverage(d.height, 3, 1);
    cov1_w_ = coverage(d.width, 3, 1);
    cov2_h_ = coverage(pooled_dim(d.height), 3, 1);
    cov2_w_ = coverage(pooled_dim(d.width), 3, 1);
  }
  if (spec_.audio) {
    const auto& d = spec_.audio_dims;
    aud_.f1w = uniform_init({d.channels, d.hidden1}, d.channels, seed, "audio.fc1.w");
    aud_.f1b = zeros_init({d.hidden1});
    aud_.f2w = uniform_init({d.hidden1, d.hidden2}, d.hidden1, seed, "audio.fc2.w");
    aud_.f2b = zeros_init({d.hidden2});
    aud_.f3w = uniform_init({d.hidden2, F}, d.hidden2, seed, "audio.fc3.w");
    aud_.f3b = zeros_init({F});
    params_.emplace_back("audio.fc1.w", aud_.f1w);
    params_.emplace_back("audio.fc1.b", aud_.f1b);
    params_.emplace_back("audio.fc2.w", aud_.f2w);
    params_.emplace_back("audio.fc2.b", aud_.f2b);
    params_.emplace_back("audio.fc3.w", aud_.f3w);
    params_.emplace_back("audio.fc3.b", aud_.f3b);
  }
  if (uses_hopfield(spec_.memory)) {
    Rng rng = Rng::derive(seed, "init/memory.hopfield.patterns");
    patterns_ = Tensor::zeros({spec_.hopfield_patterns, F});
    const double s = 1.0 / std::sqrt(static_cast<double>(F));
    double* p = patterns_.data();
    for (std::size_t i = 0; i < patterns_.size(); ++i) p[i] = rng.normal() * s;
    patterns_.mark_parameter();
    params_.emplace_back("memory.hopfield.patterns", patterns_);
  }
  if (uses_hgrn(spec_.memory)) {
    hgrn_.w_r = uniform_init({F, F}, F, seed, "memory.hgrn.w_r");
    hgrn_.u_r = uniform_init({F, F}, F, seed, "memory.hgrn.u_r");
    hgrn_.b_r = zeros_init({F});
    hgrn_.w_h = uniform_init({F, F}, F, seed, "memory.hgrn.w_h");
    hgrn_.b_h = zeros_init({F});
    params_.emplace_back("memory.hgrn.w_r", hgrn_.w_r);
    params_.emplace_back("memory.hgrn.u_r", hgrn_.u_r);
    params_.emplace_back("memory.hgrn.b_r", hgrn_.b_r);
    params_.emplace_back("memory.hgrn.w_h", hgrn_.w_h);
    params_.emplace_back("memory.hgrn.b_h", hgrn_.b_h);
  }
  head_w_ = uniform_init({F, spec_.num_classes}, F, seed, "head.w");
  head_b_ = zeros_init({spec_.num_classes});
  params_.emplace_back("head.w", head_w_);
  params_.emplace_back("head.b", head_b_);
}

std::size_t Model::param_count() const {
  std::size_t n = 0;
  for (const auto& [name, t] : params_) n += t.size();
  return n;
}

Tensor* Model::find(const std::string& name) {
  for (auto& [n, t] : params_)
    if (n == name) return &t;
  return nullptr;
}

void Model::load_params(const NamedTensors& loaded) {
  if (loaded.size() != params_.size())
    throw ConfigError("load_params: checkpoint has " + std::to_string(loaded.size()) +
                      " tensors, model has " + std::to_string(params_.size()));
  for (std::size_t i = 0; i < loaded.size(); ++i) {
    auto& [name, t] = params_[i];
    const auto& [lname, lt] = loaded[i];
    if (lname != name)
      throw ConfigError("load_params: expected tensor '" + name + "', found '" + lname + "'");
    if (!same_shape(lt.shape(), t.shape()))
      throw ShapeError("load_params: shape mismatch for '" + name + "': " +
                       shape_str(lt.shape()) + " vs " + shape_str(t.shape()));
    std::copy(lt.data(), lt.data() + lt.size(), t.data());
  }
}

Tensor Model::encode_visual_step(const Tensor& x, std::vector<Tensor>& u,
                                 SpikeActivity* act) const {
  const auto& d = spec_.visual_dims;
  const std::size_t B = x.dim(0);

  if (act) act->add_synops("visual.conv1", nnz(x), conv_synops(x, cov1_h_, cov1_w_, d.conv1));
  Tensor c1 = conv2d(x, vis_.c1w, vis_.c1b, 1, 1);
  auto r1 = lif_step(u[0], c1, spec_.lif, spec_.surrogate);
  u[0] = r1.u_next;
  if (act) act->add_spiking("visual.lif1", c1.size() / B, B, nnz(r1.spikes));

  Tensor p1 = maxpool2d(r1.spikes);
  if (act) act->add_synops("visual.conv2", nnz(p1), conv_synops(p1, cov2_h_, cov2_w_, d.conv2));
  Tensor c2 = conv2d(p1, vis_.c2w, vis_.c2b, 1, 1);
  auto r2 = lif_step(u[1], c2, spec_.lif, spec_.surrogate);
  u[1] = r2.u_next;
  if (act) act->add_spiking("visual.lif2", c2.size() / B, B, nnz(r2.spikes));

  Tensor p2 = maxpool2d(r2.spikes);
  if (act) act->add_synops("visual.fc", nnz(p2), nnz(p2) * spec_.feature_dim);
  Tensor f = add_rowvec(matmul(reshape(p2, {B, visual_flat_dim(d)}), vis_.fcw), vis_.fcb);
  auto r3 = lif_step(u[2], f, spec_.lif, spec_.surrogate);
  u[2] = r3.u_next;
  if (act) act->add_spiking("visual.lif3", spec_.feature_dim, B, nnz(r3.spikes));
  return r3.spikes;
}

Tensor Model::encode_audio_step(const Tensor& x, std::vector<Tensor>& u,
                                SpikeActivity* act) const {
  const auto& d = spec_.audio_dims;
  const std::size_t B = x.dim(0);

  if (act) act->add_synops("audio.fc1", nnz(x), nnz(x) * d.hidden1);
  Tensor a1 = add_rowvec(matmul(x, aud_.f1w), aud_.f1b);
  auto r1 = lif_step(u[0], a1, spec_.lif, spec_.surrogate);
  u[0] = r1.u_next;
  if (act) act->add_spiking("audio.lif1", d.hidden1, B, nnz(r1.spikes));

  if (act) act->add_synops("audio.fc2", nnz(r1.spikes), nnz(r1.spikes) * d.hidden2);
  Tensor a2 = add_rowvec(matmul(r1.spikes, aud_.f2w), aud_.f2b);
  auto r2 = lif_step(u[1], a2, spec_.lif, spec_.surrogate);
  u[1] = r2.u_next;
  if (act) act->add_spiking("audio.lif2", d.hidden2, B, nnz(r2.spikes));

  if (act) act->add_synops("audio.fc3", nnz(r2.spikes), nnz(r2.spikes) * spec_.feature_dim);
  Tensor a3 = add_rowvec(matmul(r2.spikes, aud_.f3w), aud_.f3b);
  auto r3 = lif_step(u[2], a3, spec_.lif, spec_.surrogate);
  u[2] = r3.u_next;
  if (act) act->add_spiking("audio.lif3", spec_.feature_dim, B, nnz(r3.spikes));
  return r3.spikes;
}

ForwardResult Model::forward(const Tensor& batch, Modality modality, bool record_activity) const {
  const bool is_visual = modality == Modality::kVisual;
  if (is_visual && !spec_.visual) throw ConfigError("forward: model has no visual encoder");
  if (!is_visual && !spec_.audio) throw ConfigError("forward: model has no audio encoder");

  const std::size_t F = spec_.feature_dim;
  std::size_t T = 0;
  if (is_visual) {
    const auto& d = spec_.visual_dims;
    if (batch.shape().size() != 5 || batch.dim(1) != d.time || batch.dim(2) != d.polarities ||
        batch.dim(3) != d.height || batch.dim(4) != d.width)
      throw ShapeError("forward: visual batch " + shape_str(batch.shape()) + " does not match " +
                       "(B," + std::to_string(d.time) + "," + std::to_string(d.polarities) + "," +
                       std::to_string(d.height) + "," + std::to_string(d.width) + ")");
    T = d.time;
  } else {
    const auto& d = spec_.audio_dims;
    if (batch.shape().size() != 3 || batch.dim(1) != d.time || batch.dim(2) != d.channels)
      throw ShapeError("forward: audio batch " + shape_str(batch.shape()) + " does not match " +
                       "(B," + std::to_string(d.time) + "," + std::to_string(d.channels) + ")");
    T = d.time;
  }
  const std::size_t B = batch.dim(0);
  if (B == 0) throw ShapeError("forward: empty batch");

  ForwardResult out;
  SpikeActivity* act =
      (record_activity && spec_.surrogate.mode == SurrogateMode::kHard) ? &out.activity : nullptr;

  std::vector<Tensor> u;
  if (is_visual) {
    const auto& d = spec_.visual_dims;
    u = {Tensor::full({B, d.conv1, d.height, d.width}, spec_.lif.u_rest),
         Tensor::full({B, d.conv2, pooled_dim(d.height), pooled_dim(d.width)}, spec_.lif.u_rest),
         Tensor::full({B, F}, spec_.lif.u_rest)};
  } else {
    const auto& d = spec_.audio_dims;
    u = {Tensor::full({B, d.hidden1}, spec_.lif.u_rest),
         Tensor::full({B, d.hidden2}, spec_.lif.u_rest),
         Tensor::full({B, F}, spec_.lif.u_rest)};
  }

  Tensor h;  // HGRN state
  if (uses_hgrn(spec_.memory)) h = Tensor::zeros({B, F});
  Tensor rates = Tensor::zeros({B, F});
  Tensor acc_logits, acc_emb;

  for (std::size_t t = 0; t < T; ++t) {
    Tensor x = time_slice(batch, t);
    Tensor s = is_visual ? encode_visual_step(x, u, act) : encode_audio_step(x, u, act);

    {
      const double* ps = s.data();
      double* pr = rates.data();
      for (std::size_t i = 0; i < rates.size(); ++i) pr[i] += ps[i];
    }

    Tensor f = s;
    if (uses_hgrn(spec_.memory)) {
      if (act) act->add_synops("memory.hgrn.x", nnz(s), nnz(s) * 2.0 * F);
      h = hgrn_step(s, h, hgrn_);
      f = h;
    }
    if (uses_hopfield(spec_.memory)) {
      if (act && !uses_hgrn(spec_.memory))
        act->add_synops("memory.hopfield", nnz(f), nnz(f) * spec_.hopfield_patterns);
      f = hopfield_retrieve(patterns_, f, spec_.resolved_beta(), spec_.hopfield_iters);
    }
    if (act && !uses_hgrn(spec_.memory) && !uses_hopfield(spec_.memory))
      act->add_synops("head", nnz(f), nnz(f) * spec_.num_classes);

    Tensor lg = add_rowvec(matmul(f, head_w_), head_b_);
    acc_logits = t == 0 ? lg : add(acc_logits, lg);
    acc_emb = t == 0 ? f : add(acc_emb, f);
  }

  const double inv_t = 1.0 / static_cast<double>(T);
  out.logits = scale(acc_logits, inv_t);
  out.embedding = scale(acc_emb, inv_t);
  {
    double* pr = rates.data();
    for (std::size_t i = 0; i < rates.size(); ++i) pr[i] *= inv_t;
  }
  out.rates = rates;
  return out;
}

Tensor stack_samples(const std::vector<Tensor>& samples) {
  if (samples.empty()) throw ConfigError("stack_samples: empty batch");
  const Shape& s0 = samples[0].shape();
  Shape out_shape;
  out_shape.push_back(samples.size());
  for (std::size_t d : s0) out_shape.push_back(d);
  Tensor out = Tensor::zeros(out_shape);
  const std::size_t step = samples[0].size();
  double* dst = out.data();
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (!same_shape(samples[i].shape(), s0))
      throw ShapeError("stack_samples: mixed sample shapes");
    std::copy(samples[i].data(), samples[i].data() + step, dst + i * step);
  }
  return out;
}

}  // namespace snn
