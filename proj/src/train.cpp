#include "snn/train.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "snn/error.hpp"
#include "snn/ops.hpp"
#include "snn/rng.hpp"

namespace snn {

AdamW::AdamW(const NamedTensors& params, AdamWConfig cfg) : cfg_(cfg) {
  if (cfg_.lr < 0.0) throw ConfigError("adamw: lr must be >= 0");
  if (cfg_.beta1 < 0.0 || cfg_.beta1 >= 1.0 || cfg_.beta2 < 0.0 || cfg_.beta2 >= 1.0)
    throw ConfigError("adamw: betas must lie in [0, 1)");
  for (const auto& [name, t] : params) {
    Slot s;
    s.name = name;
    s.param = t;
    s.m.assign(t.size(), 0.0);
    s.v.assign(t.size(), 0.0);
    slots_.push_back(std::move(s));
  }
}

std::size_t AdamW::step() {
  // A slot participates only if backward touched it this step; a shared
  // optimizer must not decay parameters of an encoder that never ran.
  std::vector<Slot*> live;
  std::size_t bad = 0;
  for (auto& s : slots_) {
    if (!s.param.has_grad()) continue;
    const auto& g = s.param.grad();
    bool finite = true;
    for (double v : g) {
      if (!std::isfinite(v)) {
        finite = false;
        break;
      }
    }
    if (!finite) {
      ++bad;
      continue;
    }
    live.push_back(&s);
  }
  skipped_ += bad;
  if (live.empty()) return bad;

  double scale = 1.0;
  if (cfg_.clip_norm > 0.0) {
    double sq = 0.0;
    for (Slot* s : live)
      for (double v : s->param.grad()) sq += v * v;
    const double norm = std::sqrt(sq);
    if (norm > cfg_.clip_norm) scale = cfg_.clip_norm / norm;
  }

  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (Slot* s : live) {
    double* p = s->param.data();
    const auto& g = s->param.grad();
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double gi = g[i] * scale;
      s->m[i] = cfg_.beta1 * s->m[i] + (1.0 - cfg_.beta1) * gi;
      s->v[i] = cfg_.beta2 * s->v[i] + (1.0 - cfg_.beta2) * gi * gi;
      const double mhat = s->m[i] / bc1;
      const double vhat = s->v[i] / bc2;
      p[i] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps) + cfg_.lr * cfg_.weight_decay * p[i];
    }
  }
  return bad;
}

void AdamW::zero_grad() {
  for (auto& s : slots_) s.param.clear_grad();
}

Dataset make_dataset(const std::vector<EventStream>& streams, std::size_t bins, int num_classes) {
  if (streams.empty()) throw ConfigError("make_dataset: no samples");
  Dataset d;
  d.modality = streams[0].modality;
  d.inputs.reserve(streams.size());
  d.labels.reserve(streams.size());
  for (const auto& s : streams) {
    if (s.modality != d.modality) throw ConfigError("make_dataset: mixed modalities");
    d.inputs.push_back(bin_events(s, bins).data);
    d.labels.push_back(remap_label(s.label, num_classes));
  }
  return d;
}

std::pair<std::vector<EventStream>, std::vector<EventStream>> split_streams(
    const std::vector<EventStream>& streams, double test_fraction, std::uint64_t seed) {
  if (test_fraction <= 0.0 || test_fraction >= 1.0)
    throw ConfigError("split_streams: test_fraction must be in (0, 1)");
  std::map<int, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < streams.size(); ++i) by_class[streams[i].label].push_back(i);

  std::vector<EventStream> train, test;
  for (auto& [label, idx] : by_class) {
    Rng rng = Rng::derive(seed, "split/class" + std::to_string(label));
    rng.shuffle(idx);
    std::size_t n_test = static_cast<std::size_t>(test_fraction * static_cast<double>(idx.size()));
    if (n_test == 0 && idx.size() >= 2) n_test = 1;
    if (n_test >= idx.size()) n_test = idx.size() - 1;
    for (std::size_t k = 0; k < idx.size(); ++k)
      (k < n_test ? test : train).push_back(streams[idx[k]]);
  }
  return {std::move(train), std::move(test)};
}

namespace {

std::vector<std::pair<std::size_t, std::size_t>> batch_bounds(std::size_t n, std::size_t bs,
                                                              bool need_two) {
  if (bs == 0) throw ConfigError("train: batch_size must be >= 1");
  std::vector<std::pair<std::size_t, std::size_t>> b;
  for (std::size_t i = 0; i < n; i += bs) b.emplace_back(i, std::min(i + bs, n));
  if (need_two && !b.empty() && b.back().second - b.back().first == 1) {
    if (b.size() >= 2) {
      b[b.size() - 2].second = n;
      b.pop_back();
    } else {
      throw ConfigError("train: contrastive loss needs at least 2 samples");
    }
  }
  return b;
}

std::size_t argmax_row(const Tensor& logits, std::size_t row) {
  const std::size_t C = logits.dim(1);
  const double* p = logits.data() + row * C;
  std::size_t best = 0;
  for (std::size_t c = 1; c < C; ++c)
    if (p[c] > p[best]) best = c;
  return best;
}

struct BatchLoss {
  Tensor loss;
  std::size_t correct = 0;
};

BatchLoss batch_loss(Model& model, const Dataset& data, const std::vector<std::size_t>& idx,
                     const SCLConfig& scl) {
  std::vector<Tensor> in;
  std::vector<int> lab;
  in.reserve(idx.size());
  lab.reserve(idx.size());
  for (std::size_t i : idx) {
    in.push_back(data.inputs[i]);
    lab.push_back(data.labels[i]);
  }
  Tensor x = stack_samples(in);
  ForwardResult fr = model.forward(x, data.modality, /*record_activity=*/false);
  Tensor loss = nll_mean(log_softmax_rows(fr.logits), lab);
  if (uses_scl(model.spec().memory))
    loss = add(loss, scale(scl_loss(fr.embedding, lab, scl), scl.weight));
  BatchLoss out;
  out.loss = loss;
  for (std::size_t r = 0; r < idx.size(); ++r)
    if (argmax_row(fr.logits, r) == static_cast<std::size_t>(lab[r])) ++out.correct;
  return out;
}

}  // namespace

EpochStats train_epoch(Model& model, AdamW& opt, const Dataset& data, const TrainConfig& cfg,
                       std::size_t epoch) {
  const std::size_t n = data.size();
  if (n == 0) throw ConfigError("train_epoch: empty dataset");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng = Rng::derive(cfg.seed, "epoch/" + std::to_string(epoch));
  rng.shuffle(order);

  const bool need_two = uses_scl(model.spec().memory);
  EpochStats stats;
  double loss_sum = 0.0;
  std::size_t correct = 0;
  auto bounds = batch_bounds(n, cfg.batch_size, need_two);
  for (const auto& [lo, hi] : bounds) {
    std::vector<std::size_t> idx(order.begin() + lo, order.begin() + hi);
    Tape tape;
    BatchLoss bl = batch_loss(model, data, idx, cfg.scl);
    loss_sum += bl.loss.item();
    correct += bl.correct;
    tape.backward(bl.loss);
    stats.skipped_params += opt.step();
    opt.zero_grad();
    ++stats.updates;
  }
  stats.loss = loss_sum / static_cast<double>(bounds.size());
  stats.accuracy = static_cast<double>(correct) / static_cast<double>(n);
  return stats;
}

namespace {

// Serves fixed-size index batches, reshuffling a fresh pass whenever the
// previous one runs out; the smaller joint dataset cycles several times.
class BatchFeeder {
 public:
  BatchFeeder(std::size_t n, std::uint64_t seed, std::string tag, std::size_t epoch)
      : n_(n), seed_(seed), tag_(std::move(tag)), epoch_(epoch) {
    order_.resize(n_);
    std::iota(order_.begin(), order_.end(), 0);
    reshuffle();
  }

  std::vector<std::size_t> next(std::size_t bs) {
    std::vector<std::size_t> idx;
    idx.reserve(bs);
    while (idx.size() < bs) {
      if (pos_ == n_) reshuffle();
      idx.push_back(order_[pos_++]);
    }
    return idx;
  }

 private:
  void reshuffle() {
    Rng rng = Rng::derive(seed_, "joint/" + tag_ + "/epoch" + std::to_string(epoch_) + "/cycle" +
                                     std::to_string(cycle_++));
    rng.shuffle(order_);
    pos_ = 0;
  }

  std::size_t n_;
  std::uint64_t seed_;
  std::string tag_;
  std::size_t epoch_;
  std::size_t pos_ = 0, cycle_ = 0;
  std::vector<std::size_t> order_;
};

}  // namespace

EpochStats joint_train_epoch(Model& model, AdamW& opt, const Dataset& visual,
                             const Dataset& audio, const TrainConfig& cfg, std::size_t epoch) {
  if (visual.modality != Modality::kVisual || audio.modality != Modality::kAudio)
    throw ConfigError("joint_train_epoch: datasets passed in the wrong order");
  if (visual.size() == 0 || audio.size() == 0)
    throw ConfigError("joint_train_epoch: both modalities need samples");
  if (uses_scl(model.spec().memory) && cfg.batch_size < 2)
    throw ConfigError("joint_train_epoch: contrastive loss needs batch_size >= 2");

  const std::size_t n_big = std::max(visual.size(), audio.size());
  const std::size_t steps = (n_big + cfg.batch_size - 1) / cfg.batch_size;
  BatchFeeder vis_feed(visual.size(), cfg.seed, "visual", epoch);
  BatchFeeder aud_feed(audio.size(), cfg.seed, "audio", epoch);

  EpochStats stats;
  double loss_sum = 0.0;
  std::size_t correct = 0, seen = 0;
  auto half_step = [&](const Dataset& data, BatchFeeder& feed) {
    Tape tape;
    BatchLoss bl = batch_loss(model, data, feed.next(cfg.batch_size), cfg.scl);
    loss_sum += bl.loss.item();
    correct += bl.correct;
    seen += cfg.batch_size;
    tape.backward(bl.loss);
    stats.skipped_params += opt.step();
    opt.zero_grad();
    ++stats.updates;
  };
  for (std::size_t s = 0; s < steps; ++s) {
    half_step(visual, vis_feed);  // fixed order: visual update, then audio
    half_step(audio, aud_feed);
  }
  stats.loss = loss_sum / static_cast<double>(2 * steps);
  stats.accuracy = static_cast<double>(correct) / static_cast<double>(seen);
  return stats;
}

EvalResult evaluate(const Model& model, const Dataset& data, std::size_t batch_size) {
  const std::size_t n = data.size();
  if (n == 0) throw ConfigError("evaluate: empty dataset");
  const std::size_t C = model.spec().num_classes;
  NoGrad ng;
  EvalResult res;
  res.confusion.assign(C, std::vector<int>(C, 0));
  double loss_sum = 0.0;
  std::size_t correct = 0;
  for (std::size_t lo = 0; lo < n; lo += batch_size) {
    const std::size_t hi = std::min(lo + batch_size, n);
    std::vector<Tensor> in(data.inputs.begin() + lo, data.inputs.begin() + hi);
    std::vector<int> lab(data.labels.begin() + lo, data.labels.begin() + hi);
    Tensor x = stack_samples(in);
    ForwardResult fr = model.forward(x, data.modality, /*record_activity=*/true);
    loss_sum += nll_mean(log_softmax_rows(fr.logits), lab).item() * static_cast<double>(hi - lo);
    for (std::size_t r = 0; r < lab.size(); ++r) {
      const std::size_t pred = argmax_row(fr.logits, r);
      res.confusion[lab[r]][pred] += 1;
      if (pred == static_cast<std::size_t>(lab[r])) ++correct;
    }
    res.activity.merge(fr.activity);
  }
  res.accuracy = static_cast<double>(correct) / static_cast<double>(n);
  res.ce_loss = loss_sum / static_cast<double>(n);
  // Soft-surrogate forwards record no activity; leave the default then.
  if (!res.activity.spiking.empty()) res.sparsity = res.activity.sparsity();
  return res;
}

}  // namespace snn
