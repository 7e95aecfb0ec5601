#include "snn/energy.hpp"

#include <limits>

#include "snn/error.hpp"

namespace snn {

double fc_macs(std::size_t in_features, std::size_t out_features) {
  return static_cast<double>(in_features) * static_cast<double>(out_features);
}

double conv_macs(std::size_t in_ch, std::size_t out_ch, std::size_t in_h, std::size_t in_w,
                 std::size_t kh, std::size_t kw, std::size_t stride, std::size_t pad) {
  if (stride == 0) throw ConfigError("conv_macs: stride must be >= 1");
  if (in_h + 2 * pad < kh || in_w + 2 * pad < kw)
    throw ConfigError("conv_macs: kernel larger than padded input");
  const std::size_t out_h = (in_h + 2 * pad - kh) / stride + 1;
  const std::size_t out_w = (in_w + 2 * pad - kw) / stride + 1;
  return static_cast<double>(out_h * out_w) * static_cast<double>(out_ch) *
         static_cast<double>(in_ch * kh * kw);
}

namespace {

double encoder_macs(const ModelSpec& spec, Modality modality) {
  double macs = 0.0;
  if (modality == Modality::kVisual) {
    const auto& d = spec.visual_dims;
    const std::size_t h1 = pooled_dim(d.height), w1 = pooled_dim(d.width);
    macs += conv_macs(d.polarities, d.conv1, d.height, d.width, 3, 3, 1, 1);
    macs += conv_macs(d.conv1, d.conv2, h1, w1, 3, 3, 1, 1);
    macs += fc_macs(visual_flat_dim(d), spec.feature_dim);
  } else {
    const auto& d = spec.audio_dims;
    macs += fc_macs(d.channels, d.hidden1);
    macs += fc_macs(d.hidden1, d.hidden2);
    macs += fc_macs(d.hidden2, spec.feature_dim);
  }
  return macs;
}

double memory_macs(const ModelSpec& spec) {
  const double F = static_cast<double>(spec.feature_dim);
  const double N = static_cast<double>(spec.hopfield_patterns);
  double macs = 0.0;
  if (uses_hgrn(spec.memory)) macs += 3.0 * F * F;  // W_r x, U_r h, W_h x
  if (uses_hopfield(spec.memory))
    macs += 2.0 * N * F * static_cast<double>(spec.hopfield_iters);  // P xi and P^T attn
  return macs;
}

std::size_t timesteps(const ModelSpec& spec, Modality modality) {
  return modality == Modality::kVisual ? spec.visual_dims.time : spec.audio_dims.time;
}

}  // namespace

double count_ann_macs(const ModelSpec& spec, Modality modality) {
  const double per_step = encoder_macs(spec, modality) + memory_macs(spec) +
                          static_cast<double>(spec.feature_dim) * spec.num_classes;
  return per_step * static_cast<double>(timesteps(spec, modality));
}

double count_dense_macs(const ModelSpec& spec, Modality modality) {
  const double F = static_cast<double>(spec.feature_dim);
  const double N = static_cast<double>(spec.hopfield_patterns);
  double per_step = 0.0;
  switch (spec.memory) {
    case MemoryKind::kNone:
    case MemoryKind::kScl:
      // Head consumes binary spikes; fully covered by the synop account.
      break;
    case MemoryKind::kHopfield:
      // P xi consumes spikes (synops); the attention read-out and the head
      // see analog values.
      per_step = N * F * static_cast<double>(spec.hopfield_iters) + F * spec.num_classes;
      break;
    case MemoryKind::kHgrn:
      // W_r x / W_h x consume spikes; U_r h and the head do not.
      per_step = F * F + F * spec.num_classes;
      break;
    case MemoryKind::kHybrid:
      per_step = F * F + 2.0 * N * F * static_cast<double>(spec.hopfield_iters) +
                 F * spec.num_classes;
      break;
  }
  return per_step * static_cast<double>(timesteps(spec, modality));
}

double count_snn_synops(const SpikeActivity& activity, const ModelSpec& spec) {
  std::vector<std::string> known = {"head"};
  if (spec.visual) {
    known.insert(known.end(), {"visual.conv1", "visual.conv2", "visual.fc"});
  }
  if (spec.audio) {
    known.insert(known.end(), {"audio.fc1", "audio.fc2", "audio.fc3"});
  }
  if (uses_hgrn(spec.memory)) known.push_back("memory.hgrn.x");
  if (uses_hopfield(spec.memory)) known.push_back("memory.hopfield");
  for (const auto& s : activity.synapses) {
    bool ok = false;
    for (const auto& k : known) ok = ok || s.name == k;
    if (!ok)
      throw Error("count_snn_synops: layer '" + s.name + "' is not part of this model");
  }
  return activity.total_synops();
}

OpsReport efficiency_report(const ModelSpec& spec, Modality modality,
                            const SpikeActivity& activity, std::size_t samples) {
  if (samples == 0) throw ConfigError("efficiency_report: samples must be >= 1");
  OpsReport r;
  r.ann_macs = count_ann_macs(spec, modality);
  r.snn_synops = count_snn_synops(activity, spec) / static_cast<double>(samples);
  r.snn_dense_macs = count_dense_macs(spec, modality);
  if (!activity.spiking.empty()) r.sparsity = activity.sparsity();
  const double denom = r.snn_synops + r.snn_dense_macs;
  if (denom <= 0.0) {
    r.unbounded = true;
    r.ratio = std::numeric_limits<double>::infinity();
  } else {
    r.ratio = r.ann_macs / denom;
  }
  return r;
}

}  // namespace snn
