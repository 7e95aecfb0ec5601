#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "snn/checkpoint.hpp"
#include "snn/events.hpp"
#include "snn/lif.hpp"
#include "snn/memory.hpp"
#include "snn/tensor.hpp"

namespace snn {

// Memory mechanism wired between the spiking encoder and the classifier head.
//   kNone     - spikes feed the head directly
//   kScl      - same datapath as kNone; the trainer adds a contrastive loss
//               on the time-averaged embedding
//   kHopfield - per-timestep retrieval against a learnable pattern bank
//   kHgrn     - gated recurrent state carried across timesteps
//   kHybrid   - HGRN state passed through Hopfield retrieval, contrastive
//               loss active
enum class MemoryKind { kNone, kScl, kHopfield, kHgrn, kHybrid };

std::string to_string(MemoryKind k);
MemoryKind memory_kind_from_string(const std::string& s);
bool uses_scl(MemoryKind k);
bool uses_hopfield(MemoryKind k);
bool uses_hgrn(MemoryKind k);

struct VisualDims {
  std::size_t time = 25;
  std::size_t polarities = 2;
  std::size_t height = 34;
  std::size_t width = 34;
  std::size_t conv1 = 64;
  std::size_t conv2 = 128;
};

struct AudioDims {
  std::size_t time = 100;
  std::size_t channels = 700;
  std::size_t hidden1 = 1024;
  std::size_t hidden2 = 1024;
};

// Spatial size after the two 2x2 poolings and the resulting flatten width.
std::size_t pooled_dim(std::size_t d);
std::size_t visual_flat_dim(const VisualDims& d);

struct ModelSpec {
  bool visual = true;
  bool audio = false;
  MemoryKind memory = MemoryKind::kNone;
  VisualDims visual_dims;
  AudioDims audio_dims;
  std::size_t feature_dim = 512;
  std::size_t num_classes = 10;
  std::size_t hopfield_patterns = 256;
  double hopfield_beta = 0.0;  // <= 0 resolves to 1/sqrt(feature_dim)
  std::size_t hopfield_iters = 1;
  LIFParams lif;
  SurrogateParams surrogate;

  double resolved_beta() const;
  void validate() const;
};

struct ForwardResult {
  Tensor logits;     // (batch, classes), time-averaged head outputs
  Tensor embedding;  // (batch, feature), time-averaged post-memory features
  Tensor rates;      // (batch, feature), untracked pre-memory spike rates
  SpikeActivity activity;
};

// Spiking encoder(s) + memory mechanism + shared head. Parameter
// initialization derives one RNG stream per parameter name, so a joint
// visual+audio model and two single-modality models built from the same seed
// start from identical weights wherever their parameter names coincide.
class Model {
 public:
  Model(ModelSpec spec, std::uint64_t seed);

  const ModelSpec& spec() const { return spec_; }
  const NamedTensors& params() const { return params_; }
  NamedTensors& params() { return params_; }
  std::size_t param_count() const;
  Tensor* find(const std::string& name);

  // batch: (B, T, polarities, H, W) for visual, (B, T, channels) for audio.
  // Spike/synop tallies are collected only in kHard surrogate mode and when
  // record_activity is set.
  ForwardResult forward(const Tensor& batch, Modality modality,
                        bool record_activity = true) const;

  // Copies values from a checkpoint into the registered parameters; names and
  // shapes must match exactly.
  void load_params(const NamedTensors& loaded);

 private:
  struct VisualEnc {
    Tensor c1w, c1b, c2w, c2b, fcw, fcb;
  };
  struct AudioEnc {
    Tensor f1w, f1b, f2w, f2b, f3w, f3b;
  };

  Tensor encode_visual_step(const Tensor& x, std::vector<Tensor>& u, SpikeActivity* act) const;
  Tensor encode_audio_step(const Tensor& x, std::vector<Tensor>& u, SpikeActivity* act) const;

  ModelSpec spec_;
  VisualEnc vis_;
  AudioEnc aud_;
  Tensor patterns_;
  HGRNWeights hgrn_;
  Tensor head_w_, head_b_;
  NamedTensors params_;
  std::vector<double> cov1_h_, cov1_w_, cov2_h_, cov2_w_;  // conv fan-out tables
};

// Stacks equally shaped sample tensors along a new leading axis.
Tensor stack_samples(const std::vector<Tensor>& samples);

}  // namespace snn
