#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "snn/events.hpp"
#include "snn/model.hpp"

namespace snn {

struct AdamWConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-4;
  double clip_norm = 5.0;  // global L2 clip; <= 0 disables
};

// AdamW with decoupled weight decay. Only parameters that actually received a
// gradient in the last backward pass are updated (moments, decay and all), so
// an optimizer shared across modality-specific submodels never drifts weights
// that did not participate in the step. Parameters whose gradient turns
// non-finite are skipped and counted instead of poisoning the weights.
class AdamW {
 public:
  AdamW(const NamedTensors& params, AdamWConfig cfg);

  std::size_t step();  // returns parameters skipped for non-finite grads
  void zero_grad();
  std::size_t steps_taken() const { return t_; }
  std::size_t total_skipped() const { return skipped_; }

 private:
  struct Slot {
    std::string name;
    Tensor param;
    std::vector<double> m, v;
  };
  std::vector<Slot> slots_;
  AdamWConfig cfg_;
  std::size_t t_ = 0;
  std::size_t skipped_ = 0;
};

// In-memory dataset of pre-binned samples.
struct Dataset {
  std::vector<Tensor> inputs;  // (T, ...) per sample
  std::vector<int> labels;
  Modality modality = Modality::kVisual;

  std::size_t size() const { return inputs.size(); }
};

Dataset make_dataset(const std::vector<EventStream>& streams, std::size_t bins, int num_classes);

// Stratified split: test_fraction of each class (rounded down, at least 1 when
// the class has >= 2 samples) goes to the test set, deterministically in seed.
std::pair<std::vector<EventStream>, std::vector<EventStream>> split_streams(
    const std::vector<EventStream>& streams, double test_fraction, std::uint64_t seed);

struct TrainConfig {
  std::size_t epochs = 5;
  std::size_t batch_size = 32;
  std::uint64_t seed = 42;
  SCLConfig scl;
  AdamWConfig opt;
};

struct EpochStats {
  double loss = 0.0;  // mean over batches of ce (+ weighted scl when active)
  double accuracy = 0.0;
  std::size_t skipped_params = 0;
  std::size_t updates = 0;  // optimizer steps taken during the epoch
};

struct EvalResult {
  double accuracy = 0.0;
  double ce_loss = 0.0;
  double sparsity = 1.0;
  std::vector<std::vector<int>> confusion;  // [true][predicted]
  SpikeActivity activity;
};

// One pass over the dataset in a seeded shuffle order. When the model's
// memory kind uses the contrastive loss, a trailing batch of one sample is
// folded into the previous batch (the loss needs >= 2 embeddings).
EpochStats train_epoch(Model& model, AdamW& opt, const Dataset& data, const TrainConfig& cfg,
                       std::size_t epoch);

// One joint pass of alternating batch training: each step runs two optimizer
// updates, first on a visual batch and then on an audio batch. The smaller
// dataset is recycled with a fresh shuffle until the larger one is exhausted.
EpochStats joint_train_epoch(Model& model, AdamW& opt, const Dataset& visual,
                             const Dataset& audio, const TrainConfig& cfg, std::size_t epoch);

EvalResult evaluate(const Model& model, const Dataset& data, std::size_t batch_size);

}  // namespace snn
