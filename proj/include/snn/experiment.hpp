#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "snn/events.hpp"
#include "snn/model.hpp"
#include "snn/train.hpp"

namespace snn {

// Where samples come from: generated on the fly, or .evt files on disk.
struct DataConfig {
  std::string source = "synth";  // "synth" | "evt"
  int classes = 4;
  int samples_per_class = 200;   // synth only
  double test_fraction = 0.2;
  SynthParams visual_synth;
  SynthParams audio_synth;
  std::string visual_dir;  // evt only
  std::string audio_dir;   // evt only
};

// Externally supplied accuracy row to compare a joint run against. The
// quoted average is reported next to the arithmetic mean of the quoted
// per-modality numbers; a mismatch beyond 0.005 sets a discrepancy flag in
// joint.json instead of being silently repeated.
struct ReferenceRow {
  double visual = 0.0;
  double audio = 0.0;
  double average = 0.0;
};

struct ExperimentConfig {
  std::string experiment;  // "ablation" | "joint" | "engram"
  std::uint64_t seed = 42;
  std::string out_dir;
  DataConfig data;
  ModelSpec model;  // memory/modality flags are overridden per cell
  TrainConfig train;
  std::vector<MemoryKind> variants;   // ablation, engram
  std::vector<Modality> modalities;   // ablation
  MemoryKind joint_memory = MemoryKind::kHgrn;
  std::size_t engram_per_class = 100;
  std::string engram_split = "test";  // "test" | "train"
  std::string checkpoints_dir;        // engram: where <variant>-<modality>.snnw live
  std::optional<ReferenceRow> reference;

  static ExperimentConfig load(const std::string& path);
  static ExperimentConfig from_json_text(const std::string& text);
  void validate() const;
};

// Number of worker threads for independent experiment cells: SNN_THREADS if
// set (>= 1), otherwise the hardware count, always clamped to the cell count.
std::size_t worker_threads(std::size_t cells);

void run_ablation(const ExperimentConfig& cfg);
void run_joint(const ExperimentConfig& cfg);
// Analyses previously trained cells: for every (variant, modality) the
// checkpoint <checkpoints_dir>/<variant>-<modality>.snnw must exist.
void run_engram(const ExperimentConfig& cfg);

// Dispatches on cfg.experiment.
void run_experiment(const ExperimentConfig& cfg);

}  // namespace snn
