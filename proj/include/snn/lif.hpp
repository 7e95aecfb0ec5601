#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "snn/tensor.hpp"

namespace snn {

// Leaky integrate-and-fire dynamics, discretized with forward Euler:
//   u' = u + (dt/tau_m) * (-(u - u_rest) + r*i)
// A neuron spikes when u' >= theta and is then reset to u_rest.
struct LIFParams {
  double tau_m = 2.0;
  double u_rest = 0.0;
  double r = 1.0;
  double theta = 1.0;
  double dt = 1.0;
};

// Gradient treatment of the spike nonlinearity. kHard keeps the exact
// Heaviside forward pass and substitutes 1/(alpha*|v|+1)^2 on the backward
// pass; kSoft replaces the forward pass itself with the smooth primitive
// 0.5*v/(alpha*|v|+1) + 0.5 whose derivative is 0.5/(alpha*|v|+1)^2, so the
// whole network becomes finite-difference checkable.
enum class SurrogateMode { kHard, kSoft };

struct SurrogateParams {
  double alpha = 10.0;
  SurrogateMode mode = SurrogateMode::kHard;
};

// Spike nonlinearity applied to the margin v = u' - theta.
Tensor spike_surrogate(const Tensor& v, const SurrogateParams& sp);

struct LIFStepResult {
  Tensor spikes;
  Tensor u_next;
};

// One Euler step followed by spiking and reset. In kHard mode the reset mask
// is detached so gradients flow only through the surrogate; in kSoft mode the
// soft spike participates in the reset and everything stays differentiable.
LIFStepResult lif_step(const Tensor& u, const Tensor& input, const LIFParams& lp,
                       const SurrogateParams& sp);

// Per-layer spike and synaptic-operation tallies collected during a forward
// pass, later consumed by the energy report.
struct SpikingLayer {
  std::string name;
  std::size_t neurons = 0;
  std::size_t timesteps = 0;
  double spikes = 0.0;
};

struct SynapseLayer {
  std::string name;
  double input_spikes = 0.0;
  double synops = 0.0;  // input spikes weighted by fan-out
};

struct SpikeActivity {
  std::vector<SpikingLayer> spiking;
  std::vector<SynapseLayer> synapses;

  void add_spiking(const std::string& name, std::size_t neurons, std::size_t timesteps,
                   double spikes);
  void add_synops(const std::string& name, double input_spikes, double synops);
  void merge(const SpikeActivity& other);

  // 1 - spikes / neuron-timesteps across all spiking layers; 1.0 when every
  // recorded neuron stayed silent. Undefined (ConfigError) with no records.
  double sparsity() const;
  double total_spikes() const;
  double total_synops() const;
};

}  // namespace snn
