#pragma once

#include "snn/lif.hpp"
#include "snn/model.hpp"

namespace snn {

// Operation counts per sample. The dense reference is the same topology run
// as a conventional network: every linear map fires on every timestep. The
// spiking account splits into event-driven synaptic operations (accumulates
// triggered by spikes, measured from recorded activity) and the analog
// residual (maps whose inputs are real-valued even in the spiking
// implementation: attention read-out, recurrent state mixing, the head when
// it consumes memory output).
struct OpsReport {
  double ann_macs = 0.0;
  double snn_synops = 0.0;
  double snn_dense_macs = 0.0;
  double ratio = 0.0;  // ann_macs / (snn_synops + snn_dense_macs)
  bool unbounded = false;
  double sparsity = 1.0;
};

// MACs of one dense application of a single map.
double fc_macs(std::size_t in_features, std::size_t out_features);
double conv_macs(std::size_t in_ch, std::size_t out_ch, std::size_t in_h, std::size_t in_w,
                 std::size_t kh, std::size_t kw, std::size_t stride = 1, std::size_t pad = 0);

double count_ann_macs(const ModelSpec& spec, Modality modality);
double count_dense_macs(const ModelSpec& spec, Modality modality);

// Sum of recorded synaptic operations; every recorded synapse layer must
// belong to the network described by spec.
double count_snn_synops(const SpikeActivity& activity, const ModelSpec& spec);

OpsReport efficiency_report(const ModelSpec& spec, Modality modality,
                            const SpikeActivity& activity, std::size_t samples);

}  // namespace snn
