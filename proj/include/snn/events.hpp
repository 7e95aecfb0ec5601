#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "snn/tensor.hpp"

namespace snn {

enum class Modality { kVisual, kAudio };

std::string to_string(Modality m);
Modality modality_from_string(const std::string& s);

struct Geometry {
  std::uint16_t width = 0;
  std::uint16_t height = 0;
  std::uint16_t polarities = 2;

  bool operator==(const Geometry&) const = default;
};

struct Event {
  std::uint32_t t = 0;  // microseconds
  std::uint16_t x = 0;  // spatial column / cochlear channel
  std::uint16_t y = 0;  // spatial row (0 for audio)
  std::uint8_t p = 0;   // polarity in {0,1}

  bool operator==(const Event&) const = default;
};

/// One sample: time-sorted events plus label, modality and sensor geometry.
struct EventStream {
  std::vector<Event> events;
  int label = 0;  // raw class id (pre unification)
  Modality modality = Modality::kVisual;
  Geometry geometry;
  std::optional<std::uint32_t> duration_us;  // set from metadata when known

  // Last event time + 1us unless metadata supplied a duration.
  std::uint32_t effective_duration() const;

  bool operator==(const EventStream&) const = default;
};

/// Dense binned binary spike tensor. Visual data is (time, polarity, height,
/// width); audio data is (time, channel).
struct SpikeTensor {
  Tensor data;
  Modality modality = Modality::kVisual;
};

// 5-byte N-MNIST records: byte0=x, byte1=y, byte2 bit7=polarity, byte2 bits
// 6..0 concatenated with bytes 3..4 form a 23-bit big-endian timestamp (us).
EventStream parse_nmnist_bin(const std::vector<std::uint8_t>& bytes, const Geometry& geometry);

// Portable EVT1 container (see README for the byte layout).
std::vector<std::uint8_t> write_evt(const EventStream& stream);
EventStream read_evt(const std::vector<std::uint8_t>& bytes);

// Event at time t lands in bin floor(t*bins/duration), clamped to the last
// bin; a cell holds 1 if at least one event maps there.
SpikeTensor bin_events(const EventStream& stream, std::size_t bins);

// Modulo mapping of raw class ids onto a unified label space.
int remap_label(int raw, int num_unified);

enum class SynthKind { kSpatial, kTemporal };

struct SynthParams {
  std::uint16_t grid = 16;       // spatial: square sensor side
  std::uint16_t channels = 32;   // temporal: cochlear channel count
  std::uint32_t duration_us = 2500;
  double intensity = 1.2;        // mean events per active cell
};

// Deterministic desk-scale stand-ins: spatial gives class-specific Poisson
// blobs on a 2-D grid, temporal gives class-specific per-channel rate ramps.
std::vector<EventStream> synth_dataset(SynthKind kind, int classes, int samples_per_class,
                                       std::uint64_t seed,
                                       const SynthParams& params = SynthParams{});

}  // namespace snn
