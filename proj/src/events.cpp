#include "snn/events.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "snn/bytes.hpp"
#include "snn/error.hpp"
#include "snn/rng.hpp"

namespace snn {

std::string to_string(Modality m) { return m == Modality::kVisual ? "visual" : "audio"; }

Modality modality_from_string(const std::string& s) {
  if (s == "visual") return Modality::kVisual;
  if (s == "audio") return Modality::kAudio;
  throw ConfigError("unknown modality '" + s + "'");
}

std::uint32_t EventStream::effective_duration() const {
  if (duration_us) return *duration_us;
  if (events.empty()) return 0;
  std::uint32_t last = 0;
  for (const Event& e : events) last = std::max(last, e.t);
  return last + 1;
}

EventStream parse_nmnist_bin(const std::vector<std::uint8_t>& bytes, const Geometry& geometry) {
  if (bytes.size() % 5 != 0)
    throw IoError("malformed N-MNIST file: length " + std::to_string(bytes.size()) +
                  " not divisible by 5");
  EventStream stream;
  stream.modality = Modality::kVisual;
  stream.geometry = geometry;
  stream.events.reserve(bytes.size() / 5);
  for (std::size_t off = 0; off < bytes.size(); off += 5) {
    Event e;
    e.x = bytes[off];
    e.y = bytes[off + 1];
    e.p = static_cast<std::uint8_t>((bytes[off + 2] >> 7) & 1);
    e.t = (static_cast<std::uint32_t>(bytes[off + 2] & 0x7F) << 16) |
          (static_cast<std::uint32_t>(bytes[off + 3]) << 8) | bytes[off + 4];
    if (e.x >= geometry.width || e.y >= geometry.height)
      throw IoError("N-MNIST event (" + std::to_string(e.x) + "," + std::to_string(e.y) +
                    ") outside declared geometry " + std::to_string(geometry.width) + "x" +
                    std::to_string(geometry.height));
    stream.events.push_back(e);
  }
  return stream;
}

namespace {

void validate_stream(const EventStream& s) {
  if (s.label < 0 || s.label > 0xFFFF)
    throw ConfigError("EVT: label " + std::to_string(s.label) + " out of u16 range");
  std::uint32_t prev = 0;
  for (const Event& e : s.events) {
    if (e.t < prev) throw ConfigError("EVT: events not time-sorted");
    prev = e.t;
    if (e.x >= s.geometry.width || e.y >= s.geometry.height)
      throw ConfigError("EVT: event outside geometry");
    if (e.p > 1) throw ConfigError("EVT: polarity must be 0 or 1");
  }
}

}  // namespace

std::vector<std::uint8_t> write_evt(const EventStream& stream) {
  validate_stream(stream);
  std::vector<std::uint8_t> out;
  out.reserve(24 + 10 * stream.events.size());
  const char magic[4] = {'E', 'V', 'T', '1'};
  out.insert(out.end(), magic, magic + 4);
  put_u16(out, 1);  // version
  out.push_back(stream.modality == Modality::kVisual ? 0 : 1);
  out.push_back(0);  // reserved
  put_u16(out, stream.geometry.width);
  put_u16(out, stream.geometry.height);
  put_u16(out, static_cast<std::uint16_t>(stream.label));
  put_u16(out, 0);  // reserved
  put_u32(out, static_cast<std::uint32_t>(stream.events.size()));
  for (const Event& e : stream.events) {
    put_u32(out, e.t);
    put_u16(out, e.x);
    put_u16(out, e.y);
    out.push_back(e.p);
    out.push_back(0);  // pad
  }
  // CRC over everything after the magic.
  put_u32(out, crc32(out.data() + 4, out.size() - 4));
  return out;
}

EventStream read_evt(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 24) throw IoError("corrupt EVT container: truncated payload");
  if (std::memcmp(bytes.data(), "EVT1", 4) != 0)
    throw IoError("corrupt EVT container: bad magic");
  const std::uint32_t stored_crc = [&] {
    std::size_t pos = bytes.size() - 4;
    return get_u32(bytes, pos);
  }();
  if (crc32(bytes.data() + 4, bytes.size() - 8) != stored_crc)
    throw IoError("corrupt EVT container: checksum mismatch");

  std::size_t pos = 4;
  const std::uint16_t version = get_u16(bytes, pos);
  if (version != 1) throw IoError("corrupt EVT container: unsupported version");
  const std::uint8_t modality = get_u8(bytes, pos);
  if (modality > 1) throw IoError("corrupt EVT container: bad modality byte");
  get_u8(bytes, pos);  // reserved

  EventStream stream;
  stream.modality = modality == 0 ? Modality::kVisual : Modality::kAudio;
  stream.geometry.width = get_u16(bytes, pos);
  stream.geometry.height = get_u16(bytes, pos);
  stream.geometry.polarities = modality == 0 ? 2 : 1;
  stream.label = get_u16(bytes, pos);
  get_u16(bytes, pos);  // reserved
  const std::uint32_t count = get_u32(bytes, pos);
  if (bytes.size() != 24 + static_cast<std::size_t>(count) * 10)
    throw IoError("corrupt EVT container: truncated payload");
  stream.events.reserve(count);
  std::uint32_t prev = 0;
  for (std::uint32_t i = 0; i < count; ++i) {
    Event e;
    e.t = get_u32(bytes, pos);
    e.x = get_u16(bytes, pos);
    e.y = get_u16(bytes, pos);
    e.p = get_u8(bytes, pos);
    get_u8(bytes, pos);  // pad
    if (e.t < prev || e.x >= stream.geometry.width || e.y >= stream.geometry.height || e.p > 1)
      throw IoError("corrupt EVT container: invalid event record");
    prev = e.t;
    stream.events.push_back(e);
  }
  return stream;
}

SpikeTensor bin_events(const EventStream& stream, std::size_t bins) {
  if (bins == 0) throw ConfigError("bin_events: bins must be >= 1");
  if (stream.events.empty() && !stream.duration_us)
    throw ConfigError("bin_events: empty stream without a declared duration");
  const std::uint64_t duration = stream.effective_duration();
  if (duration == 0 && !stream.events.empty())
    throw ConfigError("bin_events: degenerate zero duration with events present");

  SpikeTensor out;
  out.modality = stream.modality;
  if (stream.modality == Modality::kVisual) {
    const std::size_t P = stream.geometry.polarities, H = stream.geometry.height,
                      W = stream.geometry.width;
    out.data = Tensor::zeros({bins, P, H, W});
    for (const Event& e : stream.events) {
      std::uint64_t b = static_cast<std::uint64_t>(e.t) * bins / duration;
      if (b >= bins) b = bins - 1;
      if (e.p >= P) throw ShapeError("bin_events: polarity exceeds declared geometry");
      out.data.at(((b * P + e.p) * H + e.y) * W + e.x) = 1.0;
    }
  } else {
    const std::size_t C = stream.geometry.width;
    out.data = Tensor::zeros({bins, C});
    for (const Event& e : stream.events) {
      std::uint64_t b = static_cast<std::uint64_t>(e.t) * bins / duration;
      if (b >= bins) b = bins - 1;
      out.data.at(b * C + e.x) = 1.0;  // channel index from x; y ignored
    }
  }
  return out;
}

int remap_label(int raw, int num_unified) {
  if (raw < 0) throw ConfigError("remap_label: raw label must be non-negative");
  if (num_unified < 1) throw ConfigError("remap_label: need at least one unified class");
  return raw % num_unified;
}

namespace {

// Inverse CDF of the linear density 0.25 + 1.5*u on [0,1).
double ramp_time(double f) { return (-0.25 + std::sqrt(0.0625 + 3.0 * f)) / 1.5; }

void sort_events(std::vector<Event>& ev) {
  std::sort(ev.begin(), ev.end(), [](const Event& a, const Event& b) {
    return std::tie(a.t, a.y, a.x, a.p) < std::tie(b.t, b.y, b.x, b.p);
  });
}

EventStream synth_spatial(int cls, int classes, int idx, std::uint64_t seed,
                          const SynthParams& prm) {
  Rng rng = Rng::derive(seed, "synth/spatial/" + std::to_string(cls) + "/" + std::to_string(idx));
  const double W = prm.grid, H = prm.grid;
  const double cx = (W - 1) / 2.0, cy = (H - 1) / 2.0;
  const double radius = 0.3 * (W - 1);
  const double angle = 6.283185307179586 * cls / std::max(1, classes);
  const double mx = cx + radius * std::cos(angle);
  const double my = cy + radius * std::sin(angle);
  const double sigma = W / 8.0;

  EventStream s;
  s.modality = Modality::kVisual;
  s.geometry = {prm.grid, prm.grid, 2};
  s.label = cls;
  for (std::uint16_t y = 0; y < prm.grid; ++y) {
    for (std::uint16_t x = 0; x < prm.grid; ++x) {
      const double d2 = (x - mx) * (x - mx) + (y - my) * (y - my);
      const double lambda = prm.intensity * std::exp(-d2 / (2.0 * sigma * sigma));
      const int n = rng.poisson(lambda);
      for (int k = 0; k < n; ++k) {
        Event e;
        e.x = x;
        e.y = y;
        e.p = static_cast<std::uint8_t>(rng.u64() & 1);
        e.t = static_cast<std::uint32_t>(rng.uniform() * prm.duration_us);
        s.events.push_back(e);
      }
    }
  }
  if (s.events.empty()) {
    // Poisson draw can come up all-zero at very low intensity; keep the
    // sample usable with a single centroid event.
    Event e;
    e.x = static_cast<std::uint16_t>(mx);
    e.y = static_cast<std::uint16_t>(my);
    e.p = 1;
    e.t = prm.duration_us / 2;
    s.events.push_back(e);
  }
  sort_events(s.events);
  return s;
}

EventStream synth_temporal(int cls, int classes, int idx, std::uint64_t seed,
                           const SynthParams& prm) {
  Rng rng = Rng::derive(seed, "synth/temporal/" + std::to_string(cls) + "/" + std::to_string(idx));
  const double K = prm.channels;
  const double mu = (cls + 0.5) * K / std::max(1, classes);
  const double sigma = std::max(1.0, K / (4.0 * std::max(1, classes)));
  const bool ramp_up = (cls % 2) == 0;

  EventStream s;
  s.modality = Modality::kAudio;
  s.geometry = {prm.channels, 1, 1};
  s.label = cls;
  for (std::uint16_t ch = 0; ch < prm.channels; ++ch) {
    const double d = ch - mu;
    const double lambda = prm.intensity * 8.0 * std::exp(-d * d / (2.0 * sigma * sigma));
    const int n = rng.poisson(lambda);
    for (int k = 0; k < n; ++k) {
      double u = ramp_time(rng.uniform());
      if (!ramp_up) u = 1.0 - u;
      Event e;
      e.x = ch;
      e.y = 0;
      e.p = 0;
      e.t = static_cast<std::uint32_t>(u * prm.duration_us);
      s.events.push_back(e);
    }
  }
  if (s.events.empty()) {
    Event e;
    e.x = static_cast<std::uint16_t>(std::min<double>(mu, prm.channels - 1));
    e.y = 0;
    e.p = 0;
    e.t = prm.duration_us / 2;
    s.events.push_back(e);
  }
  sort_events(s.events);
  return s;
}

}  // namespace

std::vector<EventStream> synth_dataset(SynthKind kind, int classes, int samples_per_class,
                                       std::uint64_t seed, const SynthParams& params) {
  if (classes < 2) throw ConfigError("synth_dataset: need at least 2 classes");
  if (samples_per_class < 1) throw ConfigError("synth_dataset: need at least 1 sample per class");
  std::vector<EventStream> out;
  out.reserve(static_cast<std::size_t>(classes) * samples_per_class);
  for (int c = 0; c < classes; ++c) {
    for (int i = 0; i < samples_per_class; ++i) {
      out.push_back(kind == SynthKind::kSpatial ? synth_spatial(c, classes, i, seed, params)
                                                : synth_temporal(c, classes, i, seed, params));
    }
  }
  return out;
}

}  // namespace snn
