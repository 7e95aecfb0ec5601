#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "snn/bytes.hpp"
#include "snn/error.hpp"
#include "snn/events.hpp"
#include "snn/experiment.hpp"

namespace fs = std::filesystem;

namespace {

snn::ExperimentConfig load_config(const std::string& path, const std::string& expected) {
  snn::ExperimentConfig cfg = snn::ExperimentConfig::load(path);
  if (cfg.experiment != expected)
    throw snn::ConfigError("config '" + path + "' describes a '" + cfg.experiment +
                           "' experiment, but the '" + expected + "' command was invoked");
  return cfg;
}

void convert_one(const std::string& in, const std::string& out, int label,
                 const snn::Geometry& geom) {
  snn::EventStream s = snn::parse_nmnist_bin(snn::read_file(in), geom);
  s.label = label;
  snn::write_file(out, snn::write_evt(s));
}

void convert_tree(const std::string& in_dir, const std::string& out_dir,
                  const snn::Geometry& geom) {
  fs::create_directories(out_dir);
  std::vector<fs::path> class_dirs;
  for (const auto& e : fs::directory_iterator(in_dir))
    if (e.is_directory()) class_dirs.push_back(e.path());
  std::sort(class_dirs.begin(), class_dirs.end());
  if (class_dirs.empty()) throw snn::IoError("no class subdirectories in '" + in_dir + "'");

  std::size_t total = 0;
  for (const auto& dir : class_dirs) {
    int label = 0;
    try {
      label = std::stoi(dir.filename().string());
    } catch (const std::exception&) {
      throw snn::ConfigError("class directory '" + dir.filename().string() +
                             "' is not a numeric label");
    }
    std::vector<fs::path> bins;
    for (const auto& e : fs::directory_iterator(dir))
      if (e.is_regular_file() && e.path().extension() == ".bin") bins.push_back(e.path());
    std::sort(bins.begin(), bins.end());
    for (const auto& b : bins) {
      char name[64];
      std::snprintf(name, sizeof name, "c%02d_%s.evt", label, b.stem().string().c_str());
      convert_one(b.string(), (fs::path(out_dir) / name).string(), label, geom);
      ++total;
    }
  }
  std::printf("converted %zu files to %s\n", total, out_dir.c_str());
}

void synth_to_dir(const std::string& kind, int classes, int samples, std::uint64_t seed,
                  const snn::SynthParams& params, const std::string& out_dir) {
  const snn::SynthKind k =
      kind == "spatial" ? snn::SynthKind::kSpatial : snn::SynthKind::kTemporal;
  std::vector<snn::EventStream> streams =
      snn::synth_dataset(k, classes, samples, seed, params);
  fs::create_directories(out_dir);
  std::size_t idx = 0;
  for (const auto& s : streams) {
    char name[64];
    std::snprintf(name, sizeof name, "c%02d_s%05zu.evt", s.label,
                  idx++ % static_cast<std::size_t>(samples));
    snn::write_file((fs::path(out_dir) / name).string(), snn::write_evt(s));
  }
  std::printf("wrote %zu samples to %s\n", streams.size(), out_dir.c_str());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"spikemem: spiking-network memory ablations on event data"};
  app.require_subcommand(1);

  std::string config_path, checkpoints_dir;
  auto* ablate = app.add_subcommand("ablate", "train the memory-variant grid");
  ablate->add_option("--config", config_path, "experiment config (JSON)")->required();
  auto* joint = app.add_subcommand("joint", "joint dual-modality vs parallel baselines");
  joint->add_option("--config", config_path, "experiment config (JSON)")->required();
  auto* engram = app.add_subcommand("engram", "feature-space analysis of trained cells");
  engram->add_option("--config", config_path, "experiment config (JSON)")->required();
  engram->add_option("--checkpoints", checkpoints_dir,
                     "directory holding <variant>-<modality>.snnw checkpoints");

  std::string conv_in, conv_out;
  int label = 0, width = 34, height = 34;
  auto* convert = app.add_subcommand("convert", "N-MNIST .bin -> .evt container");
  convert->add_option("--in", conv_in, ".bin file, or dataset root with class subdirectories")
      ->required();
  convert->add_option("--out", conv_out, "output .evt path or directory")->required();
  convert->add_option("--label", label, "class label when converting a single file");
  convert->add_option("--width", width, "sensor width");
  convert->add_option("--height", height, "sensor height");

  std::string synth_kind = "spatial", synth_out;
  int classes = 4, samples = 100, grid = 16, channels = 32;
  long long duration = 2500;
  double intensity = 1.2;
  std::uint64_t seed = 42;
  auto* synth = app.add_subcommand("synth", "generate a synthetic event dataset");
  synth->add_option("--kind", synth_kind, "spatial | temporal")
      ->check(CLI::IsMember({"spatial", "temporal"}));
  synth->add_option("--classes", classes, "number of classes");
  synth->add_option("--samples", samples, "samples per class");
  synth->add_option("--seed", seed, "generator seed");
  synth->add_option("--grid", grid, "spatial grid side");
  synth->add_option("--channels", channels, "temporal channel count");
  synth->add_option("--duration", duration, "sample duration in microseconds");
  synth->add_option("--intensity", intensity, "event rate scale");
  synth->add_option("--out", synth_out, "output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (ablate->parsed()) {
      snn::ExperimentConfig cfg = load_config(config_path, "ablation");
      snn::run_experiment(cfg);
      std::printf("wrote results to %s\n", cfg.out_dir.c_str());
    } else if (joint->parsed()) {
      snn::ExperimentConfig cfg = load_config(config_path, "joint");
      snn::run_experiment(cfg);
      std::printf("wrote results to %s\n", cfg.out_dir.c_str());
    } else if (engram->parsed()) {
      snn::ExperimentConfig cfg = load_config(config_path, "engram");
      if (!checkpoints_dir.empty()) cfg.checkpoints_dir = checkpoints_dir;
      snn::run_experiment(cfg);
      std::printf("wrote results to %s\n", cfg.out_dir.c_str());
    } else if (convert->parsed()) {
      snn::Geometry geom{static_cast<std::uint16_t>(width), static_cast<std::uint16_t>(height),
                         2};
      if (fs::is_directory(conv_in)) {
        convert_tree(conv_in, conv_out, geom);
      } else if (fs::is_regular_file(conv_in)) {
        std::string out = conv_out;
        if (fs::is_directory(out) || !out.ends_with(".evt")) {
          fs::create_directories(out);
          char name[64];
          std::snprintf(name, sizeof name, "c%02d_%s.evt", label,
                        fs::path(conv_in).stem().string().c_str());
          out = (fs::path(out) / name).string();
        }
        convert_one(conv_in, out, label, geom);
        std::printf("wrote %s\n", out.c_str());
      } else {
        throw snn::IoError("convert: no such file or directory '" + conv_in + "'");
      }
    } else if (synth->parsed()) {
      snn::SynthParams params;
      params.grid = static_cast<std::uint16_t>(grid);
      params.channels = static_cast<std::uint16_t>(channels);
      params.duration_us = static_cast<std::uint32_t>(duration);
      params.intensity = intensity;
      synth_to_dir(synth_kind, classes, samples, seed, params, synth_out);
    }
  } catch (const snn::ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const snn::IoError& e) {
    std::fprintf(stderr, "io error: %s\n", e.what());
    return 3;
  } catch (const snn::NumericError& e) {
    std::fprintf(stderr, "numeric error: %s\n", e.what());
    return 4;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
