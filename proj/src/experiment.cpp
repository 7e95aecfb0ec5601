#include "snn/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <thread>

#include "json.hpp"
#include "snn/bytes.hpp"
#include "snn/checkpoint.hpp"
#include "snn/energy.hpp"
#include "snn/engram.hpp"
#include "snn/error.hpp"
#include "snn/rng.hpp"

namespace snn {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// ---------------------------------------------------------------------------
// Strict config parsing: unknown keys and wrong types fail immediately.
// ---------------------------------------------------------------------------

void check_keys(const json& j, const std::string& ctx,
                std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw ConfigError("config: '" + ctx + "' must be an object");
  for (const auto& [key, value] : j.items()) {
    bool ok = false;
    for (const char* a : allowed)
      if (key == a) ok = true;
    if (!ok) throw ConfigError("config: unknown key '" + key + "' in " + ctx);
  }
}

template <typename T>
T jget(const json& j, const std::string& ctx, const char* key, std::optional<T> def = {}) {
  if (!j.contains(key)) {
    if (def) return *def;
    throw ConfigError("config: missing '" + std::string(key) + "' in " + ctx);
  }
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError("config: bad type for '" + std::string(key) + "' in " + ctx);
  }
}

SynthParams parse_synth(const json& j, const std::string& ctx, SynthParams base) {
  check_keys(j, ctx, {"grid", "channels", "duration_us", "intensity"});
  base.grid = static_cast<std::uint16_t>(jget<int>(j, ctx, "grid", base.grid));
  base.channels = static_cast<std::uint16_t>(jget<int>(j, ctx, "channels", base.channels));
  base.duration_us = static_cast<std::uint32_t>(
      jget<long long>(j, ctx, "duration_us", base.duration_us));
  base.intensity = jget<double>(j, ctx, "intensity", base.intensity);
  return base;
}

std::string pct(double v) {
  char b[32];
  std::snprintf(b, sizeof b, "%.2f", 100.0 * v);
  return b;
}

std::string num6(double v) {
  char b[64];
  std::snprintf(b, sizeof b, "%.6f", v);
  return b;
}

std::uint64_t derive_seed(std::uint64_t seed, const std::string& name) {
  return Rng::derive(seed, name).u64();
}

}  // namespace

ExperimentConfig ExperimentConfig::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config '" + path + "'");
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return from_json_text(text);
}

ExperimentConfig ExperimentConfig::from_json_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: invalid JSON: ") + e.what());
  }
  check_keys(j, "config",
             {"experiment", "seed", "out_dir", "data", "model", "train", "variants",
              "modalities", "joint_memory", "engram", "reference"});

  ExperimentConfig cfg;
  cfg.experiment = jget<std::string>(j, "config", "experiment");
  cfg.seed = static_cast<std::uint64_t>(jget<long long>(j, "config", "seed", 42));
  cfg.out_dir = jget<std::string>(j, "config", "out_dir");

  if (j.contains("data")) {
    const json& d = j.at("data");
    check_keys(d, "data",
               {"source", "classes", "samples_per_class", "test_fraction", "visual", "audio",
                "visual_dir", "audio_dir"});
    cfg.data.source = jget<std::string>(d, "data", "source", std::string("synth"));
    cfg.data.classes = jget<int>(d, "data", "classes", cfg.data.classes);
    cfg.data.samples_per_class =
        jget<int>(d, "data", "samples_per_class", cfg.data.samples_per_class);
    cfg.data.test_fraction = jget<double>(d, "data", "test_fraction", cfg.data.test_fraction);
    if (d.contains("visual")) cfg.data.visual_synth = parse_synth(d.at("visual"), "data.visual",
                                                                  cfg.data.visual_synth);
    if (d.contains("audio")) cfg.data.audio_synth = parse_synth(d.at("audio"), "data.audio",
                                                                cfg.data.audio_synth);
    cfg.data.visual_dir = jget<std::string>(d, "data", "visual_dir", std::string());
    cfg.data.audio_dir = jget<std::string>(d, "data", "audio_dir", std::string());
  }

  if (j.contains("model")) {
    const json& m = j.at("model");
    check_keys(m, "model",
               {"visual_time", "audio_time", "conv1", "conv2", "hidden1", "hidden2",
                "feature_dim", "hopfield_patterns", "hopfield_beta", "hopfield_iters",
                "surrogate_alpha", "lif"});
    auto& vd = cfg.model.visual_dims;
    auto& ad = cfg.model.audio_dims;
    vd.time = static_cast<std::size_t>(jget<int>(m, "model", "visual_time", vd.time));
    ad.time = static_cast<std::size_t>(jget<int>(m, "model", "audio_time", ad.time));
    vd.conv1 = static_cast<std::size_t>(jget<int>(m, "model", "conv1", vd.conv1));
    vd.conv2 = static_cast<std::size_t>(jget<int>(m, "model", "conv2", vd.conv2));
    ad.hidden1 = static_cast<std::size_t>(jget<int>(m, "model", "hidden1", ad.hidden1));
    ad.hidden2 = static_cast<std::size_t>(jget<int>(m, "model", "hidden2", ad.hidden2));
    cfg.model.feature_dim =
        static_cast<std::size_t>(jget<int>(m, "model", "feature_dim", cfg.model.feature_dim));
    cfg.model.hopfield_patterns = static_cast<std::size_t>(
        jget<int>(m, "model", "hopfield_patterns", cfg.model.hopfield_patterns));
    cfg.model.hopfield_beta = jget<double>(m, "model", "hopfield_beta", cfg.model.hopfield_beta);
    cfg.model.hopfield_iters = static_cast<std::size_t>(
        jget<int>(m, "model", "hopfield_iters", cfg.model.hopfield_iters));
    cfg.model.surrogate.alpha =
        jget<double>(m, "model", "surrogate_alpha", cfg.model.surrogate.alpha);
    if (m.contains("lif")) {
      const json& l = m.at("lif");
      check_keys(l, "model.lif", {"tau_m", "u_rest", "r", "theta", "dt"});
      cfg.model.lif.tau_m = jget<double>(l, "model.lif", "tau_m", cfg.model.lif.tau_m);
      cfg.model.lif.u_rest = jget<double>(l, "model.lif", "u_rest", cfg.model.lif.u_rest);
      cfg.model.lif.r = jget<double>(l, "model.lif", "r", cfg.model.lif.r);
      cfg.model.lif.theta = jget<double>(l, "model.lif", "theta", cfg.model.lif.theta);
      cfg.model.lif.dt = jget<double>(l, "model.lif", "dt", cfg.model.lif.dt);
    }
  }

  if (j.contains("train")) {
    const json& t = j.at("train");
    check_keys(t, "train",
               {"epochs", "batch_size", "lr", "weight_decay", "clip_norm", "scl_weight",
                "scl_tau"});
    cfg.train.epochs = static_cast<std::size_t>(jget<int>(t, "train", "epochs", 5));
    cfg.train.batch_size = static_cast<std::size_t>(jget<int>(t, "train", "batch_size", 32));
    cfg.train.opt.lr = jget<double>(t, "train", "lr", cfg.train.opt.lr);
    cfg.train.opt.weight_decay =
        jget<double>(t, "train", "weight_decay", cfg.train.opt.weight_decay);
    cfg.train.opt.clip_norm = jget<double>(t, "train", "clip_norm", cfg.train.opt.clip_norm);
    cfg.train.scl.weight = jget<double>(t, "train", "scl_weight", cfg.train.scl.weight);
    cfg.train.scl.tau = jget<double>(t, "train", "scl_tau", cfg.train.scl.tau);
  }

  if (j.contains("variants")) {
    for (const auto& v : j.at("variants"))
      cfg.variants.push_back(memory_kind_from_string(v.get<std::string>()));
  } else {
    cfg.variants = {MemoryKind::kNone, MemoryKind::kScl, MemoryKind::kHopfield, MemoryKind::kHgrn,
                    MemoryKind::kHybrid};
  }
  if (j.contains("modalities")) {
    for (const auto& m : j.at("modalities"))
      cfg.modalities.push_back(modality_from_string(m.get<std::string>()));
  } else {
    cfg.modalities = {Modality::kVisual, Modality::kAudio};
  }
  if (j.contains("joint_memory"))
    cfg.joint_memory = memory_kind_from_string(j.at("joint_memory").get<std::string>());
  if (j.contains("engram")) {
    const json& e = j.at("engram");
    check_keys(e, "engram", {"per_class", "split", "checkpoints"});
    cfg.engram_per_class =
        static_cast<std::size_t>(jget<int>(e, "engram", "per_class", 100));
    cfg.engram_split = jget<std::string>(e, "engram", "split", std::string("test"));
    cfg.checkpoints_dir = jget<std::string>(e, "engram", "checkpoints", std::string());
  }
  if (j.contains("reference")) {
    const json& r = j.at("reference");
    check_keys(r, "reference", {"visual", "audio", "average"});
    ReferenceRow row;
    row.visual = jget<double>(r, "reference", "visual");
    row.audio = jget<double>(r, "reference", "audio");
    row.average = jget<double>(r, "reference", "average");
    cfg.reference = row;
  }

  cfg.model.num_classes = static_cast<std::size_t>(cfg.data.classes);
  cfg.validate();
  return cfg;
}

void ExperimentConfig::validate() const {
  if (experiment != "ablation" && experiment != "joint" && experiment != "engram")
    throw ConfigError("config: experiment must be ablation, joint or engram");
  if (out_dir.empty()) throw ConfigError("config: out_dir must not be empty");
  if (data.source != "synth" && data.source != "evt")
    throw ConfigError("config: data.source must be synth or evt");
  if (data.source == "synth") {
    if (data.classes < 2) throw ConfigError("config: need at least 2 classes");
    if (data.samples_per_class < 2)
      throw ConfigError("config: need at least 2 samples per class");
  }
  if (data.test_fraction <= 0.0 || data.test_fraction >= 1.0)
    throw ConfigError("config: test_fraction must be in (0, 1)");
  if (variants.empty()) throw ConfigError("config: variants must not be empty");
  if (modalities.empty()) throw ConfigError("config: modalities must not be empty");
  if (train.batch_size == 0) throw ConfigError("config: batch_size must be >= 1");
  if (engram_split != "test" && engram_split != "train")
    throw ConfigError("config: engram.split must be test or train");
  if (engram_per_class == 0) throw ConfigError("config: engram.per_class must be >= 1");
}

std::size_t worker_threads(std::size_t cells) {
  std::size_t n = 0;
  if (const char* env = std::getenv("SNN_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end == env || *end != '\0' || v < 1)
      throw ConfigError("SNN_THREADS must be a positive integer");
    n = static_cast<std::size_t>(v);
  } else {
    n = std::max<std::size_t>(1, std::thread::hardware_concurrency());
  }
  return std::min(n, std::max<std::size_t>(1, cells));
}

namespace {

void parallel_cells(std::size_t n, const std::function<void(std::size_t)>& fn) {
  const std::size_t threads = worker_threads(n);
  if (threads <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::mutex err_mx;
  std::exception_ptr err;
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < threads; ++t) {
    pool.emplace_back([&] {
      for (;;) {
        const std::size_t i = next.fetch_add(1);
        if (i >= n) return;
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(err_mx);
          if (!err) err = std::current_exception();
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  if (err) std::rethrow_exception(err);
}

std::vector<EventStream> load_evt_dir(const std::string& dir) {
  if (dir.empty()) throw ConfigError("config: evt source needs a directory for each modality");
  std::vector<fs::path> paths;
  std::error_code ec;
  for (const auto& entry : fs::directory_iterator(dir, ec)) {
    if (entry.is_regular_file() && entry.path().extension() == ".evt")
      paths.push_back(entry.path());
  }
  if (ec) throw IoError("cannot list directory '" + dir + "': " + ec.message());
  std::sort(paths.begin(), paths.end());
  if (paths.empty()) throw IoError("no .evt files in '" + dir + "'");
  std::vector<EventStream> streams;
  streams.reserve(paths.size());
  for (const auto& p : paths) streams.push_back(read_evt(read_file(p.string())));
  for (const auto& s : streams) {
    if (s.modality != streams[0].modality ||
        s.geometry.width != streams[0].geometry.width ||
        s.geometry.height != streams[0].geometry.height)
      throw ConfigError("evt directory '" + dir + "' mixes modalities or geometries");
  }
  return streams;
}

struct SplitData {
  Dataset train;
  Dataset test;
};

// Streams -> split -> binned datasets; the split seed depends only on the
// experiment seed, so every cell sees the same train/test partition.
SplitData prepare_modality(const ExperimentConfig& cfg, Modality m, std::size_t bins) {
  std::vector<EventStream> streams;
  if (cfg.data.source == "synth") {
    streams = synth_dataset(m == Modality::kVisual ? SynthKind::kSpatial : SynthKind::kTemporal,
                            cfg.data.classes, cfg.data.samples_per_class,
                            derive_seed(cfg.seed, "data/" + to_string(m)),
                            m == Modality::kVisual ? cfg.data.visual_synth
                                                   : cfg.data.audio_synth);
  } else {
    streams = load_evt_dir(m == Modality::kVisual ? cfg.data.visual_dir : cfg.data.audio_dir);
    if (streams[0].modality != m)
      throw ConfigError("evt directory does not contain " + to_string(m) + " data");
  }
  auto [train_streams, test_streams] =
      split_streams(streams, cfg.data.test_fraction, derive_seed(cfg.seed, "split"));
  SplitData out;
  out.train = make_dataset(train_streams, bins, cfg.data.classes);
  out.test = make_dataset(test_streams, bins, cfg.data.classes);
  return out;
}

// Model dims that come from the data geometry rather than the config.
void apply_geometry(ModelSpec& spec, const ExperimentConfig& cfg) {
  if (cfg.data.source == "synth") {
    spec.visual_dims.height = cfg.data.visual_synth.grid;
    spec.visual_dims.width = cfg.data.visual_synth.grid;
    spec.visual_dims.polarities = 2;
    spec.audio_dims.channels = cfg.data.audio_synth.channels;
  } else {
    if (!cfg.data.visual_dir.empty()) {
      std::vector<EventStream> probe = load_evt_dir(cfg.data.visual_dir);
      spec.visual_dims.height = probe[0].geometry.height;
      spec.visual_dims.width = probe[0].geometry.width;
      spec.visual_dims.polarities = probe[0].geometry.polarities;
    }
    if (!cfg.data.audio_dir.empty()) {
      std::vector<EventStream> probe = load_evt_dir(cfg.data.audio_dir);
      spec.audio_dims.channels = probe[0].geometry.width;
    }
  }
}

json spec_to_json(const ModelSpec& s) {
  json j;
  j["memory"] = to_string(s.memory);
  j["visual"] = s.visual;
  j["audio"] = s.audio;
  j["feature_dim"] = s.feature_dim;
  j["num_classes"] = s.num_classes;
  j["visual_dims"] = {{"time", s.visual_dims.time},       {"polarities", s.visual_dims.polarities},
                      {"height", s.visual_dims.height},   {"width", s.visual_dims.width},
                      {"conv1", s.visual_dims.conv1},     {"conv2", s.visual_dims.conv2}};
  j["audio_dims"] = {{"time", s.audio_dims.time},
                     {"channels", s.audio_dims.channels},
                     {"hidden1", s.audio_dims.hidden1},
                     {"hidden2", s.audio_dims.hidden2}};
  j["hopfield_patterns"] = s.hopfield_patterns;
  j["hopfield_beta"] = s.hopfield_beta;
  j["hopfield_iters"] = s.hopfield_iters;
  j["surrogate_alpha"] = s.surrogate.alpha;
  j["lif"] = {{"tau_m", s.lif.tau_m}, {"u_rest", s.lif.u_rest}, {"r", s.lif.r},
              {"theta", s.lif.theta}, {"dt", s.lif.dt}};
  return j;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write '" + path + "'");
  out << text;
  if (!out) throw IoError("failed writing '" + path + "'");
}

struct CellOutcome {
  std::string id;
  MemoryKind variant;
  Modality modality;
  double train_acc = 0.0;
  EvalResult final_eval;
  OpsReport ops;
  Model model;
};

json eval_to_json(const EvalResult& e) {
  json j;
  j["accuracy"] = e.accuracy;
  j["ce_loss"] = e.ce_loss;
  j["sparsity"] = e.sparsity;
  return j;
}

json ops_to_json(const OpsReport& r) {
  json j;
  j["ann_macs"] = r.ann_macs;
  j["snn_synops"] = r.snn_synops;
  j["snn_dense_macs"] = r.snn_dense_macs;
  j["ratio"] = r.unbounded ? json("inf") : json(r.ratio);
  j["unbounded"] = r.unbounded;
  j["sparsity"] = r.sparsity;
  return j;
}

// Trains one (variant, modality) cell and writes its artifacts under
// <out_dir>/cells/<id>.*: metrics.jsonl per epoch, final json summary, the
// parameter checkpoint and the resolved model description.
CellOutcome run_cell(const ExperimentConfig& cfg, MemoryKind variant, Modality modality,
                     const SplitData& data) {
  const std::string id = to_string(variant) + "-" + to_string(modality);
  ModelSpec spec = cfg.model;
  spec.memory = variant;
  spec.visual = modality == Modality::kVisual;
  spec.audio = modality == Modality::kAudio;

  Model model(spec, derive_seed(cfg.seed, "model/" + id));
  AdamW opt(model.params(), cfg.train.opt);
  TrainConfig tc = cfg.train;
  tc.seed = derive_seed(cfg.seed, "train/" + id);

  const std::string base = cfg.out_dir + "/cells/" + id;
  std::ofstream metrics(base + ".metrics.jsonl", std::ios::trunc);
  if (!metrics) throw IoError("cannot write '" + base + ".metrics.jsonl'");

  auto log_eval = [&](std::size_t epoch, const EvalResult& ev) {
    json line;
    line["epoch"] = epoch;
    line["split"] = "test";
    line["loss"] = ev.ce_loss;
    line["acc"] = ev.accuracy;
    line["sparsity"] = ev.sparsity;
    metrics << line.dump() << "\n";
  };

  EvalResult ev = evaluate(model, data.test, tc.batch_size);
  log_eval(0, ev);
  double train_acc = 0.0;
  for (std::size_t e = 1; e <= tc.epochs; ++e) {
    EpochStats st = train_epoch(model, opt, data.train, tc, e);
    train_acc = st.accuracy;
    json line;
    line["epoch"] = e;
    line["split"] = "train";
    line["loss"] = st.loss;
    line["acc"] = st.accuracy;
    line["skipped_params"] = st.skipped_params;
    metrics << line.dump() << "\n";
    ev = evaluate(model, data.test, tc.batch_size);
    log_eval(e, ev);
  }
  metrics.flush();

  CellOutcome out{id, variant, modality, train_acc, ev,
                  efficiency_report(spec, modality, ev.activity, data.test.size()), model};

  json cell;
  cell["cell"] = id;
  cell["variant"] = to_string(variant);
  cell["modality"] = to_string(modality);
  cell["epochs"] = tc.epochs;
  cell["param_count"] = model.param_count();
  cell["train_accuracy"] = train_acc;
  cell["test"] = eval_to_json(ev);
  cell["energy"] = ops_to_json(out.ops);
  cell["confusion"] = ev.confusion;
  write_text(base + ".json", cell.dump(2) + "\n");
  write_text(base + ".spec.json", spec_to_json(spec).dump(2) + "\n");
  save_checkpoint(base + ".snnw", model.params());
  return out;
}

const CellOutcome& find_cell(const std::vector<std::optional<CellOutcome>>& cells,
                             const std::string& id) {
  for (const auto& c : cells)
    if (c && c->id == id) return *c;
  throw Error("internal: missing cell " + id);
}

std::vector<std::optional<CellOutcome>> run_cells(const ExperimentConfig& cfg,
                                                  const SplitData* visual,
                                                  const SplitData* audio,
                                                  const std::vector<Modality>& modalities) {
  struct Job {
    MemoryKind variant;
    Modality modality;
  };
  std::vector<Job> jobs;
  for (MemoryKind v : cfg.variants)
    for (Modality m : modalities) jobs.push_back({v, m});

  std::vector<std::optional<CellOutcome>> cells(jobs.size());
  parallel_cells(jobs.size(), [&](std::size_t i) {
    const SplitData& data = jobs[i].modality == Modality::kVisual ? *visual : *audio;
    cells[i] = run_cell(cfg, jobs[i].variant, jobs[i].modality, data);
  });
  return cells;
}

}  // namespace

void run_ablation(const ExperimentConfig& raw) {
  ExperimentConfig cfg = raw;
  apply_geometry(cfg.model, cfg);
  fs::create_directories(cfg.out_dir + "/cells");

  bool want_visual = false, want_audio = false;
  for (Modality m : cfg.modalities) (m == Modality::kVisual ? want_visual : want_audio) = true;
  std::optional<SplitData> vis, aud;
  if (want_visual) vis = prepare_modality(cfg, Modality::kVisual, cfg.model.visual_dims.time);
  if (want_audio) aud = prepare_modality(cfg, Modality::kAudio, cfg.model.audio_dims.time);

  auto cells = run_cells(cfg, vis ? &*vis : nullptr, aud ? &*aud : nullptr, cfg.modalities);

  // variant rows; delta = row average - best average, in points
  std::vector<double> averages;
  for (MemoryKind v : cfg.variants) {
    double sum = 0.0;
    for (Modality m : cfg.modalities)
      sum += find_cell(cells, to_string(v) + "-" + to_string(m)).final_eval.accuracy;
    averages.push_back(sum / static_cast<double>(cfg.modalities.size()));
  }
  const double best = *std::max_element(averages.begin(), averages.end());

  std::string csv = "# spikemem ablation v1\nmodel,visual,audio,average,delta\n";
  for (std::size_t i = 0; i < cfg.variants.size(); ++i) {
    const MemoryKind v = cfg.variants[i];
    std::string vis_s = "-", aud_s = "-";
    for (Modality m : cfg.modalities) {
      const auto& c = find_cell(cells, to_string(v) + "-" + to_string(m));
      (m == Modality::kVisual ? vis_s : aud_s) = pct(c.final_eval.accuracy);
    }
    csv += to_string(v) + "," + vis_s + "," + aud_s + "," + pct(averages[i]) + "," +
           pct(averages[i] - best) + "\n";
  }
  write_text(cfg.out_dir + "/ablation.csv", csv);
}

void run_joint(const ExperimentConfig& raw) {
  ExperimentConfig cfg = raw;
  apply_geometry(cfg.model, cfg);
  fs::create_directories(cfg.out_dir + "/cells");

  SplitData vis = prepare_modality(cfg, Modality::kVisual, cfg.model.visual_dims.time);
  SplitData aud = prepare_modality(cfg, Modality::kAudio, cfg.model.audio_dims.time);

  // One init seed for all three models: where parameter names coincide, the
  // joint model and the parallel baselines start from identical weights.
  const std::uint64_t model_seed = derive_seed(cfg.seed, "joint/model");

  ModelSpec vspec = cfg.model;
  vspec.memory = cfg.joint_memory;
  vspec.visual = true;
  vspec.audio = false;
  ModelSpec aspec = vspec;
  aspec.visual = false;
  aspec.audio = true;
  ModelSpec jspec = vspec;
  jspec.audio = true;

  Model mv(vspec, model_seed), ma(aspec, model_seed), mj(jspec, model_seed);
  AdamW ov(mv.params(), cfg.train.opt), oa(ma.params(), cfg.train.opt),
      oj(mj.params(), cfg.train.opt);

  TrainConfig tv = cfg.train, ta = cfg.train, tj = cfg.train;
  tv.seed = derive_seed(cfg.seed, "joint/train/parallel-visual");
  ta.seed = derive_seed(cfg.seed, "joint/train/parallel-audio");
  tj.seed = derive_seed(cfg.seed, "joint/train/joint");

  std::ofstream metrics(cfg.out_dir + "/cells/joint.metrics.jsonl", std::ios::trunc);
  if (!metrics) throw IoError("cannot write joint metrics");
  auto log = [&](const char* cell, std::size_t epoch, const char* split, double loss, double acc,
                 double sparsity) {
    json line;
    line["cell"] = cell;
    line["epoch"] = epoch;
    line["split"] = split;
    line["loss"] = loss;
    line["acc"] = acc;
    if (sparsity >= 0.0) line["sparsity"] = sparsity;
    metrics << line.dump() << "\n";
  };

  auto eval_pair = [&](const char* cell, std::size_t epoch, Model& vm, Model& am)
      -> std::pair<EvalResult, EvalResult> {
    EvalResult ev = evaluate(vm, vis.test, cfg.train.batch_size);
    EvalResult ea = evaluate(am, aud.test, cfg.train.batch_size);
    log(cell, epoch, "test-visual", ev.ce_loss, ev.accuracy, ev.sparsity);
    log(cell, epoch, "test-audio", ea.ce_loss, ea.accuracy, ea.sparsity);
    return {ev, ea};
  };

  auto [pv, pa] = eval_pair("parallel", 0, mv, ma);
  auto [jv, ja] = eval_pair("joint", 0, mj, mj);
  for (std::size_t e = 1; e <= cfg.train.epochs; ++e) {
    EpochStats sv = train_epoch(mv, ov, vis.train, tv, e);
    EpochStats sa = train_epoch(ma, oa, aud.train, ta, e);
    log("parallel", e, "train", (sv.loss + sa.loss) / 2.0, (sv.accuracy + sa.accuracy) / 2.0,
        -1.0);
    std::tie(pv, pa) = eval_pair("parallel", e, mv, ma);

    EpochStats sj = joint_train_epoch(mj, oj, vis.train, aud.train, tj, e);
    log("joint", e, "train", sj.loss, sj.accuracy, -1.0);
    std::tie(jv, ja) = eval_pair("joint", e, mj, mj);
  }
  metrics.flush();

  save_checkpoint(cfg.out_dir + "/cells/parallel-visual.snnw", mv.params());
  save_checkpoint(cfg.out_dir + "/cells/parallel-audio.snnw", ma.params());
  save_checkpoint(cfg.out_dir + "/cells/joint.snnw", mj.params());
  write_text(cfg.out_dir + "/cells/joint.spec.json", spec_to_json(jspec).dump(2) + "\n");

  const double par_avg = (pv.accuracy + pa.accuracy) / 2.0;
  const double joint_avg = (jv.accuracy + ja.accuracy) / 2.0;

  std::string csv = "# spikemem joint v1\nmodel,visual,audio,average\n";
  csv += "parallel," + pct(pv.accuracy) + "," + pct(pa.accuracy) + "," + pct(par_avg) + "\n";
  csv += "joint," + pct(jv.accuracy) + "," + pct(ja.accuracy) + "," + pct(joint_avg) + "\n";
  csv += "delta," + pct(jv.accuracy - pv.accuracy) + "," + pct(ja.accuracy - pa.accuracy) + "," +
         pct(joint_avg - par_avg) + "\n";
  write_text(cfg.out_dir + "/joint.csv", csv);

  json j;
  j["parallel"] = {{"visual", pv.accuracy}, {"audio", pa.accuracy}, {"average", par_avg}};
  j["joint"] = {{"visual", jv.accuracy}, {"audio", ja.accuracy}, {"average", joint_avg}};
  j["delta"] = {{"visual", jv.accuracy - pv.accuracy},
                {"audio", ja.accuracy - pa.accuracy},
                {"average", joint_avg - par_avg}};
  if (cfg.reference) {
    const double arit = (cfg.reference->visual + cfg.reference->audio) / 2.0;
    j["reference"] = {{"visual", cfg.reference->visual},
                      {"audio", cfg.reference->audio},
                      {"average_published", cfg.reference->average},
                      {"average_arithmetic", arit},
                      {"discrepancy", std::fabs(arit - cfg.reference->average) > 0.005}};
  }
  write_text(cfg.out_dir + "/joint.json", j.dump(2) + "\n");
}

namespace {

// header row: neuron indices, then label and modality
void write_features_csv(const std::string& path, const FeatureMatrix& fm, Modality m) {
  std::string csv;
  const std::size_t d = fm.x.dim(1);
  for (std::size_t k = 0; k < d; ++k) csv += "n" + std::to_string(k) + ",";
  csv += "label,modality\n";
  for (std::size_t i = 0; i < fm.labels.size(); ++i) {
    for (std::size_t k = 0; k < d; ++k) csv += num6(fm.x.at(i * d + k)) + ",";
    csv += std::to_string(fm.labels[i]) + "," + to_string(m) + "\n";
  }
  write_text(path, csv);
}

}  // namespace

void run_engram(const ExperimentConfig& raw) {
  ExperimentConfig cfg = raw;
  apply_geometry(cfg.model, cfg);
  if (cfg.checkpoints_dir.empty())
    throw ConfigError(
        "engram: checkpoint directory required (config engram.checkpoints or --checkpoints)");
  fs::create_directories(cfg.out_dir + "/features");

  SplitData vis = prepare_modality(cfg, Modality::kVisual, cfg.model.visual_dims.time);
  SplitData aud = prepare_modality(cfg, Modality::kAudio, cfg.model.audio_dims.time);

  // Features come from previously trained cells; analysis never retrains.
  struct Job {
    MemoryKind variant;
    Modality modality;
  };
  std::vector<Job> jobs;
  for (MemoryKind v : cfg.variants)
    for (Modality m : {Modality::kVisual, Modality::kAudio}) jobs.push_back({v, m});

  std::vector<FeatureMatrix> features(jobs.size());
  parallel_cells(jobs.size(), [&](std::size_t i) {
    const auto [v, m] = jobs[i];
    const std::string id = to_string(v) + "-" + to_string(m);
    const std::string path = cfg.checkpoints_dir + "/" + id + ".snnw";
    if (!fs::exists(path)) throw IoError("missing checkpoint for cell " + id + ": " + path);
    ModelSpec spec = cfg.model;
    spec.memory = v;
    spec.visual = m == Modality::kVisual;
    spec.audio = m == Modality::kAudio;
    Model model(spec, derive_seed(cfg.seed, "model/" + id));
    model.load_params(load_checkpoint(path));

    const SplitData& d = m == Modality::kVisual ? vis : aud;
    const Dataset& split = cfg.engram_split == "test" ? d.test : d.train;
    features[i] = rate_features(model, split, cfg.engram_per_class,
                                derive_seed(cfg.seed, "engram/" + id), cfg.train.batch_size);
    write_features_csv(cfg.out_dir + "/features/" + id + ".csv", features[i], m);
  });

  std::string csv =
      "# spikemem engram v1\n"
      "model,modality,silhouette,davies_bouldin,transfer,alignment_mean_diag,"
      "effective_dim_fraction\n";
  json report;
  for (std::size_t vi = 0; vi < cfg.variants.size(); ++vi) {
    const MemoryKind v = cfg.variants[vi];
    const FeatureMatrix& fv = features[2 * vi];
    const FeatureMatrix& fa = features[2 * vi + 1];

    Tensor align = cross_modal_alignment(fv, fa, cfg.data.classes);
    const double align_diag = mean_diagonal(align);

    struct Row {
      const FeatureMatrix* fm;
      const FeatureMatrix* other;
      const char* name;
    };
    json vj;
    for (const Row& r : {Row{&fv, &fa, "visual"}, Row{&fa, &fv, "audio"}}) {
      bool sil_deg = false, db_deg = false;
      const double sil = silhouette(r.fm->x, r.fm->labels, &sil_deg);
      const double db = davies_bouldin(r.fm->x, r.fm->labels, &db_deg);
      const double transfer = zero_shot_transfer(*r.other, *r.fm, cfg.data.classes);
      EffectiveDim ed = effective_dim(r.fm->x);
      csv += to_string(v) + std::string(",") + r.name + "," + num6(sil) + "," + num6(db) + "," +
             num6(transfer) + "," + num6(align_diag) + "," + num6(ed.fraction) + "\n";
      json mj;
      mj["silhouette"] = sil;
      mj["silhouette_degenerate"] = sil_deg;
      mj["davies_bouldin"] = std::isfinite(db) ? json(db) : json("inf");
      mj["davies_bouldin_degenerate"] = db_deg;
      mj["transfer"] = transfer;
      mj["effective_dim_components"] = ed.components;
      mj["effective_dim_fraction"] = ed.fraction;
      mj["effective_dim_degenerate"] = ed.degenerate;
      mj["balanced"] = r.fm->balanced;
      vj[r.name] = mj;
    }
    std::vector<std::vector<double>> amat(cfg.data.classes,
                                          std::vector<double>(cfg.data.classes));
    for (int i = 0; i < cfg.data.classes; ++i)
      for (int k = 0; k < cfg.data.classes; ++k)
        amat[i][k] = align.at(static_cast<std::size_t>(i) * cfg.data.classes + k);
    vj["alignment"] = amat;
    vj["alignment_mean_diag"] = align_diag;
    report[to_string(v)] = vj;
  }
  write_text(cfg.out_dir + "/engram.csv", csv);
  write_text(cfg.out_dir + "/engram.json", report.dump(2) + "\n");
}

void run_experiment(const ExperimentConfig& cfg) {
  if (cfg.experiment == "ablation") return run_ablation(cfg);
  if (cfg.experiment == "joint") return run_joint(cfg);
  if (cfg.experiment == "engram") return run_engram(cfg);
  throw ConfigError("unknown experiment '" + cfg.experiment + "'");
}

}  // namespace snn
