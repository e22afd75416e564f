#pragma once

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "motionfuse/eval/runner.hpp"
#include "motionfuse/fusion/complexity.hpp"
#include "motionfuse/io/png.hpp"
#include "motionfuse/scene/io.hpp"
#include "motionfuse/scene/serialize.hpp"
#include "motionfuse/train/trainer.hpp"

namespace mfuse::cli {

namespace fs = std::filesystem;
using nlohmann::json;

// Flag values; unset ones leave the config file alone.
struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out, mechanism, modality;
  std::optional<double> p_neg;
  std::optional<int> n;
  std::optional<long long> max_steps;
  std::optional<std::string> checkpoint, rgb_checkpoint, motion_checkpoint, dataset, predictions;
  bool overlays = false;
};

struct RunConfig {
  std::string command;
  std::string out;
  std::uint64_t seed = 0;
  int n = 100;
  bool mix_given = false;  // eval/infer fall back to the checkpoint's mix otherwise
  scene::DatasetMix mix;
  fusion::FusionConfig model = fusion::FusionConfig::desk();
  train::TrainConfig train;
  std::string modality = "rgb";
  int embedding_dim = motion::kDefaultEmbeddingDim;
  std::string mechanism = "single";
  std::string checkpoint, rgb_checkpoint, motion_checkpoint, dataset, predictions;
  bool overlays = false;
  int bench_repeats = 3;
};

inline fusion::Mechanism mechanism_of(const std::string& s) {
  if (s == "d") return fusion::Mechanism::kDecoder;
  if (s == "e") return fusion::Mechanism::kEncoder;
  if (s == "ed") return fusion::Mechanism::kEncoderDecoder;
  return fusion::parse_mechanism(s);
}

inline std::string mechanism_flag(fusion::Mechanism m) {
  switch (m) {
    case fusion::Mechanism::kSingle: return "single";
    case fusion::Mechanism::kDecoder: return "d";
    case fusion::Mechanism::kEncoder: return "e";
    case fusion::Mechanism::kEncoderDecoder: return "ed";
    case fusion::Mechanism::kMbt: return "mbt";
  }
  return "single";
}

inline fusion::Modality modality_of(const std::string& s) { return fusion::parse_modality(s); }

inline train::MotionInput motion_input_of(const RunConfig& rc) {
  train::MotionInput mi;
  if (rc.modality != "rgb") mi.kind = motion::parse_kind(rc.modality);
  mi.embedding_dim = rc.embedding_dim;
  return mi;
}

inline json to_json(const RunConfig& rc) {
  return {{"command", rc.command},
          {"out", rc.out},
          {"seed", rc.seed},
          {"n", rc.n},
          {"mix", scene::mix_to_json(rc.mix)},
          {"model", fusion::to_json(rc.model)},
          {"train", train::to_json(rc.train)},
          {"modality", rc.modality},
          {"embedding_dim", rc.embedding_dim},
          {"mechanism", rc.mechanism},
          {"checkpoint", rc.checkpoint},
          {"rgb_checkpoint", rc.rgb_checkpoint},
          {"motion_checkpoint", rc.motion_checkpoint},
          {"dataset", rc.dataset},
          {"predictions", rc.predictions},
          {"overlays", rc.overlays},
          {"bench_repeats", rc.bench_repeats}};
}

// Config file first, flags on top. The training defaults depend on the
// mechanism: one-stream runs pretrain, two-stream runs finetune.
inline RunConfig resolve(const std::string& command, const json& j, const Overrides& o) {
  static const std::set<std::string> keys{"command",       "out",        "seed",      "n",
                                          "mix",           "model",      "train",     "modality",
                                          "embedding_dim", "mechanism",  "checkpoint", "rgb_checkpoint",
                                          "motion_checkpoint", "dataset", "predictions", "overlays",
                                          "bench_repeats"};
  check(j.is_object(), ErrorCode::kInvalidSpec, "config must be a JSON object");
  for (auto& [k, v] : j.items()) check(keys.count(k), ErrorCode::kInvalidSpec, "unknown config key '", k, "'");
  RunConfig rc;
  rc.command = command;
  try {
    rc.out = o.out.value_or(j.value("out", std::string()));
    rc.seed = o.seed.value_or(j.value("seed", std::uint64_t{0}));
    rc.n = o.n.value_or(j.value("n", rc.n));
    rc.modality = o.modality.value_or(j.value("modality", rc.modality));
    rc.embedding_dim = j.value("embedding_dim", rc.embedding_dim);
    rc.mechanism = mechanism_flag(mechanism_of(o.mechanism.value_or(j.value("mechanism", rc.mechanism))));
    if (j.contains("model")) rc.model = fusion::fusion_config_from_json(j["model"], rc.model);
    rc.model.mechanism = mechanism_of(rc.mechanism);
    const auto base = rc.model.two_stream() ? train::TrainConfig::finetune() : train::TrainConfig::pretrain();
    rc.train = j.contains("train") ? train::train_config_from_json(j["train"], base) : base;
    if (j.contains("mix")) {
      rc.mix = scene::mix_from_json(j["mix"]);
      rc.train.mix = rc.mix;
      rc.mix_given = true;
    } else {
      rc.mix = rc.train.mix;
      rc.mix_given = j.contains("train") && j["train"].contains("mix");
    }
    rc.train.seed = rc.seed;
    if (o.p_neg) rc.train.p_neg = *o.p_neg;
    if (o.max_steps) rc.train.max_steps = *o.max_steps;
    rc.checkpoint = o.checkpoint.value_or(j.value("checkpoint", std::string()));
    rc.rgb_checkpoint = o.rgb_checkpoint.value_or(j.value("rgb_checkpoint", std::string()));
    rc.motion_checkpoint = o.motion_checkpoint.value_or(j.value("motion_checkpoint", std::string()));
    rc.dataset = o.dataset.value_or(j.value("dataset", std::string()));
    rc.predictions = o.predictions.value_or(j.value("predictions", std::string()));
    rc.overlays = o.overlays || j.value("overlays", false);
    rc.bench_repeats = j.value("bench_repeats", rc.bench_repeats);
  } catch (const json::exception& e) {
    fail(ErrorCode::kInvalidSpec, "config: ", e.what());
  }
  modality_of(rc.modality);
  if (rc.modality != "rgb") motion::parse_kind(rc.modality);
  check(rc.n >= 1, ErrorCode::kInvalidSpec, "n must be >= 1");
  check(rc.bench_repeats >= 1, ErrorCode::kInvalidSpec, "bench_repeats must be >= 1");
  rc.model.validate();
  rc.train.validate();
  return rc;
}

inline json read_json(const std::string& path) {
  std::ifstream f(path);
  check(f.good(), ErrorCode::kIo, "cannot open '", path, "'");
  try {
    return json::parse(f);
  } catch (const json::exception& e) {
    fail(ErrorCode::kFormat, "'", path, "': ", e.what());
  }
}

inline void write_text(const fs::path& p, const std::string& text) {
  std::ofstream f(p, std::ios::binary);
  check(f.good(), ErrorCode::kIo, "cannot write '", p.string(), "'");
  f << text;
  check(f.good(), ErrorCode::kIo, "write to '", p.string(), "' failed");
}

// Creates `out` (which must be absent or empty) and removes it again if the
// command fails part way.
class OutputDir {
 public:
  explicit OutputDir(const std::string& out) : path_(out) {
    check(!out.empty(), ErrorCode::kInvalidArgument, "--out is required");
    if (fs::exists(path_)) {
      check(fs::is_directory(path_) && fs::is_empty(path_), ErrorCode::kInvalidArgument, "output directory '", out,
            "' exists and is not empty");
    } else {
      std::error_code ec;
      fs::create_directories(path_, ec);
      check(!ec, ErrorCode::kIo, "cannot create '", out, "': ", ec.message());
    }
  }
  ~OutputDir() {
    if (!committed_) {
      std::error_code ec;
      fs::remove_all(path_, ec);
    }
  }
  OutputDir(const OutputDir&) = delete;
  OutputDir& operator=(const OutputDir&) = delete;
  const fs::path& path() const { return path_; }
  void commit(const RunConfig& rc) {
    write_text(path_ / "run_config.json", to_json(rc).dump(2) + "\n");
    committed_ = true;
  }

 private:
  fs::path path_;
  bool committed_ = false;
};

inline std::string frame_name(int i) {
  std::ostringstream s;
  s << std::setw(5) << std::setfill('0') << i;
  return s.str();
}

// Moving instances as confidence-1 detections: the ground-truth record of a frame.
inline eval::Frame truth_frame(const scene::SceneSample& s, const std::string& id) {
  eval::Frame f{id, s.height, s.width, {}, train::targets_for(s, train::Objective::kMoving).masks};
  for (const auto& m : f.gts) f.preds.push_back({m, 1.0});
  return f;
}

inline int cmd_gen(const RunConfig& rc, std::ostream& log) {
  OutputDir dir(rc.out);
  rc.mix.validate();
  std::map<std::string, int> hist, per_source;
  for (auto t : {scene::Tag::kColinear, scene::Tag::kStaticMovable, scene::Tag::kGroupMotion, scene::Tag::kPartMotion,
                 scene::Tag::kNone})
    hist[scene::to_string(t)] = 0;
  json samples = json::array();
  std::string gt;
  const std::vector<std::pair<const char*, motion::MotionKind>> kinds = {
      {"optical_flow", motion::MotionKind::kOpticalFlow},
      {"scene_flow", motion::MotionKind::kSceneFlow},
      {"embedding", motion::MotionKind::kEmbedding}};
  std::vector<motion::StatsAccumulator> acc;
  for (auto& [name, k] : kinds) acc.emplace_back(motion::kind_channels(k, rc.embedding_dim));
  for (int i = 0; i < rc.n; ++i) {
    Rng rng(mix_seed(rc.seed, static_cast<std::uint64_t>(i)));
    const auto s = scene::sample_mix(rc.mix, rng);
    const auto name = frame_name(i);
    scene::write_sample(dir.path() / name, s);
    const std::string tag = scene::to_string(scene::primary_tag(s));
    ++hist[tag];
    ++per_source[rc.mix.sources[s.source].config.name + "#" + std::to_string(s.source)];
    samples.push_back({{"dir", name}, {"seed", s.seed}, {"source", s.source}, {"tag", tag}});
    gt += eval::frame_to_json(truth_frame(s, name)).dump() + "\n";
    for (std::size_t k = 0; k < kinds.size(); ++k) acc[k].add(motion::make_field(s, kinds[k].second, rc.embedding_dim));
  }
  write_text(dir.path() / "ground_truth.jsonl", gt);
  json stats = {{"embedding_dim", rc.embedding_dim}};
  for (std::size_t k = 0; k < kinds.size(); ++k) stats[kinds[k].first] = motion::stats_to_json(acc[k].finish());
  write_text(dir.path() / "motion_stats.json", stats.dump(2) + "\n");
  const json manifest = {{"n", rc.n},
                         {"seed", rc.seed},
                         {"mix", scene::mix_to_json(rc.mix)},
                         {"source_counts", per_source},
                         {"tag_histogram", hist},
                         {"samples", samples}};
  write_text(dir.path() / "manifest.json", manifest.dump(2) + "\n");
  dir.commit(rc);
  log << "wrote " << rc.n << " samples to " << rc.out << "\n";
  return 0;
}

// Samples in manifest order, named by their directory.
inline std::vector<std::pair<std::string, scene::SceneSample>> load_dataset(const std::string& root) {
  const auto manifest = read_json((fs::path(root) / "manifest.json").string());
  std::vector<std::pair<std::string, scene::SceneSample>> out;
  try {
    for (const auto& e : manifest.at("samples")) {
      const auto name = e.at("dir").get<std::string>();
      out.emplace_back(name, scene::read_sample(fs::path(root) / name));
    }
  } catch (const json::exception& e) {
    fail(ErrorCode::kFormat, "'", root, "/manifest.json': ", e.what());
  }
  return out;
}

inline std::vector<std::pair<std::string, scene::SceneSample>> eval_samples(const RunConfig& rc,
                                                                            const scene::DatasetMix& fallback) {
  if (!rc.dataset.empty()) return load_dataset(rc.dataset);
  std::vector<std::pair<std::string, scene::SceneSample>> out;
  const auto& mix = rc.mix_given ? rc.mix : fallback;
  const auto v = eval::draw_samples(mix, rc.n, rc.seed);
  for (std::size_t i = 0; i < v.size(); ++i) out.emplace_back(frame_name(static_cast<int>(i)), v[i]);
  return out;
}

inline fusion::Checkpoint open_checkpoint(const std::string& path, const char* what) {
  check(!path.empty(), ErrorCode::kInvalidArgument, "--", what, " is required");
  check(fs::exists(path), ErrorCode::kIo, what, " '", path, "' does not exist");
  return fusion::read_checkpoint(path);
}

inline int cmd_train(const RunConfig& rc, std::ostream& log) {
  const auto mech = mechanism_of(rc.mechanism);
  std::optional<fusion::Checkpoint> rgb, mot;
  if (mech != fusion::Mechanism::kSingle) {
    rgb = open_checkpoint(rc.rgb_checkpoint, "rgb-checkpoint");
    mot = open_checkpoint(rc.motion_checkpoint, "motion-checkpoint");
  }
  OutputDir dir(rc.out);
  std::ofstream jl(dir.path() / "train_log.jsonl");
  check(jl.good(), ErrorCode::kIo, "cannot write the training log");
  train::RunResult<float> r = mech == fusion::Mechanism::kSingle
                                  ? train::pretrain_single<float>(modality_of(rc.modality), motion_input_of(rc),
                                                                  rc.model, rc.train, &jl)
                                  : train::finetune_fusion<float>(*rgb, *mot, rc.model, rc.train, &jl);
  fusion::write_checkpoint((dir.path() / "model.ckpt").string(), r.checkpoint);
  dir.commit(rc);
  log << "trained " << r.history.size() << " steps";
  if (!r.history.empty()) log << ", final loss " << r.history.back().loss;
  log << "; checkpoint " << (dir.path() / "model.ckpt").string() << "\n";
  return 0;
}

struct Predicted {
  eval::DetectionSet set;
  std::vector<scene::SceneSample> samples;
};

// Without an explicit mix the checkpoint's training mix is used, and recorded
// in `rc` so that the resolved config reproduces the run.
inline Predicted predict(RunConfig& rc) {
  const auto ck = open_checkpoint(rc.checkpoint, "checkpoint");
  const auto info = train::run_info_from_meta(ck.meta);
  const auto model = train::load_model<float>(ck);
  if (!rc.mix_given) {
    rc.mix = info.train.mix;
    rc.mix_given = true;
  }
  Predicted p;
  for (auto& [name, s] : eval_samples(rc, rc.mix)) {
    p.set.frames.push_back(eval::predict_frame(model, s, info.data, name));
    p.samples.push_back(std::move(s));
  }
  return p;
}

inline json report_json(const eval::DetectionSet& d, const std::vector<scene::SceneSample>& samples) {
  json j = eval::to_json(eval::evaluate(d));
  json by_tag = json::object();
  for (auto t : {scene::Tag::kColinear, scene::Tag::kStaticMovable, scene::Tag::kGroupMotion, scene::Tag::kPartMotion,
                 scene::Tag::kNone}) {
    const auto sub = eval::subset(d, samples, t);
    if (!sub.frames.empty()) by_tag[scene::to_string(t)] = eval::to_json(eval::evaluate(sub));
  }
  j["by_tag"] = by_tag;
  return j;
}

inline int cmd_eval(RunConfig rc, std::ostream& log) {
  Predicted p;
  if (!rc.predictions.empty()) {
    // a stored prediction dump scored against a generated dataset
    check(!rc.dataset.empty(), ErrorCode::kInvalidArgument, "--predictions needs --dataset");
    std::ifstream in(rc.predictions);
    check(in.good(), ErrorCode::kIo, "cannot open predictions '", rc.predictions, "'");
    std::map<std::string, eval::Frame> by_id;
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      json j;
      try {
        j = json::parse(line);
      } catch (const json::exception& e) {
        fail(ErrorCode::kFormat, "'", rc.predictions, "': ", e.what());
      }
      auto f = eval::frame_from_json(j);
      by_id[f.id] = std::move(f);
    }
    for (auto& [name, s] : load_dataset(rc.dataset)) {
      eval::Frame f = truth_frame(s, name);
      f.preds.clear();
      if (auto it = by_id.find(name); it != by_id.end()) {
        check(it->second.height == s.height && it->second.width == s.width, ErrorCode::kShapeMismatch,
              "prediction size differs from sample '", name, "'");
        f.preds = it->second.preds;
      }
      p.set.frames.push_back(std::move(f));
      p.samples.push_back(std::move(s));
    }
  } else {
    p = predict(rc);
  }
  OutputDir dir(rc.out);
  const auto j = report_json(p.set, p.samples);
  write_text(dir.path() / "metrics.json", j.dump(2) + "\n");
  dir.commit(rc);
  log << "AP " << j["AP"] << " AP50 " << j["AP50"] << " FP/frame " << j["FP_per_frame"] << " FN/frame "
      << j["FN_per_frame"] << " over " << p.set.frames.size() << " frames\n";
  return 0;
}

// Frame 1 with every detection of confidence >= 0.5 tinted in its own colour.
inline io::Image8 overlay(const scene::SceneSample& s, const eval::Frame& f) {
  static const std::uint8_t pal[6][3] = {{230, 25, 75}, {60, 180, 75}, {255, 225, 25},
                                          {0, 130, 200}, {245, 130, 48}, {145, 30, 180}};
  io::Image8 img{s.height, s.width, 3, std::vector<std::uint8_t>(static_cast<std::size_t>(s.pixels()) * 3)};
  for (std::size_t i = 0; i < img.data.size(); ++i) img.data[i] = scene::to_u8(s.frames[0][i]);
  int k = 0;
  for (const auto& d : f.preds) {
    if (d.confidence < 0.5) continue;
    const auto* c = pal[k++ % 6];
    for (int p = 0; p < s.pixels(); ++p)
      if (d.mask[p])
        for (int ch = 0; ch < 3; ++ch)
          img.data[3 * p + ch] = static_cast<std::uint8_t>((img.data[3 * p + ch] + c[ch]) / 2);
  }
  return img;
}

inline int cmd_infer(RunConfig rc, std::ostream& log) {
  const auto p = predict(rc);
  OutputDir dir(rc.out);
  std::string dump;
  for (const auto& f : p.set.frames) dump += eval::frame_to_json(f).dump() + "\n";
  write_text(dir.path() / "predictions.jsonl", dump);
  if (rc.overlays) {
    fs::create_directories(dir.path() / "overlays");
    for (std::size_t i = 0; i < p.samples.size(); ++i)
      io::write_png8((dir.path() / "overlays" / (p.set.frames[i].id + ".png")).string(),
                     overlay(p.samples[i], p.set.frames[i]));
  }
  dir.commit(rc);
  log << "wrote predictions for " << p.set.frames.size() << " frames\n";
  return 0;
}

struct BenchRow {
  std::string mechanism;
  double ms = 0;
  double param_mb = 0;
  double attn_mb = 0;  // attention weights a training pass keeps for backward
  AttentionCounter counted, expected;
};

inline std::vector<BenchRow> bench_rows(const RunConfig& rc) {
  using fusion::Mechanism;
  std::vector<BenchRow> rows;
  for (auto m : {Mechanism::kSingle, Mechanism::kMbt, Mechanism::kDecoder, Mechanism::kEncoder,
                 Mechanism::kEncoderDecoder}) {
    auto c = rc.model;
    c.mechanism = m;
    fusion::FusionModel<float> model(c, rc.seed);
    fusion::ModelInput<float> in;
    Rng rng(mix_seed(rc.seed, 0xBE7C));
    auto image = [&](int ch) {
      std::vector<float> v(static_cast<std::size_t>(ch) * c.input_height * c.input_width);
      for (auto& x : v) x = static_cast<float>(normal(rng));
      return Tensor<float>({ch, c.input_height, c.input_width}, std::move(v));
    };
    if (!c.two_stream()) {
      (c.single_stream == fusion::Modality::kAppearance ? in.rgb : in.motion) = image(c.channels_of(c.single_stream));
    } else {
      in.rgb = image(c.rgb_channels);
      in.motion = image(c.motion_channels);
    }
    BenchRow r;
    r.mechanism = m == Mechanism::kMbt ? "mbt_decoder" : fusion::to_string(m);
    NoGradGuard ng;
    {
      CountingScope scope(&r.counted);
      model.forward(in);
    }
    const auto t0 = std::chrono::steady_clock::now();
    for (int i = 0; i < rc.bench_repeats; ++i) model.forward(in);
    r.ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count() / rc.bench_repeats;
    r.expected = fusion::expected_pairs(c, fusion::LevelLayout::of(c.input_height, c.input_width));
    std::int64_t params = 0;
    for (const auto& p : model.parameters()) params += p.tensor.numel();
    r.param_mb = params * 4.0 / (1 << 20);
    r.attn_mb = static_cast<double>(r.counted.total()) * c.n_heads * 4.0 / (1 << 20);
    rows.push_back(r);
  }
  return rows;
}

inline int cmd_bench(const RunConfig& rc, std::ostream& log) {
  std::optional<OutputDir> dir;
  if (!rc.out.empty()) dir.emplace(rc.out);
  const auto rows = bench_rows(rc);
  json j = json::array();
  log << std::left << std::setw(16) << "mechanism" << std::right << std::setw(10) << "ms" << std::setw(11) << "param_MB"
      << std::setw(10) << "attn_MB" << std::setw(14) << "enc_pairs" << std::setw(14) << "dec_cross" << std::setw(14)
      << "dec_self" << std::setw(14) << "total" << "  closed_form\n";
  bool all_match = true;
  for (const auto& r : rows) {
    const bool match = r.counted.pairs == r.expected.pairs;
    all_match = all_match && match;
    log << std::left << std::setw(16) << r.mechanism << std::right << std::fixed << std::setprecision(1)
        << std::setw(10) << r.ms << std::setprecision(2) << std::setw(11) << r.param_mb << std::setw(10) << r.attn_mb
        << std::setw(14) << r.counted.pairs[0] << std::setw(14) << r.counted.pairs[1] << std::setw(14)
        << r.counted.pairs[2] << std::setw(14) << r.counted.total() << "  " << (match ? "match" : "MISMATCH") << "\n";
    log.unsetf(std::ios::floatfield);
    j.push_back({{"mechanism", r.mechanism},
                 {"wall_ms", r.ms},
                 {"param_mb", r.param_mb},
                 {"attention_mb_estimate", r.attn_mb},
                 {"pairs", {{"encoder", r.counted.pairs[0]}, {"decoder_cross", r.counted.pairs[1]},
                            {"decoder_self", r.counted.pairs[2]}, {"total", r.counted.total()}}},
                 {"closed_form_total", r.expected.total()},
                 {"closed_form_match", match}});
  }
  check(all_match, ErrorCode::kShapeMismatch, "counted attention pairs differ from the closed form");
  if (dir) {
    write_text(dir->path() / "bench.json", j.dump(2) + "\n");
    dir->commit(rc);
  }
  return 0;
}

inline int run_command(const RunConfig& rc, std::ostream& log) {
  if (rc.command == "gen") return cmd_gen(rc, log);
  if (rc.command == "train") return cmd_train(rc, log);
  if (rc.command == "eval") return cmd_eval(rc, log);
  if (rc.command == "infer") return cmd_infer(rc, log);
  if (rc.command == "bench") return cmd_bench(rc, log);
  fail(ErrorCode::kInvalidArgument, "unknown command '", rc.command, "'");
}

// Configuration mistakes are usage errors (1); everything else is a runtime failure (2).
inline int exit_code(ErrorCode c) {
  return c == ErrorCode::kInvalidSpec || c == ErrorCode::kInvalidArgument ? 1 : 2;
}

}  // namespace mfuse::cli
