// vcemo: batch entry point. Exit codes: 0 ok, 1 invalid input, 2 runtime failure.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "vcemo/audio.hpp"
#include "vcemo/data.hpp"
#include "vcemo/error.hpp"
#include "vcemo/features.hpp"
#include "vcemo/report.hpp"
#include "vcemo/training.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;
using namespace vcemo;

namespace {

struct Options {
  std::string config;
  std::string profile;
  std::uint64_t seed = 0;
  bool seed_set = false;
  std::string out_dir;
  std::string modalities;
  int classes = 0;
  std::string manifest;
  std::string checkpoint;
  std::string in;
  std::string out;
  std::string split = "test";
  double snr_db = 0.0;
  double semitones = 0.0;
  double rate = 1.0;
  bool noise = false;
};

json raw_config(const Options& o) {
  if (o.config.empty()) return json::object();
  std::ifstream in(o.config);
  if (!in) throw Error(Errc::MissingFile, o.config);
  try {
    return json::parse(in, nullptr, true, true);
  } catch (const json::exception& e) {
    throw Error(Errc::InvalidConfig, o.config + ": " + e.what());
  }
}

TrainConfig resolve_config(const Options& o) {
  TrainConfig cfg = o.config.empty() ? TrainConfig::for_profile(o.profile.empty() ? "custom" : o.profile)
                                     : load_train_config(o.config, o.profile);
  if (o.seed_set) cfg.seed = o.seed;
  if (!o.modalities.empty()) cfg.modalities = ModalitySet::parse(o.modalities);
  if (o.classes != 0) cfg.classes = o.classes;
  return cfg;
}

std::string manifest_path(const Options& o) {
  if (!o.manifest.empty()) return o.manifest;
  const auto raw = raw_config(o);
  if (raw.contains("manifest")) {
    fs::path p = raw["manifest"].get<std::string>();
    if (p.is_relative()) p = fs::path(o.config).parent_path() / p;
    return p.string();
  }
  throw Error(Errc::InvalidConfig, "no manifest given (--manifest or \"manifest\" in the config)");
}

fs::path out_dir(const Options& o) {
  std::string dir = o.out_dir;
  if (dir.empty()) {
    const auto raw = raw_config(o);
    dir = raw.value("out_dir", std::string("runs"));
  }
  fs::create_directories(dir);
  return dir;
}

std::vector<Sample> load_samples(const Options& o, const TrainConfig& cfg) {
  return load_manifest(manifest_path(o), {cfg.labels(), cfg.label_map});
}

void write_json(const fs::path& path, const ordered_json& j) {
  std::ofstream out(path);
  if (!out) throw Error(Errc::Io, "cannot write " + path.string());
  out << j.dump(2) << '\n';
}

int cmd_ingest(const Options& o) {
  const auto cfg = resolve_config(o);
  const auto samples = load_samples(o, cfg);
  std::map<std::string, int> per_label;
  std::set<std::string> sessions;
  for (const auto& s : samples) {
    ++per_label[s.label];
    sessions.insert(s.session_id);
  }
  std::cout << samples.size() << " samples, " << sessions.size() << " sessions\n";
  for (const auto& [label, n] : per_label) std::cout << "  " << label << ": " << n << '\n';
  return 0;
}

int cmd_featurize(const Options& o) {
  const auto cfg = resolve_config(o);
  const auto samples = load_samples(o, cfg);
  FeatureExtractor features(cfg.providers, cfg.frontend, cfg.modalities);
  for (const auto& s : samples) features.get(s);
  std::cout << "featurized " << samples.size() << " samples (" << cfg.modalities.to_string() << ")";
  if (!features.cache()->directory().empty()) std::cout << " into " << features.cache()->directory().string();
  std::cout << '\n';
  return 0;
}

ordered_json split_ids(const DatasetSplit& split) {
  auto ids = [](const std::vector<Sample>& v) {
    std::vector<std::string> out;
    for (const auto& s : v) out.push_back(s.id);
    return out;
  };
  return {{"seed", split.seed}, {"train", ids(split.train)}, {"val", ids(split.val)}, {"test", ids(split.test)}};
}

int cmd_train(const Options& o) {
  auto cfg = resolve_config(o);
  const auto dir = out_dir(o);
  if (cfg.log_path.empty()) cfg.log_path = (dir / "train_log.jsonl").string();
  cfg.validate();
  const auto samples = load_samples(o, cfg);
  const auto split = split_dataset(samples, cfg.seed);
  FeatureExtractor features(cfg.providers, cfg.frontend, cfg.modalities);
  const auto result = train(cfg, split.train, split.val, features);
  const auto ckpt_path = dir / "checkpoint.bin";
  result.best.save(ckpt_path);
  write_json(dir / "split.json", split_ids(split));
  std::cout << "trained " << result.steps.size() << " steps; best epoch " << result.best.epoch << "\n"
            << "checkpoint: " << ckpt_path.string() << "\nlog: " << cfg.log_path << '\n';
  return 0;
}

int cmd_eval(const Options& o) {
  if (o.checkpoint.empty()) throw Error(Errc::InvalidConfig, "--checkpoint is required");
  const auto ckpt = Checkpoint::load(o.checkpoint);
  auto cfg = ckpt.train_config();
  if (o.classes != 0) cfg.classes = o.classes;
  const auto samples = load_samples(o, cfg);
  std::vector<Sample> subset = samples;
  if (o.split == "test" || o.split == "val") {
    const auto split = split_dataset(samples, cfg.seed);
    subset = o.split == "test" ? split.test : split.val;
  } else if (o.split != "all") {
    throw Error(Errc::InvalidConfig, "--split must be test, val or all");
  }
  const auto expected = o.modalities.empty() ? std::nullopt : std::optional(ModalitySet::parse(o.modalities));
  FeatureExtractor features(cfg.providers, cfg.frontend, cfg.modalities);
  const auto report = evaluate(ckpt, subset, features, cfg.labels(), expected);
  const ordered_json doc{{"name", fs::path(o.checkpoint).stem().string()},
                         {"classes", cfg.classes},
                         {"split", o.split},
                         {"metrics", report.to_json()}};
  if (!o.out.empty()) write_json(o.out, doc);
  std::cout << render_report(json::parse(doc.dump()));
  std::printf("WA %.4f  UA %.4f  macro-F1 %.4f  (%ld samples)\n", report.weighted_accuracy,
              report.unweighted_accuracy, report.macro_f1, report.total());
  return 0;
}

int cmd_cross_validate(const Options& o) {
  const auto cfg = resolve_config(o);
  const auto samples = load_samples(o, cfg);
  const auto dir = out_dir(o);
  const auto cv = cross_validate(cfg, samples, 5);
  const auto doc = cv.to_json();
  write_json(dir / "cross_validation.json", doc);
  std::cout << render_report(json::parse(doc.dump()));
  return 0;
}

int cmd_ablate(const Options& o) {
  const auto cfg = resolve_config(o);
  const auto samples = load_samples(o, cfg);
  const auto dir = out_dir(o);
  const auto split = split_dataset(samples, cfg.seed);
  const auto rows = ablate(cfg, split);
  const auto doc = ablation_to_json(rows, cfg.classes);
  write_json(dir / "ablation.json", doc);
  std::cout << render_report(json::parse(doc.dump()));
  return 0;
}

int cmd_augment(const Options& o) {
  if (o.in.empty() || o.out.empty()) throw Error(Errc::InvalidConfig, "--in and --out are required");
  const auto w = read_wav(o.in);
  std::mt19937_64 rng(o.seed);
  Waveform result;
  if (o.noise || o.semitones != 0.0 || o.rate != 1.0) {
    result = w;
    if (o.noise) result = add_noise_snr(result, o.snr_db, rng);
    if (o.semitones != 0.0) result = pitch_shift(result, o.semitones);
    if (o.rate != 1.0) result = time_stretch(result, o.rate);
  } else {
    const auto cfg = resolve_config(o);
    if (!cfg.augment.any_enabled()) {
      throw Error(Errc::InvalidConfig, "nothing to do: pass --snr/--semitones/--rate or a profile with augmentation");
    }
    const auto draw = draw_augmentation(cfg.augment, rng);
    result = apply_augmentation(w, draw, cfg.augment, rng);
    std::printf("noise=%d pitch=%d (%.3f st) stretch=%d (rate %.3f)\n", draw.noise, draw.pitch, draw.semitones,
                draw.stretch, draw.rate);
  }
  write_wav(o.out, result);
  std::printf("%s: %.3f s -> %s: %.3f s\n", o.in.c_str(), w.duration_s(), o.out.c_str(), result.duration_s());
  return 0;
}

int cmd_report(const Options& o) {
  if (o.in.empty()) throw Error(Errc::InvalidConfig, "--in is required");
  std::ifstream in(o.in);
  if (!in) throw Error(Errc::MissingFile, o.in);
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw Error(Errc::MalformedRecord, o.in + ": " + e.what());
  }
  const auto table = render_report(doc);
  if (!o.out.empty()) {
    std::ofstream out(o.out);
    if (!out) throw Error(Errc::Io, "cannot write " + o.out);
    out << table;
  }
  std::cout << table;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multimodal speech emotion recognition: data, training, evaluation and reporting"};
  app.require_subcommand(1);
  Options o;

  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", o.config, "run config (JSON)");
    sub->add_option("--profile", o.profile, "hyperparameter profile")
        ->check(CLI::IsMember({"vcemo", "iemocap", "custom"}));
    sub->add_option_function<std::uint64_t>(
        "--seed", [&](const std::uint64_t& s) { o.seed = s; o.seed_set = true; }, "random seed");
    sub->add_option("--out-dir", o.out_dir, "output directory");
    sub->add_option("--modalities", o.modalities, "comma-separated subset of acoustic,word,knowledge");
    sub->add_option("--classes", o.classes, "class count")->check(CLI::IsMember({4, 6}));
    sub->add_option("--manifest", o.manifest, "JSON-lines manifest");
  };

  auto* ingest = app.add_subcommand("ingest", "validate a manifest");
  auto* featurize = app.add_subcommand("featurize", "precompute and cache features");
  auto* train_cmd = app.add_subcommand("train", "train a model");
  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint");
  auto* cv_cmd = app.add_subcommand("cross-validate", "5-fold leave-one-session-out evaluation");
  auto* ablate_cmd = app.add_subcommand("ablate", "train one model per modality subset");
  auto* augment_cmd = app.add_subcommand("augment", "write an augmented copy of a WAV file");
  auto* report_cmd = app.add_subcommand("report", "render a metrics JSON file as a table");
  for (auto* sub : {ingest, featurize, train_cmd, eval_cmd, cv_cmd, ablate_cmd, augment_cmd}) common(sub);

  eval_cmd->add_option("--checkpoint", o.checkpoint, "checkpoint file")->required();
  eval_cmd->add_option("--split", o.split, "test, val or all");
  eval_cmd->add_option("--out", o.out, "metrics JSON output");
  augment_cmd->add_option("--in", o.in, "input WAV")->required();
  augment_cmd->add_option("--out", o.out, "output WAV")->required();
  augment_cmd->add_option_function<double>(
      "--snr", [&](const double& v) { o.snr_db = v; o.noise = true; }, "add Gaussian noise at this SNR (dB)");
  augment_cmd->add_option("--semitones", o.semitones, "pitch shift in semitones");
  augment_cmd->add_option("--rate", o.rate, "time-stretch rate");
  report_cmd->add_option("--in", o.in, "metrics JSON")->required();
  report_cmd->add_option("--out", o.out, "also write the table here");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    std::cerr << app.help();
    return 1;
  }

  try {
    if (*ingest) return cmd_ingest(o);
    if (*featurize) return cmd_featurize(o);
    if (*train_cmd) return cmd_train(o);
    if (*eval_cmd) return cmd_eval(o);
    if (*cv_cmd) return cmd_cross_validate(o);
    if (*ablate_cmd) return cmd_ablate(o);
    if (*augment_cmd) return cmd_augment(o);
    if (*report_cmd) return cmd_report(o);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return is_validation_error(e.code()) ? 1 : 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 1;
}
