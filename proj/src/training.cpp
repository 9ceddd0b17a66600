#include "vcemo/training.hpp"

#include <cmath>
#include <fstream>

#include "vcemo/error.hpp"

namespace vcemo {

namespace {

using nlohmann::json;
using nlohmann::ordered_json;

template <typename T>
void take(const json& j, const char* key, T& out) {
  if (auto it = j.find(key); it != j.end() && !it->is_null()) {
    try {
      out = it->get<T>();
    } catch (const json::exception& e) {
      throw Error(Errc::InvalidConfig, std::string("config key '") + key + "': " + e.what());
    }
  }
}

constexpr std::uint64_t kDropoutStream = 0x9E3779B97F4A7C15ULL;
constexpr std::uint64_t kAugmentStream = 0xBF58476D1CE4E5B9ULL;
constexpr std::uint64_t kKeyStream = 0x94D049BB133111EBULL;
constexpr std::uint64_t kShuffleStream = 0xD6E8FEB86659FD93ULL;

ag::Var zero_scalar() { return ag::constant(Matrix::Zero(1, 1)); }

double batch_accuracy(const Matrix& logits, std::span<const int> labels) {
  int correct = 0;
  for (Index i = 0; i < logits.rows(); ++i) correct += argmax_lowest(logits.row(i)) == labels[static_cast<std::size_t>(i)];
  return static_cast<double>(correct) / static_cast<double>(logits.rows());
}

double accuracy_of(EmotionModel& model, const std::vector<Sample>& samples, FeatureExtractor& features) {
  const auto pred = predict(model, samples, features);
  int correct = 0;
  for (std::size_t i = 0; i < samples.size(); ++i) correct += pred[i] == samples[i].label_index;
  return static_cast<double>(correct) / static_cast<double>(samples.size());
}

std::vector<int> labels_of(const std::vector<Sample>& samples) {
  std::vector<int> out;
  for (const auto& s : samples) out.push_back(s.label_index);
  return out;
}

}  // namespace

TrainConfig TrainConfig::for_profile(const std::string& profile) {
  TrainConfig c;
  c.profile = profile;
  if (profile == "vcemo") {
    c.learning_rate = 1e-5;
    c.weight_decay = 1e-3;
    c.alpha = 0.1;
    c.batch_size = 256;
    c.epochs = 50;
    c.tau = 1.0;
    c.contrastive.use_queue = false;
    c.contrastive.double_forward = true;
  } else if (profile == "iemocap") {
    c.learning_rate = 1e-4;
    c.weight_decay = 0.0;
    c.alpha = 100.0;
    c.batch_size = 256;
    c.epochs = 50;
    c.tau = 1.0;
    c.contrastive.use_queue = true;
    c.contrastive.double_forward = true;
  } else if (profile != "custom") {
    throw Error(Errc::InvalidConfig, "unknown profile '" + profile + "' (vcemo, iemocap, custom)");
  }
  if (profile != "custom") {
    c.augment.noise = {true, 0.5, 30.0};
    c.augment.pitch = {true, 0.5, -2.0, 2.0};
    c.augment.stretch = {true, 0.5, 0.9, 1.1};
  }
  return c;
}

TrainConfig TrainConfig::from_json(const json& j, TrainConfig c) {
  if (!j.is_object()) throw Error(Errc::InvalidConfig, "run config must be a JSON object");
  take(j, "profile", c.profile);
  take(j, "learning_rate", c.learning_rate);
  take(j, "weight_decay", c.weight_decay);
  take(j, "alpha", c.alpha);
  take(j, "batch_size", c.batch_size);
  take(j, "epochs", c.epochs);
  take(j, "tau", c.tau);
  take(j, "seed", c.seed);
  take(j, "classes", c.classes);
  take(j, "label_map", c.label_map);
  if (j.contains("modalities")) c.modalities = ModalitySet::parse(j["modalities"].get<std::string>());
  take(j, "early_stop_accuracy", c.early_stop_accuracy);
  take(j, "max_steps", c.max_steps);
  take(j, "log_path", c.log_path);

  if (auto it = j.find("augment"); it != j.end()) {
    if (auto n = it->find("noise"); n != it->end()) {
      take(*n, "enabled", c.augment.noise.enabled);
      take(*n, "probability", c.augment.noise.probability);
      take(*n, "snr_db", c.augment.noise.snr_db);
    }
    if (auto p = it->find("pitch"); p != it->end()) {
      take(*p, "enabled", c.augment.pitch.enabled);
      take(*p, "probability", c.augment.pitch.probability);
      take(*p, "min_semitones", c.augment.pitch.min_semitones);
      take(*p, "max_semitones", c.augment.pitch.max_semitones);
    }
    if (auto s = it->find("stretch"); s != it->end()) {
      take(*s, "enabled", c.augment.stretch.enabled);
      take(*s, "probability", c.augment.stretch.probability);
      take(*s, "min_rate", c.augment.stretch.min_rate);
      take(*s, "max_rate", c.augment.stretch.max_rate);
    }
  }
  if (auto it = j.find("contrastive"); it != j.end()) {
    take(*it, "double_forward", c.contrastive.double_forward);
    take(*it, "use_queue", c.contrastive.use_queue);
    take(*it, "queue_capacity", c.contrastive.queue_capacity);
    take(*it, "momentum", c.contrastive.momentum);
    take(*it, "queue_positives", c.contrastive.queue_positives);
    take(*it, "augment_views", c.contrastive.augment_views);
  }
  if (auto it = j.find("model"); it != j.end()) {
    auto& m = c.model;
    const Index old_d = m.encoder.d_model;
    take(*it, "d_model", m.encoder.d_model);
    if (m.encoder.d_model != old_d) {
      m.encoder.recurrent_hidden = m.encoder.d_model;
      m.attention.d_model = m.encoder.d_model;
      m.attention.ffn_width = 4 * m.encoder.d_model;
      m.predictor_hidden = m.encoder.d_model;
    }
    if (it->contains("conv_channels")) {
      const auto channels = (*it)["conv_channels"].get<std::vector<Index>>();
      m.encoder.conv_blocks.clear();
      for (Index ch : channels) m.encoder.conv_blocks.push_back({ch, 3, 1, 2});
    }
    Index kernel = m.encoder.conv_blocks.empty() ? 3 : m.encoder.conv_blocks.front().kernel;
    Index stride_time = m.encoder.conv_blocks.empty() ? 1 : m.encoder.conv_blocks.front().stride_time;
    Index stride_freq = m.encoder.conv_blocks.empty() ? 2 : m.encoder.conv_blocks.front().stride_freq;
    take(*it, "conv_kernel", kernel);
    take(*it, "conv_time_stride", stride_time);
    take(*it, "conv_freq_stride", stride_freq);
    for (auto& b : m.encoder.conv_blocks) {
      b.kernel = kernel;
      b.stride_time = stride_time;
      b.stride_freq = stride_freq;
    }
    take(*it, "conv1d_kernel", m.encoder.conv1d_kernel);
    if (it->contains("dropout")) {
      m.encoder.dropout_p = (*it)["dropout"].get<double>();
      m.attention.dropout_p = m.encoder.dropout_p;
    }
    take(*it, "n_layers", m.attention.n_layers);
    take(*it, "n_heads", m.attention.n_heads);
    take(*it, "ffn_width", m.attention.ffn_width);
    take(*it, "projection_dim", m.projection_dim);
    take(*it, "predictor_layers", m.predictor_layers);
    take(*it, "predictor_hidden", m.predictor_hidden);
    take(*it, "word_guides_acoustic", m.word_guides_acoustic);
  }
  if (auto it = j.find("frontend"); it != j.end()) {
    take(*it, "target_rate", c.frontend.target_rate);
    take(*it, "win_length", c.frontend.win_length);
    take(*it, "hop_length", c.frontend.hop_length);
    take(*it, "fft_size", c.frontend.fft_size);
    take(*it, "mel_bins", c.frontend.mel_bins);
    take(*it, "log_floor", c.frontend.log_floor);
  }
  if (auto it = j.find("providers"); it != j.end()) {
    take(*it, "transcript", c.providers.transcript);
    take(*it, "word_vectors", c.providers.word_vectors);
    take(*it, "sentence_encoder", c.providers.sentence_encoder);
    take(*it, "cache_dir", c.providers.cache_dir);
    take(*it, "max_tokens", c.providers.max_tokens);
  }
  return c;
}

ordered_json TrainConfig::to_json() const {
  ordered_json j;
  j["profile"] = profile;
  j["learning_rate"] = learning_rate;
  j["weight_decay"] = weight_decay;
  j["alpha"] = alpha;
  j["batch_size"] = batch_size;
  j["epochs"] = epochs;
  j["tau"] = tau;
  j["seed"] = seed;
  j["classes"] = classes;
  j["label_map"] = label_map;
  j["modalities"] = modalities.to_string();
  j["early_stop_accuracy"] = early_stop_accuracy;
  j["max_steps"] = max_steps;
  j["log_path"] = log_path;
  j["augment"] = {
      {"noise", {{"enabled", augment.noise.enabled}, {"probability", augment.noise.probability},
                 {"snr_db", augment.noise.snr_db}}},
      {"pitch", {{"enabled", augment.pitch.enabled}, {"probability", augment.pitch.probability},
                 {"min_semitones", augment.pitch.min_semitones}, {"max_semitones", augment.pitch.max_semitones}}},
      {"stretch", {{"enabled", augment.stretch.enabled}, {"probability", augment.stretch.probability},
                   {"min_rate", augment.stretch.min_rate}, {"max_rate", augment.stretch.max_rate}}},
  };
  j["contrastive"] = {{"double_forward", contrastive.double_forward},
                      {"use_queue", contrastive.use_queue},
                      {"queue_capacity", contrastive.queue_capacity},
                      {"momentum", contrastive.momentum},
                      {"queue_positives", contrastive.queue_positives},
                      {"augment_views", contrastive.augment_views}};
  std::vector<Index> channels;
  for (const auto& b : model.encoder.conv_blocks) channels.push_back(b.channels);
  const auto& first = model.encoder.conv_blocks.front();
  j["model"] = {{"d_model", model.encoder.d_model},
                {"conv_channels", channels},
                {"conv_kernel", first.kernel},
                {"conv_time_stride", first.stride_time},
                {"conv_freq_stride", first.stride_freq},
                {"conv1d_kernel", model.encoder.conv1d_kernel},
                {"dropout", model.encoder.dropout_p},
                {"n_layers", model.attention.n_layers},
                {"n_heads", model.attention.n_heads},
                {"ffn_width", model.attention.ffn_width},
                {"projection_dim", model.projection_dim},
                {"predictor_layers", model.predictor_layers},
                {"predictor_hidden", model.predictor_hidden},
                {"word_guides_acoustic", model.word_guides_acoustic}};
  j["frontend"] = {{"target_rate", frontend.target_rate}, {"win_length", frontend.win_length},
                   {"hop_length", frontend.hop_length},   {"fft_size", frontend.fft_size},
                   {"mel_bins", frontend.mel_bins},       {"log_floor", frontend.log_floor}};
  j["providers"] = {{"transcript", providers.transcript},
                    {"word_vectors", providers.word_vectors},
                    {"sentence_encoder", providers.sentence_encoder},
                    {"cache_dir", providers.cache_dir},
                    {"max_tokens", providers.max_tokens}};
  return j;
}

void TrainConfig::validate() const {
  if (profile != "vcemo" && profile != "iemocap" && profile != "custom") {
    throw Error(Errc::InvalidConfig, "unknown profile '" + profile + "'");
  }
  if (modalities.empty()) throw Error(Errc::InvalidConfig, "modality set must not be empty");
  if (!(learning_rate > 0.0)) throw Error(Errc::InvalidConfig, "learning_rate must be > 0");
  if (weight_decay < 0.0) throw Error(Errc::InvalidConfig, "weight_decay must be >= 0");
  if (alpha < 0.0 || !std::isfinite(alpha)) throw Error(Errc::InvalidConfig, "alpha must be finite and >= 0");
  if (!(tau > 0.0)) throw Error(Errc::InvalidConfig, "tau must be > 0");
  if (epochs < 1) throw Error(Errc::InvalidConfig, "epochs must be >= 1");
  if (batch_size < 1) throw Error(Errc::InvalidConfig, "batch_size must be >= 1");
  if (alpha > 0.0 && batch_size < 2) throw Error(Errc::InvalidConfig, "contrastive training needs batch_size >= 2");
  if (classes != 4 && classes != 6) throw Error(Errc::InvalidConfig, "classes must be 4 or 6");
  if (contrastive.momentum < 0.0 || contrastive.momentum > 1.0) {
    throw Error(Errc::InvalidConfig, "momentum must be in [0, 1]");
  }
  if (contrastive.queue_capacity < 1) throw Error(Errc::InvalidConfig, "queue_capacity must be >= 1");
  if (profile == "iemocap" && label_map.empty()) {
    throw Error(Errc::InvalidConfig, "the iemocap profile needs an explicit label_map");
  }
  if (max_steps < 0) throw Error(Errc::InvalidConfig, "max_steps must be >= 0");
  frontend.validate();
  model_config().validate();
}

ModelConfig TrainConfig::model_config() const {
  ModelConfig m = model;
  m.num_classes = classes;
  m.modalities = modalities;
  m.encoder.mel_bins = frontend.mel_bins;
  return m;
}

TrainConfig load_train_config(const std::filesystem::path& path, const std::string& profile) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::MissingFile, path.string());
  json j;
  try {
    j = json::parse(in, nullptr, true, true);
  } catch (const json::exception& e) {
    throw Error(Errc::InvalidConfig, path.string() + ": " + e.what());
  }
  const std::string name = !profile.empty() ? profile : j.value("profile", std::string("custom"));
  auto cfg = TrainConfig::from_json(j, TrainConfig::for_profile(name));
  cfg.profile = name;
  return cfg;
}

Adam::Adam(double lr, double weight_decay, double beta1, double beta2, double eps)
    : lr_(lr), weight_decay_(weight_decay), beta1_(beta1), beta2_(beta2), eps_(eps) {}

void Adam::step(ParameterStore& store) {
  auto& params = store.parameters();
  if (state_.m.size() != params.size()) {
    state_.m.clear();
    state_.v.clear();
    for (const auto& p : params) {
      state_.m.push_back(Matrix::Zero(p.var.rows(), p.var.cols()));
      state_.v.push_back(Matrix::Zero(p.var.rows(), p.var.cols()));
    }
  }
  ++state_.step;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(state_.step));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(state_.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = params[i].var;
    if (!p.has_grad()) continue;
    Matrix g = p.grad();
    if (weight_decay_ != 0.0) g += weight_decay_ * p.value();
    state_.m[i] = beta1_ * state_.m[i] + (1.0 - beta1_) * g;
    state_.v[i] = beta2_ * state_.v[i] + (1.0 - beta2_) * g.cwiseProduct(g);
    const Matrix denom = ((state_.v[i] / c2).array().sqrt() + eps_).matrix();
    p.mutable_value() -= (lr_ / c1) * state_.m[i].cwiseQuotient(denom);
  }
}

int argmax_lowest(const RowVector& logits) {
  int best = 0;
  for (Index c = 1; c < logits.size(); ++c)
    if (logits(c) > logits(best)) best = static_cast<int>(c);
  return best;
}

std::vector<int> predict(EmotionModel& model, const std::vector<Sample>& samples, FeatureExtractor& features,
                         int batch_size) {
  ag::NoGradGuard no_grad;
  ForwardContext ctx{false, nullptr};
  std::vector<int> out;
  for (std::size_t start = 0; start < samples.size(); start += static_cast<std::size_t>(batch_size)) {
    const std::size_t end = std::min(samples.size(), start + static_cast<std::size_t>(batch_size));
    std::vector<const SampleFeatures*> batch;
    for (std::size_t i = start; i < end; ++i) batch.push_back(&features.get(samples[i]));
    const auto logits = model.forward(batch, ctx).logits.value();
    for (Index r = 0; r < logits.rows(); ++r) out.push_back(argmax_lowest(logits.row(r)));
  }
  return out;
}

TrainResult train(const TrainConfig& cfg, const std::vector<Sample>& train_set, const std::vector<Sample>& val,
                  FeatureExtractor& features) {
  cfg.validate();
  if (train_set.empty()) throw Error(Errc::TooFewSamples, "no training samples");
  const auto& fm = features.modalities();
  if ((cfg.modalities.acoustic && !fm.acoustic) || (cfg.modalities.word && !fm.word) ||
      (cfg.modalities.knowledge && !fm.knowledge)) {
    throw Error(Errc::InvalidConfig, "feature extractor does not provide every configured modality");
  }

  const ModelConfig mc = cfg.model_config();
  EmotionModel model(mc, cfg.seed);
  Adam opt(cfg.learning_rate, cfg.weight_decay);

  std::unique_ptr<EmotionModel> key_model;
  MoCoQueue queue(cfg.contrastive.queue_capacity, mc.projection_dim);
  if (cfg.contrastive.use_queue) {
    key_model = std::make_unique<EmotionModel>(mc, cfg.seed);
    copy_state(key_model->store(), model.store());
  }

  std::mt19937_64 dropout_rng(cfg.seed ^ kDropoutStream);
  std::mt19937_64 augment_rng(cfg.seed ^ kAugmentStream);
  std::mt19937_64 key_rng(cfg.seed ^ kKeyStream);
  const bool augment_audio = cfg.augment.any_enabled() && cfg.modalities.acoustic;
  const bool augment_views = cfg.contrastive.augment_views && cfg.modalities.acoustic;

  std::ofstream log;
  if (!cfg.log_path.empty()) {
    const std::filesystem::path p(cfg.log_path);
    if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
    log.open(p);
    if (!log) throw Error(Errc::Io, "cannot write log " + cfg.log_path);
  }

  TrainResult result;
  double best_val = -1.0;
  int step = 0;
  bool out_of_steps = false;
  const std::size_t n = train_set.size();
  const auto batch = static_cast<std::size_t>(cfg.batch_size);

  for (int epoch = 1; epoch <= cfg.epochs && !out_of_steps; ++epoch) {
    const auto order = seeded_permutation(n, cfg.seed ^ (kShuffleStream + static_cast<std::uint64_t>(epoch)));
    double loss_sum = 0.0;
    int epoch_steps = 0;

    for (std::size_t start = 0; start < n; start += batch) {
      const std::size_t end = std::min(n, start + batch);
      std::vector<int> labels;
      std::vector<SampleFeatures> owned;
      owned.reserve(end - start);
      std::vector<const SampleFeatures*> inputs;
      for (std::size_t k = start; k < end; ++k) {
        const Sample& s = train_set[order[k]];
        labels.push_back(s.label_index);
        if (augment_audio) {
          owned.push_back(features.with_waveform(s, augment(features.waveform(s), cfg.augment, augment_rng)));
          inputs.push_back(&owned.back());
        } else {
          inputs.push_back(&features.get(s));
        }
      }

      ForwardContext ctx{true, &dropout_rng};
      BatchOutputs first;
      std::optional<BatchOutputs> second;
      if (cfg.alpha > 0.0 && cfg.contrastive.double_forward && !augment_views) {
        auto views = paired_views(model, inputs, ctx);
        first = views.first;
        second = views.second;
      } else {
        first = model.forward(inputs, ctx);
        if (cfg.alpha > 0.0 && cfg.contrastive.double_forward) {
          std::vector<SampleFeatures> alt;
          alt.reserve(inputs.size());
          std::vector<const SampleFeatures*> alt_inputs;
          for (std::size_t k = start; k < end; ++k) {
            const Sample& s = train_set[order[k]];
            alt.push_back(features.with_waveform(s, augment(features.waveform(s), cfg.augment, augment_rng)));
            alt_inputs.push_back(&alt.back());
          }
          second = model.forward(alt_inputs, ctx);
        }
      }

      const auto ce = ag::cross_entropy(first.logits, labels);
      ag::Var sc = zero_scalar();
      if (cfg.alpha > 0.0) {
        ag::Var z = first.projections;
        std::vector<int> z_labels = labels;
        if (second) {
          const ag::Var parts[] = {first.projections, second->projections};
          z = ag::concat_rows(parts);
          z_labels.insert(z_labels.end(), labels.begin(), labels.end());
        }
        std::optional<ContrastMemory> memory;
        if (key_model && queue.size() > 0) memory = queue.snapshot(cfg.contrastive.queue_positives);
        try {
          sc = supcon_loss(z, z_labels, cfg.tau, memory ? &*memory : nullptr);
        } catch (const Error& e) {
          if (e.code() == Errc::NonFiniteInput) {
            throw Error(Errc::NonFiniteLoss, "step " + std::to_string(step + 1) + ": " + e.what());
          }
          if (e.code() != Errc::NoPositivesAnywhere && e.code() != Errc::BatchTooSmall) throw;
        }
      }
      const auto total = combined_loss(ce, sc, cfg.alpha);
      const auto breakdown = LossBreakdown{ce.scalar(), sc.scalar(), cfg.alpha, total.scalar()};
      ++step;
      if (!std::isfinite(breakdown.l_total)) {
        throw Error(Errc::NonFiniteLoss, "step " + std::to_string(step) + ": l_ce=" + std::to_string(breakdown.l_ce) +
                                             " l_supcon=" + std::to_string(breakdown.l_supcon));
      }

      model.store().zero_grad();
      ag::backward(total);
      opt.step(model.store());

      if (key_model) {
        momentum_update(key_model->store(), model.store(), cfg.contrastive.momentum);
        ag::NoGradGuard no_grad;
        ForwardContext key_ctx{true, &key_rng};
        queue.enqueue(key_model->forward(inputs, key_ctx).projections.value(), labels);
      }

      StepLog entry{step, epoch, breakdown, batch_accuracy(first.logits.value(), labels)};
      result.steps.push_back(entry);
      if (log) {
        ordered_json line{{"type", "step"},          {"step", step},
                          {"epoch", epoch},          {"l_ce", breakdown.l_ce},
                          {"l_supcon", breakdown.l_supcon}, {"alpha", breakdown.alpha},
                          {"l_total", breakdown.l_total},   {"batch_accuracy", entry.batch_accuracy}};
        if (key_model) line["queue_size"] = queue.size();
        log << line.dump() << '\n';
      }
      loss_sum += breakdown.l_total;
      ++epoch_steps;
      if (cfg.max_steps > 0 && step >= cfg.max_steps) {
        out_of_steps = true;
        break;
      }
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.steps = step;
    rec.train_loss = loss_sum / std::max(1, epoch_steps);
    if (cfg.early_stop_accuracy > 0.0) rec.train_accuracy = accuracy_of(model, train_set, features);
    if (!val.empty()) {
      const auto pred = predict(model, val, features);
      const auto truth = labels_of(val);
      const auto m = compute_metrics(truth, pred, cfg.classes);
      rec.val_accuracy = m.accuracy;
      rec.val_macro_f1 = m.macro_f1;
    }
    result.history.push_back(rec);
    if (log) {
      log << ordered_json{{"type", "epoch"},
                          {"epoch", epoch},
                          {"step", step},
                          {"train_loss", rec.train_loss},
                          {"train_accuracy", rec.train_accuracy},
                          {"val_accuracy", rec.val_accuracy},
                          {"val_macro_f1", rec.val_macro_f1}}
                 .dump()
          << '\n';
    }

    if (val.empty() || rec.val_accuracy > best_val) {
      best_val = rec.val_accuracy;
      result.best = make_checkpoint(cfg, model, opt, epoch, result.history);
    }
    if (cfg.early_stop_accuracy > 0.0 && rec.train_accuracy >= cfg.early_stop_accuracy) {
      result.early_stopped = true;
      break;
    }
  }
  result.best.history = result.history;
  return result;
}

MetricsReport evaluate(const Checkpoint& ckpt, const std::vector<Sample>& samples, FeatureExtractor& features,
                       const LabelSet& labels, const std::optional<ModalitySet>& modalities) {
  if (samples.empty()) throw Error(Errc::EmptyEvalSet, "no samples to evaluate");
  if (ckpt.class_names != labels.names()) {
    throw Error(Errc::IncompatibleCheckpoint, "checkpoint has " + std::to_string(ckpt.class_names.size()) +
                                                  " classes, evaluation uses " + std::to_string(labels.size()));
  }
  const auto cfg = ckpt.train_config();
  if (modalities && !(*modalities == cfg.modalities)) {
    throw Error(Errc::IncompatibleCheckpoint, "checkpoint modalities " + cfg.modalities.to_string() +
                                                  " differ from " + modalities->to_string());
  }
  const auto& fm = features.modalities();
  if ((cfg.modalities.acoustic && !fm.acoustic) || (cfg.modalities.word && !fm.word) ||
      (cfg.modalities.knowledge && !fm.knowledge)) {
    throw Error(Errc::IncompatibleCheckpoint, "features lack a modality the checkpoint needs");
  }
  auto model = ckpt.build_model();
  const auto pred = predict(*model, samples, features);
  auto report = compute_metrics(labels_of(samples), pred, static_cast<int>(labels.size()));
  report.class_names = labels.names();
  return report;
}

CrossValidationReport aggregate_folds(std::vector<FoldResult> folds) {
  CrossValidationReport r;
  r.folds = std::move(folds);
  if (r.folds.empty()) return r;
  for (const auto& f : r.folds) {
    r.mean_wa += f.report.weighted_accuracy;
    r.mean_ua += f.report.unweighted_accuracy;
    r.mean_accuracy += f.report.accuracy;
    r.mean_macro_f1 += f.report.macro_f1;
  }
  const double k = static_cast<double>(r.folds.size());
  r.mean_wa /= k;
  r.mean_ua /= k;
  r.mean_accuracy /= k;
  r.mean_macro_f1 /= k;
  return r;
}

ordered_json CrossValidationReport::to_json() const {
  ordered_json j;
  auto arr = ordered_json::array();
  for (const auto& f : folds) arr.push_back({{"val_session", f.val_session}, {"metrics", f.report.to_json()}});
  j["folds"] = arr;
  j["mean"] = {{"weighted_accuracy", mean_wa},
               {"unweighted_accuracy", mean_ua},
               {"accuracy", mean_accuracy},
               {"macro_f1", mean_macro_f1}};
  return j;
}

CrossValidationReport cross_validate(const TrainConfig& cfg, const std::vector<Sample>& samples, int k) {
  cfg.validate();
  const auto folds = make_session_folds(samples, k);
  FeatureExtractor features(cfg.providers, cfg.frontend, cfg.modalities);
  const auto names = cfg.labels().names();

  std::vector<FoldResult> results;
  for (const auto& fold : folds) {
    const auto pool = select_sessions(samples, fold.train_sessions);
    const auto held_out = select_sessions(samples, {fold.val_session});
    if (pool.size() < 2 || held_out.empty()) throw Error(Errc::TooFewSamples, "fold " + fold.val_session);

    const auto order = seeded_permutation(pool.size(), cfg.seed);
    const std::size_t n_inner = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(pool.size() * 0.1)));
    std::vector<Sample> inner_train;
    std::vector<Sample> inner_val;
    for (std::size_t i = 0; i < order.size(); ++i) (i < n_inner ? inner_val : inner_train).push_back(pool[order[i]]);

    auto run = train(cfg, inner_train, inner_val, features);
    auto model = run.best.build_model();
    const auto pred = predict(*model, held_out, features);
    auto report = compute_metrics(labels_of(held_out), pred, cfg.classes);
    report.class_names = names;
    results.push_back({fold.val_session, std::move(report)});
  }
  return aggregate_folds(std::move(results));
}

std::vector<AblationRow> ablate(const TrainConfig& cfg, const DatasetSplit& split,
                                const std::vector<ModalitySet>& subsets) {
  if (split.test.empty()) throw Error(Errc::EmptyEvalSet, "ablation needs a test split");
  const auto cache = cfg.providers.cache_dir.empty() ? ProviderCache::from_environment()
                                                     : std::make_shared<ProviderCache>(cfg.providers.cache_dir);
  std::vector<AblationRow> rows;
  for (const auto& subset : subsets) {
    TrainConfig c = cfg;
    c.modalities = subset;
    c.validate();
    FeatureExtractor features(c.providers, c.frontend, subset, cache);
    auto run = train(c, split.train, split.val, features);
    auto model = run.best.build_model();
    const auto pred = predict(*model, split.test, features);
    AblationRow row;
    row.modalities = subset;
    row.report = compute_metrics(labels_of(split.test), pred, c.classes);
    row.report.class_names = c.labels().names();
    row.sources_used = features.sources_used();
    rows.push_back(std::move(row));
  }
  return rows;
}

ordered_json ablation_to_json(const std::vector<AblationRow>& rows, int classes) {
  auto arr = ordered_json::array();
  for (const auto& r : rows) {
    arr.push_back({{"modalities", r.modalities.to_string()},
                   {"name", r.modalities.display_name()},
                   {"classes", classes},
                   {"sources", r.sources_used},
                   {"metrics", r.report.to_json()}});
  }
  return ordered_json{{"ablation", arr}};
}

}  // namespace vcemo
