#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "vcemo/audio.hpp"
#include "vcemo/contrastive.hpp"
#include "vcemo/data.hpp"
#include "vcemo/features.hpp"
#include "vcemo/fusion.hpp"
#include "vcemo/metrics.hpp"

namespace vcemo {

struct ContrastiveConfig {
  bool double_forward = true;
  bool use_queue = false;
  std::size_t queue_capacity = 16384;
  double momentum = 0.999;
  bool queue_positives = true;
  /// Second view comes from an augmented waveform instead of a second dropout pass.
  bool augment_views = false;
};

struct TrainConfig {
  std::string profile = "custom";
  double learning_rate = 1e-4;
  double weight_decay = 0.0;
  double alpha = 0.1;
  int batch_size = 256;
  int epochs = 50;
  double tau = 1.0;
  std::uint64_t seed = 0;
  int classes = 4;
  std::map<std::string, std::string> label_map;
  ModalitySet modalities;
  AugmentPolicy augment;
  ContrastiveConfig contrastive;
  ModelConfig model;
  FrontendConfig frontend;
  ProviderConfig providers;
  /// Stop once eval-mode accuracy on the training set reaches this (0 = off).
  double early_stop_accuracy = 0.0;
  /// Cap on optimizer steps (0 = no cap).
  int max_steps = 0;
  /// Per-step JSON-lines log; empty disables it.
  std::string log_path;

  static TrainConfig for_profile(const std::string& profile);
  /// Overlays the keys present in `j` on `base`.
  static TrainConfig from_json(const nlohmann::json& j, TrainConfig base);
  nlohmann::ordered_json to_json() const;

  void validate() const;
  /// Model configuration with the class count and modality set applied.
  ModelConfig model_config() const;
  LabelSet labels() const { return LabelSet::for_class_count(classes); }
};

/// Loads a JSON run config on top of the profile named in it (or `profile`
/// when given).
TrainConfig load_train_config(const std::filesystem::path& path, const std::string& profile = "");

/// Adam with L2 weight decay added to the gradient.
class Adam {
 public:
  struct State {
    std::int64_t step = 0;
    std::vector<Matrix> m;
    std::vector<Matrix> v;
  };

  explicit Adam(double lr, double weight_decay = 0.0, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);
  /// Parameters without a gradient are left untouched.
  void step(ParameterStore& store);
  State& state() { return state_; }
  const State& state() const { return state_; }

 private:
  double lr_, weight_decay_, beta1_, beta2_, eps_;
  State state_;
};

struct EpochRecord {
  int epoch = 0;
  int steps = 0;
  double train_loss = 0.0;
  double train_accuracy = -1.0;  // -1 when not measured
  double val_accuracy = -1.0;
  double val_macro_f1 = -1.0;
};

struct Checkpoint {
  static constexpr std::uint32_t kVersion = 1;

  std::string config_json;
  std::vector<std::string> class_names;
  int epoch = 0;
  std::vector<EpochRecord> history;
  std::vector<NamedBuffer> parameters;
  std::vector<NamedBuffer> buffers;
  Adam::State optimizer;

  std::string serialize() const;
  static Checkpoint deserialize(const std::string& bytes);
  void save(const std::filesystem::path& path) const;
  static Checkpoint load(const std::filesystem::path& path);

  TrainConfig train_config() const;
  /// Rebuilds the model and loads the stored weights.
  std::unique_ptr<EmotionModel> build_model() const;
};

Checkpoint make_checkpoint(const TrainConfig& cfg, const EmotionModel& model, const Adam& opt, int epoch,
                           const std::vector<EpochRecord>& history);
void load_weights(EmotionModel& model, const Checkpoint& ckpt);

struct StepLog {
  int step = 0;
  int epoch = 0;
  LossBreakdown loss;
  double batch_accuracy = 0.0;
};

struct TrainResult {
  Checkpoint best;
  std::vector<StepLog> steps;
  std::vector<EpochRecord> history;
  bool early_stopped = false;
};

/// Trains on `train`, selecting the epoch with the best accuracy on `val`
/// (the last epoch when `val` is empty).
TrainResult train(const TrainConfig& cfg, const std::vector<Sample>& train, const std::vector<Sample>& val,
                  FeatureExtractor& features);

/// Eval-mode predictions; ties go to the lowest class index.
std::vector<int> predict(EmotionModel& model, const std::vector<Sample>& samples, FeatureExtractor& features,
                         int batch_size = 64);
int argmax_lowest(const RowVector& logits);

/// Raises IncompatibleCheckpoint when the label set or modality set differs
/// from the checkpoint's.
MetricsReport evaluate(const Checkpoint& ckpt, const std::vector<Sample>& samples, FeatureExtractor& features,
                       const LabelSet& labels, const std::optional<ModalitySet>& modalities = std::nullopt);

struct FoldResult {
  std::string val_session;
  MetricsReport report;
};

struct CrossValidationReport {
  std::vector<FoldResult> folds;
  double mean_wa = 0.0;
  double mean_ua = 0.0;
  double mean_accuracy = 0.0;
  double mean_macro_f1 = 0.0;

  nlohmann::ordered_json to_json() const;
};

/// Unweighted means of the per-fold scores.
CrossValidationReport aggregate_folds(std::vector<FoldResult> folds);

/// One fresh model per session fold. Model selection uses a seeded 10% hold-out
/// of the training sessions; each held-out session is scored once.
CrossValidationReport cross_validate(const TrainConfig& cfg, const std::vector<Sample>& samples, int k = 5);

struct AblationRow {
  ModalitySet modalities;
  MetricsReport report;
  std::set<std::string> sources_used;
};

std::vector<AblationRow> ablate(const TrainConfig& cfg, const DatasetSplit& split,
                                const std::vector<ModalitySet>& subsets = default_ablation_subsets());
nlohmann::ordered_json ablation_to_json(const std::vector<AblationRow>& rows, int classes);

}  // namespace vcemo
