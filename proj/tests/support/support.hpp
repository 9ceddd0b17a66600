#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "vcemo/autograd.hpp"
#include "vcemo/data.hpp"
#include "vcemo/metrics.hpp"
#include "vcemo/training.hpp"

namespace testsupport {

using vcemo::Index;
using vcemo::Matrix;

std::filesystem::path temp_dir(const std::string& tag);

std::vector<double> tone(double freq_hz, double duration_s, int sample_rate = 16000, double amplitude = 0.5);

struct SyntheticOptions {
  int samples = 64;
  int classes = 4;
  int sessions = 5;
  double duration_s = 0.5;
  std::uint64_t seed = 1;
  bool with_text = true;
};

struct SyntheticCorpus {
  std::filesystem::path manifest;
  std::vector<vcemo::Sample> samples;
};

/// Writes class-dependent tones plus class-keyed transcripts and a manifest.
SyntheticCorpus make_synthetic_corpus(const std::filesystem::path& dir, const SyntheticOptions& opt = {});

/// A small custom-profile model sized for CPU tests: two narrow conv
/// blocks, d_model 16, one attention layer, 40 mel bins, no augmentation.
vcemo::TrainConfig small_train_config();

/// Frequency of the largest Hann-windowed DFT magnitude in [lo, hi] Hz,
/// scanned on a 1 Hz grid by direct summation and refined parabolically.
double dominant_frequency(std::span<const double> x, int sample_rate, double lo = 50.0, double hi = 4000.0);

/// Per-anchor, per-positive enumeration of the supervised contrastive loss.
/// Queue rows join every anchor's contrast set; they count as positives when
/// `queue_positives` is set.
double supcon_enumerate(const Matrix& z, const std::vector<int>& labels, double tau, const Matrix& queue,
                        const std::vector<int>& queue_labels, bool queue_positives = true);

/// Metrics from pairwise counting, no confusion matrix.
struct BruteMetrics {
  double accuracy = 0.0;
  double macro_f1 = 0.0;
  double unweighted_accuracy = 0.0;
  std::vector<double> precision, recall, f1;
};
BruteMetrics brute_force_metrics(const std::vector<int>& truth, const std::vector<int>& pred, int classes);

struct GradCheckResult {
  int checked = 0;
  int passed = 0;
  double worst = 0.0;
  double pass_fraction() const { return checked ? static_cast<double>(passed) / checked : 0.0; }
};

/// Compares backward() against central differences of `loss` on up to
/// `per_tensor` random coordinates of each tensor. A coordinate passes when
/// |a - n| <= tol * max(|a|, |n|) or both are below `floor`.
GradCheckResult check_gradients(const std::function<vcemo::ag::Var()>& loss, std::vector<vcemo::ag::Var> tensors,
                                int per_tensor, std::mt19937_64& rng, double step = 1e-5, double tol = 1e-3,
                                double floor = 1e-8);

Matrix random_matrix(Index rows, Index cols, std::mt19937_64& rng, double scale = 1.0);
Matrix random_unit_rows(Index rows, Index cols, std::mt19937_64& rng);
/// Scales the whole matrix to unit Frobenius norm.
Matrix unit_norm(Matrix m);

/// Projects a scalar loss from an output: sum(output .* weights) with fixed
/// random weights, so every output coordinate influences the check.
vcemo::ag::Var weighted_sum(const vcemo::ag::Var& out, const Matrix& weights);

}  // namespace testsupport
