#include "support.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include <unistd.h>

#include "vcemo/audio.hpp"

namespace testsupport {

namespace fs = std::filesystem;
namespace ag = vcemo::ag;

fs::path temp_dir(const std::string& tag) {
  const auto dir = fs::temp_directory_path() / ("vcemo_test_" + tag + "_" + std::to_string(::getpid()));
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::vector<double> tone(double freq_hz, double duration_s, int sample_rate, double amplitude) {
  const auto n = static_cast<std::size_t>(std::llround(duration_s * sample_rate));
  std::vector<double> x(n);
  for (std::size_t i = 0; i < n; ++i) x[i] = amplitude * std::sin(2.0 * M_PI * freq_hz * static_cast<double>(i) / sample_rate);
  return x;
}

SyntheticCorpus make_synthetic_corpus(const fs::path& dir, const SyntheticOptions& opt) {
  static const char* kClassWords[] = {"storm", "sunny", "calm", "rain", "shadow", "spark"};
  static const char* kFiller[] = {"the", "day", "was", "really", "quite", "today"};
  const auto labels = vcemo::LabelSet::for_class_count(opt.classes);
  std::mt19937_64 rng(opt.seed);
  std::normal_distribution<double> noise(0.0, 0.01);
  std::uniform_real_distribution<double> jitter(-15.0, 15.0);
  std::uniform_int_distribution<int> filler(0, 5);

  fs::create_directories(dir / "audio");
  SyntheticCorpus corpus;
  corpus.manifest = dir / "manifest.jsonl";
  for (int i = 0; i < opt.samples; ++i) {
    const int c = i % opt.classes;
    vcemo::Waveform w;
    w.samples = tone(250.0 * (c + 1) + jitter(rng), opt.duration_s, 16000, 0.4);
    for (auto& v : w.samples) v += noise(rng);
    char name[32];
    std::snprintf(name, sizeof name, "utt%04d.wav", i);
    const auto path = dir / "audio" / name;
    vcemo::write_wav(path, w);

    vcemo::Sample s;
    s.id = std::string("utt") + std::to_string(i);
    s.audio_ref = path;
    if (opt.with_text) {
      s.transcript = std::string(kFiller[filler(rng)]) + " " + kClassWords[c] + " " + kFiller[filler(rng)] + " " +
                     kClassWords[c];
    }
    s.label = labels.name(c);
    s.label_index = c;
    const int session = i % opt.sessions + 1;
    s.session_id = "Ses0" + std::to_string(session);
    s.speaker_id = s.session_id + ((i / opt.sessions) % 2 ? "_F" : "_M");
    s.duration_s = w.duration_s();
    corpus.samples.push_back(s);
  }
  vcemo::write_manifest(corpus.manifest, corpus.samples);
  return corpus;
}

vcemo::TrainConfig small_train_config() {
  auto cfg = vcemo::TrainConfig::from_json(
      nlohmann::json::parse(R"({
        "learning_rate": 0.001, "alpha": 0.1, "batch_size": 16, "epochs": 5, "seed": 7,
        "model": {"d_model": 16, "conv_channels": [4, 8], "n_layers": 1, "projection_dim": 128},
        "frontend": {"mel_bins": 40}
      })"),
      vcemo::TrainConfig::for_profile("custom"));
  return cfg;
}

double dominant_frequency(std::span<const double> x, int sample_rate, double lo, double hi) {
  const std::size_t n = x.size();
  std::vector<double> win(n);
  for (std::size_t i = 0; i < n; ++i) win[i] = x[i] * (0.5 - 0.5 * std::cos(2.0 * M_PI * i / (n - 1)));
  auto magnitude = [&](double f) {
    double re = 0.0, im = 0.0;
    const double w = 2.0 * M_PI * f / sample_rate;
    for (std::size_t i = 0; i < n; ++i) {
      re += win[i] * std::cos(w * i);
      im -= win[i] * std::sin(w * i);
    }
    return std::hypot(re, im);
  };
  double best_f = lo;
  double best = -1.0;
  for (double f = lo; f <= hi; f += 1.0) {
    const double m = magnitude(f);
    if (m > best) {
      best = m;
      best_f = f;
    }
  }
  const double a = magnitude(best_f - 1.0), b = best, c = magnitude(best_f + 1.0);
  const double denom = a - 2.0 * b + c;
  return denom != 0.0 ? best_f + 0.5 * (a - c) / denom : best_f;
}

double supcon_enumerate(const Matrix& z, const std::vector<int>& labels, double tau, const Matrix& queue,
                        const std::vector<int>& queue_labels, bool queue_positives) {
  const Index n = z.rows();
  double total = 0.0;
  int anchors = 0;
  for (Index i = 0; i < n; ++i) {
    // Contrast set A(i): every other batch row, then every queue row.
    std::vector<Eigen::RowVectorXd> contrast;
    std::vector<bool> positive;
    for (Index a = 0; a < n; ++a) {
      if (a == i) continue;
      contrast.push_back(z.row(a));
      positive.push_back(labels[a] == labels[i]);
    }
    for (Index a = 0; a < queue.rows(); ++a) {
      contrast.push_back(queue.row(a));
      positive.push_back(queue_positives && queue_labels[a] == labels[i]);
    }
    double denom = 0.0;
    for (const auto& za : contrast) denom += std::exp(z.row(i).dot(za) / tau);
    int count = 0;
    double inner = 0.0;
    for (std::size_t p = 0; p < contrast.size(); ++p) {
      if (!positive[p]) continue;
      inner += std::log(std::exp(z.row(i).dot(contrast[p]) / tau) / denom);
      ++count;
    }
    if (count == 0) continue;
    total += -inner / count;
    ++anchors;
  }
  return anchors ? total / anchors : std::nan("");
}

BruteMetrics brute_force_metrics(const std::vector<int>& truth, const std::vector<int>& pred, int classes) {
  BruteMetrics m;
  long correct = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) correct += truth[i] == pred[i];
  m.accuracy = static_cast<double>(correct) / truth.size();
  int present = 0;
  double f1_sum = 0.0, recall_sum = 0.0;
  for (int c = 0; c < classes; ++c) {
    long tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
      if (truth[i] == c && pred[i] == c) ++tp;
      if (truth[i] != c && pred[i] == c) ++fp;
      if (truth[i] == c && pred[i] != c) ++fn;
    }
    const double p = tp + fp ? static_cast<double>(tp) / (tp + fp) : 0.0;
    const double r = tp + fn ? static_cast<double>(tp) / (tp + fn) : 0.0;
    const double f = p + r > 0 ? 2 * p * r / (p + r) : 0.0;
    m.precision.push_back(p);
    m.recall.push_back(r);
    m.f1.push_back(f);
    if (tp + fn > 0) {
      ++present;
      f1_sum += f;
      recall_sum += r;
    }
  }
  m.macro_f1 = f1_sum / present;
  m.unweighted_accuracy = recall_sum / present;
  return m;
}

GradCheckResult check_gradients(const std::function<ag::Var()>& loss, std::vector<ag::Var> tensors, int per_tensor,
                                std::mt19937_64& rng, double step, double tol, double floor) {
  for (auto& t : tensors) t.zero_grad();
  ag::backward(loss());
  std::vector<Matrix> analytic;
  for (auto& t : tensors) analytic.push_back(t.has_grad() ? t.grad() : Matrix::Zero(t.rows(), t.cols()));

  GradCheckResult r;
  ag::NoGradGuard no_grad;
  for (std::size_t k = 0; k < tensors.size(); ++k) {
    auto& t = tensors[k];
    std::vector<Index> coords(static_cast<std::size_t>(t.value().size()));
    std::iota(coords.begin(), coords.end(), 0);
    std::shuffle(coords.begin(), coords.end(), rng);
    coords.resize(std::min<std::size_t>(coords.size(), static_cast<std::size_t>(per_tensor)));
    for (Index c : coords) {
      double& v = t.mutable_value().data()[c];
      const double orig = v;
      v = orig + step;
      const double up = loss().scalar();
      v = orig - step;
      const double down = loss().scalar();
      v = orig;
      const double numeric = (up - down) / (2.0 * step);
      const double a = analytic[k].data()[c];
      const double scale = std::max(std::abs(a), std::abs(numeric));
      const double err = scale < floor ? 0.0 : std::abs(a - numeric) / scale;
      ++r.checked;
      if (err <= tol) ++r.passed;
      r.worst = std::max(r.worst, err);
    }
  }
  return r;
}

Matrix random_matrix(Index rows, Index cols, std::mt19937_64& rng, double scale) {
  std::normal_distribution<double> n(0.0, scale);
  Matrix m(rows, cols);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
  return m;
}

Matrix random_unit_rows(Index rows, Index cols, std::mt19937_64& rng) {
  Matrix m = random_matrix(rows, cols, rng);
  m.rowwise().normalize();
  return m;
}

Matrix unit_norm(Matrix m) {
  m /= m.norm();
  return m;
}

ag::Var weighted_sum(const ag::Var& out, const Matrix& weights) {
  return ag::sum(ag::hadamard(out, ag::constant(weights)));
}

}  // namespace testsupport
