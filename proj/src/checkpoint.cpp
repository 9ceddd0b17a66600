#include <cstring>
#include <fstream>
#include <sstream>

#include "vcemo/error.hpp"
#include "vcemo/training.hpp"

namespace vcemo {

namespace {

constexpr char kMagic[8] = {'V', 'C', 'E', 'M', 'O', 'C', 'K', 'P'};

class Writer {
 public:
  template <typename T>
  void pod(T v) {
    char buf[sizeof(T)];
    std::memcpy(buf, &v, sizeof(T));
    out_.append(buf, sizeof(T));
  }
  void str(const std::string& s) {
    pod<std::uint64_t>(s.size());
    out_ += s;
  }
  void matrix(const Matrix& m) {
    pod<std::int64_t>(m.rows());
    pod<std::int64_t>(m.cols());
    out_.append(reinterpret_cast<const char*>(m.data()), sizeof(double) * static_cast<std::size_t>(m.size()));
  }
  void raw(const char* p, std::size_t n) { out_.append(p, n); }
  std::string take() { return std::move(out_); }

 private:
  std::string out_;
};

class Reader {
 public:
  explicit Reader(const std::string& in) : in_(in) {}

  template <typename T>
  T pod() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, in_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  std::string str() {
    const auto n = pod<std::uint64_t>();
    need(n);
    std::string s = in_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  Matrix matrix() {
    const auto rows = pod<std::int64_t>();
    const auto cols = pod<std::int64_t>();
    if (rows < 0 || cols < 0) throw Error(Errc::CorruptCheckpoint, "negative matrix shape");
    const auto bytes = sizeof(double) * static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols);
    need(bytes);
    Matrix m(rows, cols);
    std::memcpy(m.data(), in_.data() + pos_, bytes);
    pos_ += bytes;
    return m;
  }
  std::uint64_t count() {
    const auto n = pod<std::uint64_t>();
    if (n > in_.size()) throw Error(Errc::CorruptCheckpoint, "implausible element count");
    return n;
  }
  void need(std::size_t n) const {
    if (pos_ + n > in_.size()) throw Error(Errc::CorruptCheckpoint, "truncated checkpoint");
  }
  bool done() const { return pos_ == in_.size(); }
  std::size_t pos_ = 0;

 private:
  const std::string& in_;
};

}  // namespace

std::string Checkpoint::serialize() const {
  Writer w;
  w.raw(kMagic, sizeof kMagic);
  w.pod<std::uint32_t>(kVersion);
  w.str(config_json);
  w.pod<std::uint64_t>(class_names.size());
  for (const auto& n : class_names) w.str(n);
  w.pod<std::int32_t>(epoch);
  w.pod<std::uint64_t>(history.size());
  for (const auto& h : history) {
    w.pod<std::int32_t>(h.epoch);
    w.pod<std::int32_t>(h.steps);
    w.pod(h.train_loss);
    w.pod(h.train_accuracy);
    w.pod(h.val_accuracy);
    w.pod(h.val_macro_f1);
  }
  for (const auto* group : {&parameters, &buffers}) {
    w.pod<std::uint64_t>(group->size());
    for (const auto& p : *group) {
      w.str(p.name);
      w.matrix(p.value);
    }
  }
  w.pod<std::int64_t>(optimizer.step);
  for (const auto* moments : {&optimizer.m, &optimizer.v}) {
    w.pod<std::uint64_t>(moments->size());
    for (const auto& m : *moments) w.matrix(m);
  }
  return w.take();
}

Checkpoint Checkpoint::deserialize(const std::string& bytes) {
  if (bytes.size() < sizeof kMagic || std::memcmp(bytes.data(), kMagic, sizeof kMagic) != 0) {
    throw Error(Errc::CorruptCheckpoint, "not a checkpoint file");
  }
  Reader r(bytes);
  r.pos_ = sizeof kMagic;
  const auto version = r.pod<std::uint32_t>();
  if (version != kVersion) {
    throw Error(Errc::IncompatibleCheckpoint, "format version " + std::to_string(version) + ", expected " +
                                                  std::to_string(kVersion));
  }
  Checkpoint c;
  c.config_json = r.str();
  for (auto n = r.count(); n > 0; --n) c.class_names.push_back(r.str());
  c.epoch = r.pod<std::int32_t>();
  for (auto n = r.count(); n > 0; --n) {
    EpochRecord h;
    h.epoch = r.pod<std::int32_t>();
    h.steps = r.pod<std::int32_t>();
    h.train_loss = r.pod<double>();
    h.train_accuracy = r.pod<double>();
    h.val_accuracy = r.pod<double>();
    h.val_macro_f1 = r.pod<double>();
    c.history.push_back(h);
  }
  for (auto* group : {&c.parameters, &c.buffers}) {
    for (auto n = r.count(); n > 0; --n) {
      NamedBuffer p;
      p.name = r.str();
      p.value = r.matrix();
      group->push_back(std::move(p));
    }
  }
  c.optimizer.step = r.pod<std::int64_t>();
  for (auto* moments : {&c.optimizer.m, &c.optimizer.v}) {
    for (auto n = r.count(); n > 0; --n) moments->push_back(r.matrix());
  }
  if (!r.done()) throw Error(Errc::CorruptCheckpoint, "trailing bytes");
  return c;
}

void Checkpoint::save(const std::filesystem::path& path) const {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw Error(Errc::Io, "cannot write " + tmp);
    const auto bytes = serialize();
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error(Errc::Io, "write failed for " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint Checkpoint::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::MissingFile, path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return deserialize(ss.str());
}

TrainConfig Checkpoint::train_config() const {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(config_json);
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::CorruptCheckpoint, std::string("config snapshot: ") + e.what());
  }
  return TrainConfig::from_json(j, TrainConfig::for_profile(j.value("profile", "custom")));
}

std::unique_ptr<EmotionModel> Checkpoint::build_model() const {
  const auto cfg = train_config();
  auto model = std::make_unique<EmotionModel>(cfg.model_config(), cfg.seed);
  load_weights(*model, *this);
  return model;
}

Checkpoint make_checkpoint(const TrainConfig& cfg, const EmotionModel& model, const Adam& opt, int epoch,
                           const std::vector<EpochRecord>& history) {
  Checkpoint c;
  c.config_json = cfg.to_json().dump();
  c.class_names = cfg.labels().names();
  c.epoch = epoch;
  c.history = history;
  for (const auto& p : model.store().parameters()) c.parameters.push_back({p.name, p.var.value()});
  for (const auto& b : model.store().buffers()) c.buffers.push_back(b);
  c.optimizer = opt.state();
  return c;
}

void load_weights(EmotionModel& model, const Checkpoint& ckpt) {
  auto& params = model.store().parameters();
  auto& buffers = model.store().buffers();
  if (params.size() != ckpt.parameters.size() || buffers.size() != ckpt.buffers.size()) {
    throw Error(Errc::IncompatibleCheckpoint, "parameter count differs from the model");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& src = ckpt.parameters[i];
    auto& dst = params[i];
    if (src.name != dst.name || src.value.rows() != dst.var.rows() || src.value.cols() != dst.var.cols()) {
      throw Error(Errc::IncompatibleCheckpoint, "parameter " + src.name + " does not match " + dst.name);
    }
    dst.var.mutable_value() = src.value;
  }
  for (std::size_t i = 0; i < buffers.size(); ++i) {
    if (ckpt.buffers[i].name != buffers[i].name) {
      throw Error(Errc::IncompatibleCheckpoint, "buffer " + ckpt.buffers[i].name + " does not match");
    }
    buffers[i].value = ckpt.buffers[i].value;
  }
}

}  // namespace vcemo
