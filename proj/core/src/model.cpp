#include "dronekey/model.hpp"

#include <cstring>
#include <fstream>

namespace dronekey {

void ModelConfig::validate() const {
  if (resolution <= 0 || resolution % 16 != 0)
    throw ConfigError("resolution must be a positive multiple of 16 (backbone stride)");
  if (d <= 0 || n_heads <= 0 || d % n_heads != 0)
    throw ConfigError("token dimension must divide evenly into heads");
  if (n_layers <= 0) throw ConfigError("need at least one attention layer");
  if (n_classes < 2) throw ConfigError("need at least two classes");
  if (dff <= 0) throw ConfigError("feed-forward width must be positive");
  if (decoder_config < 1 || decoder_config > 4)
    throw ConfigError("decoder_config must be 1..4");
  if (!intrinsics.invertible()) throw ConfigError("intrinsics are singular");
}

bool ModelConfig::operator==(const ModelConfig& o) const {
  return resolution == o.resolution && d == o.d && n_layers == o.n_layers &&
         n_heads == o.n_heads && n_classes == o.n_classes && dff == o.dff &&
         decoder_config == o.decoder_config && encoder_enabled == o.encoder_enabled &&
         class_onehot == o.class_onehot && intrinsics.fx == o.intrinsics.fx &&
         intrinsics.fy == o.intrinsics.fy && intrinsics.cx == o.intrinsics.cx &&
         intrinsics.cy == o.intrinsics.cy;
}

Eigen::VectorXd softmax_vec(const Eigen::VectorXd& logits) {
  Eigen::VectorXd y = (logits.array() - logits.maxCoeff()).exp();
  return y / y.sum();
}

Eigen::VectorXd gate_weights(const Eigen::MatrixXd& w_g, const Eigen::VectorXd& x_ir) {
  return softmax_vec(w_g * x_ir);
}

Eigen::VectorXd classify(const Eigen::MatrixXd& w_cls, const Eigen::VectorXd& x_cls) {
  return softmax_vec(w_cls * x_cls);
}

Eigen::MatrixXd predict_keypoints(const Eigen::VectorXd& gate,
                                  const std::vector<Eigen::MatrixXd>& compact_reps) {
  if (compact_reps.empty() || gate.size() != static_cast<Eigen::Index>(compact_reps.size()))
    throw ShapeError("gate length must match the number of layer representations");
  Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(compact_reps[0].rows(), compact_reps[0].cols());
  for (std::size_t l = 0; l < compact_reps.size(); ++l)
    acc += gate[static_cast<Eigen::Index>(l)] * compact_reps[l];
  return acc.cwiseMax(0.0);
}

namespace {

constexpr char kMagic[4] = {'D', 'K', 'C', 'K'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void put(std::ofstream& f, const T& v) {
  f.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::ifstream& f, const std::string& path) {
  T v{};
  f.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!f) throw LoadError("truncated checkpoint: " + path);
  return v;
}

}  // namespace

void save_checkpoint_data(const std::string& path, const CheckpointData& data) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw LoadError("cannot open for writing: " + path);
  f.write(kMagic, 4);
  put(f, kVersion);
  const ModelConfig& c = data.config;
  const std::int32_t ints[9] = {c.resolution, c.d,   c.n_layers,
                                c.n_heads,    c.n_classes, c.dff,
                                c.decoder_config, c.encoder_enabled ? 1 : 0,
                                c.class_onehot ? 1 : 0};
  f.write(reinterpret_cast<const char*>(ints), sizeof(ints));
  const double intr[4] = {c.intrinsics.fx, c.intrinsics.fy, c.intrinsics.cx, c.intrinsics.cy};
  f.write(reinterpret_cast<const char*>(intr), sizeof(intr));
  put(f, c.init_seed);
  put(f, static_cast<std::uint32_t>(data.params.size()));
  for (const auto& p : data.params) {
    put(f, static_cast<std::uint32_t>(p.name.size()));
    f.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
    put(f, static_cast<std::uint32_t>(p.value.rows()));
    put(f, static_cast<std::uint32_t>(p.value.cols()));
    f.write(reinterpret_cast<const char*>(p.value.data()),
            static_cast<std::streamsize>(sizeof(float) * p.value.size()));
  }
  if (!f) throw LoadError("write failed: " + path);
}

CheckpointData load_checkpoint_data(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw LoadError("cannot open: " + path);
  char magic[4];
  f.read(magic, 4);
  if (!f || std::memcmp(magic, kMagic, 4) != 0)
    throw LoadError("not a checkpoint file: " + path);
  const auto version = get<std::uint32_t>(f, path);
  if (version != kVersion)
    throw LoadError("unsupported checkpoint version " + std::to_string(version) + ": " + path);
  CheckpointData data;
  std::int32_t ints[9];
  f.read(reinterpret_cast<char*>(ints), sizeof(ints));
  if (!f) throw LoadError("truncated checkpoint: " + path);
  ModelConfig& c = data.config;
  c.resolution = ints[0];
  c.d = ints[1];
  c.n_layers = ints[2];
  c.n_heads = ints[3];
  c.n_classes = ints[4];
  c.dff = ints[5];
  c.decoder_config = ints[6];
  c.encoder_enabled = ints[7] != 0;
  c.class_onehot = ints[8] != 0;
  double intr[4];
  f.read(reinterpret_cast<char*>(intr), sizeof(intr));
  if (!f) throw LoadError("truncated checkpoint: " + path);
  c.intrinsics = {intr[0], intr[1], intr[2], intr[3]};
  c.init_seed = get<std::uint64_t>(f, path);
  const auto n = get<std::uint32_t>(f, path);
  for (std::uint32_t i = 0; i < n; ++i) {
    const auto name_len = get<std::uint32_t>(f, path);
    std::string name(name_len, '\0');
    f.read(name.data(), name_len);
    const auto rows = get<std::uint32_t>(f, path);
    const auto cols = get<std::uint32_t>(f, path);
    Eigen::MatrixXf m(rows, cols);
    f.read(reinterpret_cast<char*>(m.data()),
           static_cast<std::streamsize>(sizeof(float) * m.size()));
    if (!f) throw LoadError("truncated checkpoint: " + path);
    data.params.push_back({std::move(name), std::move(m)});
  }
  return data;
}

}  // namespace dronekey
