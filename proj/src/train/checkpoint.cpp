#include "lorekt/train/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "lorekt/common/error.hpp"
#include "lorekt/common/hashing.hpp"

namespace lorekt::train {

namespace {

constexpr char kMagic[4] = {'L', 'R', 'K', 'T'};
constexpr std::size_t kPrefix = 4 + 4 + 8;
constexpr std::size_t kDigest = 32;

template <typename U>
void put_le(std::vector<std::uint8_t>& out, U value) {
  for (std::size_t i = 0; i < sizeof(U); ++i) out.push_back(static_cast<std::uint8_t>(value >> (8 * i)));
}

template <typename U>
U get_le(const std::uint8_t* p) {
  U value = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) value |= static_cast<U>(p[i]) << (8 * i);
  return value;
}

nlohmann::json spec_json(const data::DatasetSpec& s) {
  return {{"name", s.name}, {"dataset_index", s.dataset_index}, {"path", s.path}};
}

}  // namespace

nlohmann::json TrainingMetadata::to_json() const {
  return {{"stage", stage}, {"epoch", epoch}, {"best_val_auc", best_val_auc}, {"seed", seed}, {"steps", steps}};
}

TrainingMetadata TrainingMetadata::from_json(const nlohmann::json& j) {
  TrainingMetadata m;
  m.stage = j.at("stage").get<std::string>();
  m.epoch = j.at("epoch").get<std::size_t>();
  m.best_val_auc = j.at("best_val_auc").get<double>();
  m.seed = j.at("seed").get<std::uint64_t>();
  m.steps = j.at("steps").get<std::size_t>();
  return m;
}

template <typename T>
Checkpoint Checkpoint::from_model(const model::LoReKTModel<T>& model, std::vector<data::DatasetSpec> datasets,
                                  TrainingMetadata metadata) {
  Checkpoint c;
  c.config = model.config();
  c.vocab = model.vocab();
  c.datasets = std::move(datasets);
  c.metadata = std::move(metadata);
  for (const auto& p : model.parameters()) {
    NamedArray a{p.name, p.value.shape(), {}};
    a.values.reserve(p.value.size());
    for (std::size_t k = 0; k < p.value.size(); ++k) a.values.push_back(static_cast<float>(p.value[k]));
    c.parameters.push_back(std::move(a));
  }
  return c;
}

template <typename T>
model::LoReKTModel<T> Checkpoint::to_model() const {
  auto m = model::LoReKTModel<T>::build(config, vocab, 0);
  auto& params = m.parameters();
  if (params.size() != parameters.size()) {
    throw CheckpointError("checkpoint has " + std::to_string(parameters.size()) + " parameters, model layout has " +
                          std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& src = parameters[i];
    if (src.name != params[i].name || src.shape != params[i].value.shape()) {
      throw CheckpointError("checkpoint parameter " + std::to_string(i) + " (" + src.name + " " +
                            ag::to_string(src.shape) + ") does not match model (" + params[i].name + " " +
                            ag::to_string(params[i].value.shape()) + ")");
    }
    for (std::size_t k = 0; k < src.values.size(); ++k) params[i].value[k] = static_cast<T>(src.values[k]);
  }
  return m;
}

std::vector<std::uint8_t> serialize(const Checkpoint& c) {
  nlohmann::json manifest = nlohmann::json::array();
  std::size_t offset = 0;
  for (const auto& p : c.parameters) {
    if (p.values.size() != ag::numel(p.shape)) throw ShapeError("checkpoint parameter " + p.name + " has wrong size");
    manifest.push_back({{"name", p.name}, {"shape", p.shape}, {"offset", offset}});
    offset += p.values.size();
  }
  nlohmann::json datasets = nlohmann::json::array();
  for (const auto& s : c.datasets) datasets.push_back(spec_json(s));
  const nlohmann::json header = {{"config", c.config.to_json()},
                                 {"vocab", c.vocab.to_json()},
                                 {"datasets", datasets},
                                 {"metadata", c.metadata.to_json()},
                                 {"manifest", manifest},
                                 {"payload_floats", offset}};
  const std::string text = header.dump();

  std::vector<std::uint8_t> out;
  out.reserve(kPrefix + text.size() + 4 * offset + kDigest);
  out.insert(out.end(), kMagic, kMagic + 4);
  put_le<std::uint32_t>(out, Checkpoint::kVersion);
  put_le<std::uint64_t>(out, text.size());
  out.insert(out.end(), text.begin(), text.end());
  for (const auto& p : c.parameters) {
    for (float v : p.values) put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(v));
  }
  const Digest d = sha256(std::span<const std::uint8_t>(out));
  out.insert(out.end(), d.begin(), d.end());
  return out;
}

Checkpoint deserialize(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4) throw TruncatedFileError("checkpoint is truncated: " + std::to_string(bytes.size()) + " bytes");
  if (std::memcmp(bytes.data(), kMagic, 4) != 0) throw BadMagicError("not a checkpoint file: bad magic");
  if (bytes.size() < kPrefix) throw TruncatedFileError("checkpoint is truncated inside the fixed header");
  const auto version = get_le<std::uint32_t>(bytes.data() + 4);
  if (version != Checkpoint::kVersion) throw VersionMismatchError(version, Checkpoint::kVersion);
  const auto header_len = get_le<std::uint64_t>(bytes.data() + 8);
  if (header_len > bytes.size() - kPrefix) throw TruncatedFileError("checkpoint is truncated inside the JSON header");

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.begin() + kPrefix, bytes.begin() + kPrefix + static_cast<std::ptrdiff_t>(header_len));
  } catch (const nlohmann::json::exception& e) {
    throw DigestMismatchError(std::string("checkpoint header is corrupted: ") + e.what());
  }

  Checkpoint c;
  std::size_t n_floats = 0;
  try {
    n_floats = header.at("payload_floats").get<std::size_t>();
    const std::size_t expected = kPrefix + header_len + 4 * n_floats + kDigest;
    if (bytes.size() < expected) {
      throw TruncatedFileError("checkpoint is truncated: " + std::to_string(bytes.size()) + " of " +
                               std::to_string(expected) + " bytes");
    }
    if (bytes.size() > expected) throw CheckpointError("checkpoint has trailing bytes");
    const std::size_t body = expected - kDigest;
    const Digest d = sha256(bytes.first(body));
    if (!std::equal(d.begin(), d.end(), bytes.begin() + static_cast<std::ptrdiff_t>(body))) {
      throw DigestMismatchError("checkpoint digest mismatch: file is corrupted");
    }

    c.config = model::ModelConfig::from_json(header.at("config"));
    c.vocab = data::GlobalVocab::from_json(header.at("vocab"));
    for (const auto& s : header.at("datasets")) {
      c.datasets.push_back({s.at("name").get<std::string>(), s.at("dataset_index").get<std::uint32_t>(),
                            s.at("path").get<std::string>()});
    }
    c.metadata = TrainingMetadata::from_json(header.at("metadata"));
    const std::uint8_t* payload = bytes.data() + kPrefix + header_len;
    for (const auto& m : header.at("manifest")) {
      NamedArray a{m.at("name").get<std::string>(), m.at("shape").get<ag::Shape>(), {}};
      const std::size_t off = m.at("offset").get<std::size_t>();
      const std::size_t n = ag::numel(a.shape);
      if (off + n > n_floats) throw CheckpointError("checkpoint manifest entry " + a.name + " exceeds the payload");
      a.values.resize(n);
      for (std::size_t k = 0; k < n; ++k) a.values[k] = std::bit_cast<float>(get_le<std::uint32_t>(payload + 4 * (off + k)));
      c.parameters.push_back(std::move(a));
    }
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("checkpoint header is malformed: ") + e.what());
  }
  return c;
}

void save(const Checkpoint& checkpoint, const std::filesystem::path& path) {
  const auto bytes = serialize(checkpoint);
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write checkpoint " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("failed writing checkpoint " + path.string());
}

Checkpoint load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize(bytes);
}

template Checkpoint Checkpoint::from_model(const model::LoReKTModel<float>&, std::vector<data::DatasetSpec>,
                                           TrainingMetadata);
template Checkpoint Checkpoint::from_model(const model::LoReKTModel<double>&, std::vector<data::DatasetSpec>,
                                           TrainingMetadata);
template model::LoReKTModel<float> Checkpoint::to_model() const;
template model::LoReKTModel<double> Checkpoint::to_model() const;

}  // namespace lorekt::train
