// SPDX-License-Identifier: Apache-2.0
#include "tcnn/persistence.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <tuple>

#include "tcnn/error.hpp"

namespace tcnn {

static_assert(std::endian::native == std::endian::little, "container I/O assumes a little-endian host");
static_assert(sizeof(double) == 8);

namespace {

using Kind = ModelFormatError::Kind;

template <typename T>
void put_le(std::vector<std::uint8_t>& out, T v) {
  for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

template <typename T>
T get_le(const std::uint8_t* p) {
  T v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(p[i]) << (8 * i);
  return v;
}

std::size_t product(const std::vector<std::size_t>& dims) {
  std::size_t n = 1;
  for (auto d : dims) n *= d;
  return n;
}

}  // namespace

void ModelBundle::validate() const {
  const auto& cfg = params.config;
  auto fail = [](const std::string& m) { throw ModelFormatError(Kind::inconsistent_bundle, m); };
  try {
    cfg.validate();
  } catch (const ConfigError& e) {
    fail(std::string("invalid model config: ") + e.what());
  }
  if (params.embedding.rows != vocab.size()) fail("embedding rows differ from vocabulary size");
  if (params.embedding.cols != cfg.embedding_dim) fail("embedding width differs from embedding_dim");
  if (params.fc_weight.cols != labels.size() || cfg.num_classes != labels.size()) {
    fail("fc columns differ from label count");
  }
  if (params.fc_weight.rows != cfg.feature_dim() || params.fc_bias.size() != cfg.num_classes) fail("fc shape mismatch");
  if (params.conv.size() != cfg.kernel_heights.size()) fail("conv bank count differs from kernel_heights");
  for (std::size_t b = 0; b < params.conv.size(); ++b) {
    const auto& bank = params.conv[b];
    if (bank.height != cfg.kernel_heights[b] || bank.weight.rows != cfg.kernels_per_height ||
        bank.weight.cols != bank.height * cfg.embedding_dim || bank.bias.size() != cfg.kernels_per_height) {
      fail("conv bank " + std::to_string(b) + " shape mismatch");
    }
  }
  if (train_config.model != cfg) fail("train_config.model differs from the parameter config");
  if (vocab.min_count() != train_config.min_count) fail("vocabulary min_count differs from train_config");
}

nlohmann::json to_json(const ModelConfig& c) {
  return {{"embedding_dim", c.embedding_dim},
          {"seq_len", c.seq_len},
          {"kernel_heights", c.kernel_heights},
          {"kernels_per_height", c.kernels_per_height},
          {"num_classes", c.num_classes},
          {"conv_stride", c.conv_stride}};
}

nlohmann::json to_json(const TrainConfig& c) {
  auto j = to_json(c.model);
  j["learning_rate"] = c.learning_rate;
  j["momentum"] = c.momentum;
  j["l2_coeff"] = c.l2_coeff;
  j["dropout_rate"] = c.dropout_rate;
  j["batch_size"] = c.batch_size;
  j["epochs"] = c.epochs;
  j["seed"] = c.seed;
  j["min_count"] = c.min_count;
  j["max_norm_clamp"] = c.max_norm_clamp;
  j["max_norm"] = c.max_norm;
  return j;
}

TrainConfig train_config_from_json(const nlohmann::json& j, const TrainConfig& base, bool strict) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  TrainConfig c = base;
  for (const auto& [key, v] : j.items()) {
    try {
      if (key == "embedding_dim") c.model.embedding_dim = v.get<std::size_t>();
      else if (key == "seq_len") c.model.seq_len = v.get<std::size_t>();
      else if (key == "kernel_heights") c.model.kernel_heights = v.get<std::vector<std::size_t>>();
      else if (key == "kernels_per_height") c.model.kernels_per_height = v.get<std::size_t>();
      else if (key == "num_classes") c.model.num_classes = v.get<std::size_t>();
      else if (key == "conv_stride") c.model.conv_stride = v.get<std::size_t>();
      else if (key == "learning_rate") c.learning_rate = v.get<double>();
      else if (key == "momentum") c.momentum = v.get<double>();
      else if (key == "l2_coeff") c.l2_coeff = v.get<double>();
      else if (key == "dropout_rate") c.dropout_rate = v.get<double>();
      else if (key == "batch_size") c.batch_size = v.get<std::size_t>();
      else if (key == "epochs") c.epochs = v.get<std::size_t>();
      else if (key == "seed") c.seed = v.get<std::uint64_t>();
      else if (key == "min_count") c.min_count = v.get<std::size_t>();
      else if (key == "max_norm_clamp") c.max_norm_clamp = v.get<bool>();
      else if (key == "max_norm") c.max_norm = v.get<double>();
      else if (strict) throw ConfigError("unknown config key '" + key + "'");
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError("bad value for '" + key + "': " + e.what());
    }
  }
  return c;
}

std::vector<std::uint8_t> serialize(const ModelBundle& bundle) {
  bundle.validate();
  nlohmann::json manifest;
  manifest["train_config"] = to_json(bundle.train_config);
  manifest["labels"] = bundle.labels.labels();
  manifest["vocabulary"] = bundle.vocab.tokens();

  const auto ts = tensors(bundle.params);
  auto dir = nlohmann::json::array();
  std::size_t offset = 0;
  for (const auto& t : ts) {
    const std::size_t len = t.values.size() * sizeof(double);
    dir.push_back({{"name", t.name}, {"dims", t.dims}, {"byte_offset", offset}, {"byte_length", len}});
    offset += len;
  }
  manifest["tensors"] = std::move(dir);
  const std::string text = manifest.dump();

  std::vector<std::uint8_t> out;
  out.reserve(16 + text.size() + offset);
  out.insert(out.end(), std::begin(kModelMagic), std::end(kModelMagic));
  put_le<std::uint32_t>(out, kModelFormatVersion);
  put_le<std::uint64_t>(out, text.size());
  out.insert(out.end(), text.begin(), text.end());
  for (const auto& t : ts) {
    for (double v : t.values) put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(v));
  }
  return out;
}

ModelBundle deserialize(const std::vector<std::uint8_t>& bytes) {
  constexpr std::size_t kHeader = 4 + 4 + 8;
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kModelMagic, 4) != 0) {
    throw ModelFormatError(Kind::not_model_file, "not a model file");
  }
  if (bytes.size() < kHeader) {
    throw ModelFormatError(Kind::truncated, "truncated header: expected " + std::to_string(kHeader) +
                                                " bytes, got " + std::to_string(bytes.size()));
  }
  const auto version = get_le<std::uint32_t>(bytes.data() + 4);
  if (version != kModelFormatVersion) {
    throw ModelFormatError(Kind::unsupported_version, "unsupported model format version " + std::to_string(version));
  }
  const auto manifest_len = get_le<std::uint64_t>(bytes.data() + 8);
  if (manifest_len > bytes.size() - kHeader) {
    throw ModelFormatError(Kind::truncated, "truncated manifest: expected " + std::to_string(manifest_len) +
                                                " bytes, got " + std::to_string(bytes.size() - kHeader));
  }
  const std::size_t payload_start = kHeader + manifest_len;
  const std::size_t payload_size = bytes.size() - payload_start;

  auto mismatch = [](const std::string& m) { throw ModelFormatError(Kind::manifest_mismatch, m); };

  ModelBundle bundle;
  std::vector<std::tuple<std::string, std::vector<std::size_t>, std::size_t, std::size_t>> dir;
  try {
    const auto manifest = nlohmann::json::parse(bytes.begin() + kHeader, bytes.begin() + static_cast<std::ptrdiff_t>(payload_start));
    bundle.train_config = train_config_from_json(manifest.at("train_config"), TrainConfig{}, true);
    bundle.labels = LabelMap::from_ordered(manifest.at("labels").get<std::vector<std::string>>());
    bundle.vocab = Vocabulary::from_tokens(manifest.at("vocabulary").get<std::vector<std::string>>(),
                                           bundle.train_config.min_count);
    for (const auto& e : manifest.at("tensors")) {
      dir.emplace_back(e.at("name").get<std::string>(), e.at("dims").get<std::vector<std::size_t>>(),
                       e.at("byte_offset").get<std::size_t>(), e.at("byte_length").get<std::size_t>());
    }
  } catch (const nlohmann::json::exception& e) {
    mismatch(std::string("bad manifest: ") + e.what());
  } catch (const DataError& e) {
    mismatch(std::string("bad manifest: ") + e.what());
  } catch (const ConfigError& e) {
    mismatch(std::string("bad manifest: ") + e.what());
  }

  std::size_t needed = 0;
  for (const auto& [name, dims, off, len] : dir) {
    if (len != product(dims) * sizeof(double)) {
      mismatch("tensor " + name + ": byte_length " + std::to_string(len) + " disagrees with dims");
    }
    needed = std::max(needed, off + len);
  }
  if (needed > payload_size) {
    throw ModelFormatError(Kind::truncated, "truncated payload: expected " + std::to_string(needed) +
                                                " bytes, got " + std::to_string(payload_size));
  }

  try {
    bundle.train_config.model.validate();
  } catch (const ConfigError& e) {
    mismatch(std::string("bad model config: ") + e.what());
  }
  // Allocate from the config, then check every directory entry against it.
  {
    const auto& cfg = bundle.train_config.model;
    ModelParams& p = bundle.params;
    p.config = cfg;
    p.embedding = Matrix(bundle.vocab.size(), cfg.embedding_dim);
    for (auto h : cfg.kernel_heights) {
      p.conv.push_back({h, Matrix(cfg.kernels_per_height, h * cfg.embedding_dim),
                        std::vector<double>(cfg.kernels_per_height)});
    }
    p.fc_weight = Matrix(cfg.feature_dim(), cfg.num_classes);
    p.fc_bias.assign(cfg.num_classes, 0.0);
  }
  auto ts = tensors(bundle.params);
  if (ts.size() != dir.size()) mismatch("tensor directory lists " + std::to_string(dir.size()) + " tensors, expected " +
                                        std::to_string(ts.size()));
  const std::uint8_t* payload = bytes.data() + payload_start;
  for (std::size_t i = 0; i < ts.size(); ++i) {
    const auto& [name, dims, off, len] = dir[i];
    if (name != ts[i].name || dims != ts[i].dims) mismatch("tensor " + name + " does not match the model config");
    for (std::size_t k = 0; k < ts[i].values.size(); ++k) {
      ts[i].values[k] = std::bit_cast<double>(get_le<std::uint64_t>(payload + off + k * sizeof(double)));
    }
  }
  bundle.validate();
  return bundle;
}

std::size_t save(const ModelBundle& bundle, const std::filesystem::path& path) {
  const auto bytes = serialize(bundle);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ModelFormatError(Kind::io, "cannot write '" + path.string() + "'");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw ModelFormatError(Kind::io, "write failed for '" + path.string() + "'");
  return bytes.size();
}

ModelBundle load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ModelFormatError(Kind::io, "cannot open '" + path.string() + "'");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize(bytes);
}

}  // namespace tcnn
