// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tcnn/model.hpp"
#include "tcnn/text.hpp"
#include "tcnn/training.hpp"

namespace tcnn {

/// Everything needed to run inference on raw text.
struct ModelBundle {
  ModelParams params;
  Vocabulary vocab;
  LabelMap labels;
  TrainConfig train_config;

  /// Throws ModelFormatError(inconsistent_bundle) on shape disagreement.
  void validate() const;
  Prediction predict(std::string_view text) const { return tcnn::predict(text, params, vocab, labels); }
};

/// Container layout, all integers little-endian:
///   "TCNN" | u32 version (1) | u64 manifest length | manifest JSON (UTF-8) | payload
/// The manifest carries train_config, labels and vocabulary in id order, and
/// a tensor directory of {name, dims, byte_offset, byte_length}; offsets are
/// relative to the payload start. Tensors are row-major little-endian f64.
inline constexpr char kModelMagic[4] = {'T', 'C', 'N', 'N'};
inline constexpr std::uint32_t kModelFormatVersion = 1;

std::vector<std::uint8_t> serialize(const ModelBundle& bundle);
ModelBundle deserialize(const std::vector<std::uint8_t>& bytes);

/// Returns the number of bytes written.
std::size_t save(const ModelBundle& bundle, const std::filesystem::path& path);
ModelBundle load(const std::filesystem::path& path);

nlohmann::json to_json(const ModelConfig& config);
nlohmann::json to_json(const TrainConfig& config);
/// Reads a TrainConfig; absent keys keep the defaults in `base`. With
/// `strict`, unknown keys throw ConfigError.
TrainConfig train_config_from_json(const nlohmann::json& j, const TrainConfig& base = {}, bool strict = true);

}  // namespace tcnn
