// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tcnn/text.hpp"

namespace tcnn {

/// Class-conditional synthetic corpus. Each token is, with probability
/// marker_fraction, a uniform draw from its class's private marker set,
/// otherwise a Zipf-weighted draw from a shared background pool.
struct SynthSpec {
  std::size_t num_classes = 6;
  std::size_t train_per_class = 200;
  std::size_t test_per_class = 50;
  std::size_t vocab_background_size = 400;
  std::size_t markers_per_class = 12;
  std::size_t min_tokens = 20;
  std::size_t max_tokens = 60;
  double marker_fraction = 0.3;
  std::uint64_t seed = 42;

  void validate() const;
};

/// Background weights fall off as rank^-1.5 so the tail lands under the
/// default vocabulary threshold.
inline constexpr double kZipfExponent = 1.5;

SynthSpec synth_spec_from_json(const nlohmann::json& j);
nlohmann::json to_json(const SynthSpec& spec);

std::string class_label(std::size_t c);
std::string marker_token(std::size_t c, std::size_t j);
std::string background_token(std::size_t r);

struct SynthCorpus {
  std::vector<RawRecord> train;
  std::vector<RawRecord> test;
};

/// Records are grouped by class in both splits; deterministic per seed.
SynthCorpus generate(const SynthSpec& spec);

struct SynthFiles {
  std::filesystem::path train;
  std::filesystem::path test;
};

/// Writes train.jsonl and test.jsonl into `out_dir` (created if needed).
SynthFiles generate_files(const SynthSpec& spec, const std::filesystem::path& out_dir);

}  // namespace tcnn
