// SPDX-License-Identifier: Apache-2.0
#include "tcnn/synthdata.hpp"

#include <algorithm>
#include <cmath>

#include "tcnn/error.hpp"
#include "tcnn/rng.hpp"

namespace tcnn {

void SynthSpec::validate() const {
  if (num_classes < 1 || train_per_class < 1 || test_per_class < 1 || vocab_background_size < 1 ||
      markers_per_class < 1) {
    throw ConfigError("synthetic corpus counts must all be positive");
  }
  if (min_tokens < 1 || max_tokens < min_tokens) throw ConfigError("need 1 <= min_tokens <= max_tokens");
  if (!(marker_fraction > 0.0 && marker_fraction < 1.0)) throw ConfigError("marker_fraction must be in (0, 1)");
}

SynthSpec synth_spec_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("synth spec must be a JSON object");
  SynthSpec s;
  for (const auto& [key, value] : j.items()) {
    try {
      if (key == "num_classes") s.num_classes = value.get<std::size_t>();
      else if (key == "train_per_class") s.train_per_class = value.get<std::size_t>();
      else if (key == "test_per_class") s.test_per_class = value.get<std::size_t>();
      else if (key == "vocab_background_size") s.vocab_background_size = value.get<std::size_t>();
      else if (key == "markers_per_class") s.markers_per_class = value.get<std::size_t>();
      else if (key == "tokens_per_doc") {
        if (!value.is_array() || value.size() != 2) throw ConfigError("tokens_per_doc must be [min, max]");
        s.min_tokens = value[0].get<std::size_t>();
        s.max_tokens = value[1].get<std::size_t>();
      } else if (key == "marker_fraction") s.marker_fraction = value.get<double>();
      else if (key == "seed") s.seed = value.get<std::uint64_t>();
      else throw ConfigError("unknown synth spec key '" + key + "'");
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError("bad value for '" + key + "': " + e.what());
    }
  }
  s.validate();
  return s;
}

nlohmann::json to_json(const SynthSpec& s) {
  return {{"num_classes", s.num_classes},
          {"train_per_class", s.train_per_class},
          {"test_per_class", s.test_per_class},
          {"vocab_background_size", s.vocab_background_size},
          {"markers_per_class", s.markers_per_class},
          {"tokens_per_doc", {s.min_tokens, s.max_tokens}},
          {"marker_fraction", s.marker_fraction},
          {"seed", s.seed}};
}

std::string class_label(std::size_t c) { return "class_" + std::to_string(c); }
std::string marker_token(std::size_t c, std::size_t j) { return "m" + std::to_string(c) + "x" + std::to_string(j); }
std::string background_token(std::size_t r) { return "w" + std::to_string(r); }

SynthCorpus generate(const SynthSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);

  // cumulative Zipf weights over background ranks
  std::vector<double> cdf(spec.vocab_background_size);
  double acc = 0.0;
  for (std::size_t r = 0; r < cdf.size(); ++r) {
    acc += std::pow(static_cast<double>(r + 1), -kZipfExponent);
    cdf[r] = acc;
  }
  auto background = [&] {
    const double u = rng.uniform01() * acc;
    const auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
    return static_cast<std::size_t>(std::min<std::ptrdiff_t>(it - cdf.begin(), static_cast<std::ptrdiff_t>(cdf.size()) - 1));
  };

  auto document = [&](std::size_t c) {
    const std::size_t len = spec.min_tokens + rng.below(spec.max_tokens - spec.min_tokens + 1);
    std::string text;
    for (std::size_t i = 0; i < len; ++i) {
      if (i > 0) text.push_back(' ');
      if (rng.bernoulli(spec.marker_fraction)) {
        text += marker_token(c, rng.below(spec.markers_per_class));
      } else {
        text += background_token(background());
      }
    }
    return RawRecord{std::move(text), class_label(c)};
  };

  SynthCorpus out;
  for (std::size_t c = 0; c < spec.num_classes; ++c) {
    for (std::size_t i = 0; i < spec.train_per_class; ++i) out.train.push_back(document(c));
  }
  for (std::size_t c = 0; c < spec.num_classes; ++c) {
    for (std::size_t i = 0; i < spec.test_per_class; ++i) out.test.push_back(document(c));
  }
  return out;
}

SynthFiles generate_files(const SynthSpec& spec, const std::filesystem::path& out_dir) {
  const auto corpus = generate(spec);
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw Error("cannot create '" + out_dir.string() + "': " + ec.message());
  SynthFiles files{out_dir / "train.jsonl", out_dir / "test.jsonl"};
  write_jsonl(files.train, corpus.train);
  write_jsonl(files.test, corpus.test);
  return files;
}

}  // namespace tcnn
