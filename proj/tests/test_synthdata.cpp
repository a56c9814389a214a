// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "oracles.hpp"
#include "tcnn/error.hpp"
#include "tcnn/synthdata.hpp"

using namespace tcnn;

namespace {

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::size_t count_lines(const std::string& s) { return std::size_t(std::count(s.begin(), s.end(), '\n')); }

}  // namespace

TEST_CASE("default corpus sizes and files") {
  const auto dir = oracle::scratch_dir("synth");
  const auto files = generate_files(SynthSpec{}, dir);
  CHECK(files.train.filename() == "train.jsonl");
  CHECK(files.test.filename() == "test.jsonl");
  CHECK(count_lines(slurp(files.train)) == 1200);
  CHECK(count_lines(slurp(files.test)) == 300);

  const auto again = oracle::scratch_dir("synth2");
  const auto files2 = generate_files(SynthSpec{}, again);
  CHECK(slurp(files.train) == slurp(files2.train));
  CHECK(slurp(files.test) == slurp(files2.test));

  SynthSpec other;
  other.seed = 43;
  CHECK(generate(other).train != generate(SynthSpec{}).train);

  const auto loaded = read_jsonl(files.train);
  CHECK(loaded == generate(SynthSpec{}).train);
  std::filesystem::remove_all(dir);
  std::filesystem::remove_all(again);
}

TEST_CASE("token shapes and marker disjointness") {
  SynthSpec spec;
  spec.train_per_class = 40;
  spec.test_per_class = 10;
  const auto corpus = generate(spec);
  std::map<std::string, std::set<std::string>> markers_by_label;
  for (const auto& r : corpus.train) {
    const auto toks = tokenize(r.text);
    CHECK(toks.size() >= spec.min_tokens);
    CHECK(toks.size() <= spec.max_tokens);
    for (const auto& t : toks) {
      REQUIRE(!t.empty());
      if (t[0] == 'm') {
        markers_by_label[r.label].insert(t);
      } else {
        CHECK(t[0] == 'w');
        CHECK(std::stoul(t.substr(1)) < spec.vocab_background_size);
      }
    }
  }
  CHECK(markers_by_label.size() == spec.num_classes);
  for (std::size_t c = 0; c < spec.num_classes; ++c) {
    const auto& own = markers_by_label[class_label(c)];
    for (const auto& m : own) {
      bool found = false;
      for (std::size_t j = 0; j < spec.markers_per_class; ++j) found = found || m == marker_token(c, j);
      CHECK(found);
    }
  }
  CHECK(class_label(3) == "class_3");
  CHECK(marker_token(2, 7) == "m2x7");
  CHECK(background_token(11) == "w11");
}

TEST_CASE("marker count follows the binomial expectation") {
  SynthSpec spec;
  spec.min_tokens = spec.max_tokens = 40;
  spec.train_per_class = 300;
  spec.test_per_class = 1;
  const auto corpus = generate(spec);
  double total = 0.0;
  for (const auto& r : corpus.train) {
    for (const auto& t : tokenize(r.text)) total += t[0] == 'm';
  }
  const double n = double(corpus.train.size());
  const double mean = total / n;
  const double sigma = std::sqrt(40 * 0.3 * 0.7 / n);
  CHECK(std::abs(mean - 12.0) < 3 * sigma);
}

TEST_CASE("a marker-counting rule separates the classes") {
  const auto corpus = generate(SynthSpec{});
  std::size_t correct = 0;
  for (const auto& r : corpus.test) {
    std::map<std::size_t, std::size_t> votes;
    for (const auto& t : tokenize(r.text)) {
      if (t[0] == 'm') ++votes[std::stoul(t.substr(1, t.find('x') - 1))];
    }
    std::size_t best = 0, best_votes = 0;
    for (auto [c, v] : votes) {
      if (v > best_votes) best = c, best_votes = v;
    }
    correct += class_label(best) == r.label;
  }
  CHECK(double(correct) / double(corpus.test.size()) >= 0.99);
}

TEST_CASE("rare background tokens fall below the vocabulary threshold") {
  const auto corpus = generate(SynthSpec{});
  std::vector<Tokens> docs;
  for (const auto& r : corpus.train) docs.push_back(tokenize(r.text));
  const auto all = Vocabulary::build(docs, 0);
  const auto kept = Vocabulary::build(docs, 5);
  CHECK(kept.size() < all.size());
  CHECK(kept.find(marker_token(0, 0)).has_value());
}

TEST_CASE("spec validation and JSON") {
  CHECK_NOTHROW(SynthSpec{}.validate());
  SynthSpec bad;
  bad.marker_fraction = 1.5;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = {};
  bad.min_tokens = 70;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = {};
  bad.num_classes = 0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);

  const auto j = nlohmann::json::parse(R"({"num_classes": 3, "tokens_per_doc": [10, 15], "seed": 9})");
  const auto s = synth_spec_from_json(j);
  CHECK(s.num_classes == 3);
  CHECK(s.min_tokens == 10);
  CHECK(s.max_tokens == 15);
  CHECK(s.seed == 9);
  const auto back = synth_spec_from_json(to_json(s));
  CHECK(back.max_tokens == 15);
  CHECK(back.train_per_class == s.train_per_class);
  CHECK_THROWS_AS(synth_spec_from_json(nlohmann::json::parse(R"({"colour": 1})")), ConfigError);
}
