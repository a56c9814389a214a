// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <algorithm>
#include <fstream>
#include <map>

#include "oracles.hpp"
#include "tcnn/error.hpp"
#include "tcnn/rng.hpp"
#include "tcnn/text.hpp"

using namespace tcnn;

namespace {

std::vector<Tokens> corpus_of(std::initializer_list<std::pair<const char*, int>> counts) {
  std::vector<Tokens> docs(1);
  for (auto [tok, n] : counts) {
    for (int i = 0; i < n; ++i) docs[0].push_back(tok);
  }
  return docs;
}

std::filesystem::path write_file(const std::filesystem::path& dir, const std::string& name, const std::string& body) {
  auto p = dir / name;
  std::ofstream(p, std::ios::binary) << body;
  return p;
}

}  // namespace

TEST_CASE("tokenize splits on whitespace and lowercases") {
  CHECK(tokenize("Chest pain  at rest") == Tokens{"chest", "pain", "at", "rest"});
  CHECK(tokenize("").empty());
  CHECK(tokenize("A a A") == Tokens{"a", "a", "a"});
  CHECK(tokenize(" \t\nx\r\n") == Tokens{"x"});
}

TEST_CASE("tokenize handles non-ASCII whitespace and case") {
  // U+3000 ideographic space, U+00A0 no-break space
  CHECK(tokenize("咳嗽\xE3\x80\x80发热\xC2\xA0" "Fever") == Tokens{"咳嗽", "发热", "fever"});
  CHECK(tokenize("ÉTÉ Ωμέγα ДОМ") == Tokens{"été", "ωμέγα", "дом"});
}

TEST_CASE("build_vocabulary applies the strict frequency threshold") {
  auto v = Vocabulary::build(corpus_of({{"x", 6}, {"y", 5}}), 5);
  CHECK(v.tokens() == std::vector<std::string>{"*pad*", "*unk*", "x"});
  CHECK(v.find("y") == std::nullopt);
  CHECK(v.id("y") == Vocabulary::unk_id);

  CHECK(Vocabulary::build({}, 5).size() == 2);

  auto tie = Vocabulary::build(corpus_of({{"b", 7}, {"a", 7}, {"c", 9}}), 5);
  CHECK(tie.tokens() == std::vector<std::string>{"*pad*", "*unk*", "c", "a", "b"});
}

TEST_CASE("vocabulary membership matches frequency rule on random corpora") {
  Rng rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<Tokens> docs(3);
    std::map<std::string, std::size_t> freq;
    for (int i = 0; i < 200; ++i) {
      auto tok = "t" + std::to_string(rng.below(40));
      docs[rng.below(3)].push_back(tok);
      ++freq[tok];
    }
    const std::size_t min_count = rng.below(8);
    auto v = Vocabulary::build(docs, min_count);
    for (auto& [tok, n] : freq) CHECK((v.find(tok).has_value() == (n > min_count)));
    for (std::size_t id = 0; id < v.size(); ++id) {
      CHECK(v.id(v.token(static_cast<TokenId>(id))) == static_cast<TokenId>(id));
    }
    CHECK(Vocabulary::build(docs, min_count) == v);
  }
}

TEST_CASE("reserved strings in a corpus do not duplicate reserved ids") {
  auto v = Vocabulary::build(corpus_of({{"*unk*", 10}, {"*pad*", 10}, {"z", 10}}), 0);
  CHECK(v.size() == 3);
  CHECK(v.id("*unk*") == Vocabulary::unk_id);
}

TEST_CASE("encode pads, truncates and substitutes unk") {
  auto v = Vocabulary::from_tokens({"*pad*", "*unk*", "q", "a", "b"}, 0);
  CHECK(v.id("a") == 3);
  const Tokens ab{"a", "b"};
  CHECK(encode(ab, v, 4) == std::vector<TokenId>{3, 4, 0, 0});
  const Tokens zzz{"zzz"};
  CHECK(encode(zzz, v, 2) == std::vector<TokenId>{1, 0});

  Tokens long_doc;
  for (int i = 0; i < 131; ++i) long_doc.push_back(i == 130 ? "b" : "a");
  const auto ids = encode(long_doc, v, 130);
  CHECK(ids.size() == 130);
  CHECK(std::all_of(ids.begin(), ids.end(), [](TokenId id) { return id == 3; }));

  CHECK(encode(Tokens{}, v, 5) == std::vector<TokenId>(5, 0));
  CHECK_THROWS_AS(encode(ab, v, 0), ConfigError);
}

TEST_CASE("encode then decode reproduces in-vocabulary input") {
  auto v = Vocabulary::from_tokens({"*pad*", "*unk*", "a", "b", "c"}, 0);
  Rng rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 1 + rng.below(12);
    Tokens toks;
    for (std::size_t i = 0, len = rng.below(n + 1); i < len; ++i) toks.push_back(v.token(static_cast<TokenId>(2 + rng.below(3))));
    const auto ids = encode(toks, v, n);
    CHECK(ids.size() == n);
    CHECK(decode(ids, v) == toks);
  }
}

TEST_CASE("label map is sorted and bijective") {
  const std::vector<std::string> raw{"gout", "flu", "gout"};
  auto m = LabelMap::from_labels(raw);
  CHECK(m.labels() == std::vector<std::string>{"flu", "gout"});
  CHECK(m.find("gout") == 1u);
  CHECK(m.label(0) == "flu");
  CHECK_THROWS_AS(LabelMap::from_ordered({"b", "a"}), DataError);
}

TEST_CASE("load_dataset builds and reuses vocabulary and labels") {
  const auto dir = oracle::scratch_dir("text");
  const auto path = write_file(dir, "d.jsonl",
                               "{\"text\": \"Cough fever\", \"label\": \"gout\"}\n"
                               "{\"label\": \"flu\", \"text\": \"fever\"}\n");
  auto ds = load_dataset(path, {4, 0});
  CHECK(ds.labels.labels() == std::vector<std::string>{"flu", "gout"});
  CHECK(ds.records.size() == 2);
  CHECK(ds.records[0].label == 1);
  CHECK(ds.records[1].ids == std::vector<TokenId>{ds.vocab.id("fever"), 0, 0, 0});

  auto again = load_dataset(path, {4, 0}, &ds.vocab, &ds.labels);
  CHECK(again.records == ds.records);
  std::filesystem::remove_all(dir);
}

TEST_CASE("load_dataset rejects malformed input with the line number") {
  const auto dir = oracle::scratch_dir("text_bad");
  auto expect_line = [&](const std::string& body, std::size_t line) {
    const auto p = write_file(dir, "bad.jsonl", body);
    try {
      load_dataset(p, {4, 0});
      FAIL("expected DataError");
    } catch (const DataError& e) {
      CHECK(e.line() == line);
    }
  };
  expect_line("{\"text\": \"a\", \"label\": \"x\"}\n{\"text\": \"b\"}\n", 2);
  expect_line("{\"text\": \"a\", \"label\": \"x\"}\n\n{\"text\": \"a\", \"label\": \"x\"}\n", 2);
  expect_line("{\"text\": 3, \"label\": \"x\"}\n", 1);
  expect_line("{\"text\": \"a\", \"label\": \"x\", \"extra\": \"y\"}\n", 1);
  expect_line("not json\n", 1);
  expect_line("\xEF\xBB\xBF{\"text\": \"a\", \"label\": \"x\"}\n", 1);

  const auto train = write_file(dir, "train.jsonl", "{\"text\": \"a\", \"label\": \"x\"}\n");
  const auto eval = write_file(dir, "eval.jsonl", "{\"text\": \"a\", \"label\": \"x\"}\n{\"text\": \"a\", \"label\": \"y\"}\n");
  auto ds = load_dataset(train, {4, 0});
  try {
    load_dataset(eval, {4, 0}, &ds.vocab, &ds.labels);
    FAIL("expected unknown-label error");
  } catch (const DataError& e) {
    CHECK(e.line() == 2);
  }
  std::filesystem::remove_all(dir);
}
