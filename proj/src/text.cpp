// SPDX-License-Identifier: Apache-2.0
#include "tcnn/text.hpp"

#include <algorithm>
#include <fstream>
#include <set>

#include <nlohmann/json.hpp>

#include "tcnn/error.hpp"

namespace tcnn {
namespace {

// Decodes one code point at `pos`, advancing it. Malformed bytes decode as
// themselves so the tokenizer never drops input.
char32_t next_code_point(std::string_view s, std::size_t& pos) {
  const auto b0 = static_cast<unsigned char>(s[pos]);
  auto cont = [&](std::size_t i) -> int {
    if (pos + i >= s.size()) return -1;
    const auto b = static_cast<unsigned char>(s[pos + i]);
    return (b & 0xC0) == 0x80 ? (b & 0x3F) : -1;
  };
  if (b0 < 0x80) {
    pos += 1;
    return b0;
  }
  if ((b0 & 0xE0) == 0xC0) {
    if (int c1 = cont(1); c1 >= 0) {
      pos += 2;
      return (char32_t(b0 & 0x1F) << 6) | char32_t(c1);
    }
  } else if ((b0 & 0xF0) == 0xE0) {
    int c1 = cont(1), c2 = cont(2);
    if (c1 >= 0 && c2 >= 0) {
      pos += 3;
      return (char32_t(b0 & 0x0F) << 12) | (char32_t(c1) << 6) | char32_t(c2);
    }
  } else if ((b0 & 0xF8) == 0xF0) {
    int c1 = cont(1), c2 = cont(2), c3 = cont(3);
    if (c1 >= 0 && c2 >= 0 && c3 >= 0) {
      pos += 4;
      return (char32_t(b0 & 0x07) << 18) | (char32_t(c1) << 12) | (char32_t(c2) << 6) | char32_t(c3);
    }
  }
  pos += 1;
  return b0;
}

void append_utf8(std::string& out, char32_t cp) {
  if (cp < 0x80) {
    out.push_back(static_cast<char>(cp));
  } else if (cp < 0x800) {
    out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else if (cp < 0x10000) {
    out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else {
    out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  }
}

bool is_unicode_space(char32_t cp) {
  switch (cp) {
    case 0x09: case 0x0A: case 0x0B: case 0x0C: case 0x0D: case 0x20:
    case 0x85: case 0xA0: case 0x1680: case 0x2028: case 0x2029:
    case 0x202F: case 0x205F: case 0x3000:
      return true;
    default:
      return cp >= 0x2000 && cp <= 0x200A;
  }
}

char32_t to_lower(char32_t cp) {
  if (cp >= 'A' && cp <= 'Z') return cp + 32;
  if (cp < 0xC0) return cp;
  if (cp <= 0xDE) return cp == 0xD7 ? cp : cp + 32;
  if (cp >= 0x100 && cp <= 0x17F) {
    if (cp == 0x130 || cp == 0x131 || cp == 0x138 || cp == 0x149 || cp == 0x17F) return cp;
    if (cp == 0x178) return 0xFF;
    const bool odd_upper = (cp >= 0x139 && cp <= 0x148) || (cp >= 0x179 && cp <= 0x17E);
    if (odd_upper) return (cp % 2 == 1) ? cp + 1 : cp;
    return (cp % 2 == 0) ? cp + 1 : cp;
  }
  if (cp >= 0x391 && cp <= 0x3A9 && cp != 0x3A2) return cp + 32;
  if (cp >= 0x400 && cp <= 0x40F) return cp + 80;
  if (cp >= 0x410 && cp <= 0x42F) return cp + 32;
  return cp;
}

}  // namespace

Tokens tokenize(std::string_view text) {
  Tokens out;
  std::string current;
  std::size_t pos = 0;
  while (pos < text.size()) {
    const char32_t cp = next_code_point(text, pos);
    if (is_unicode_space(cp)) {
      if (!current.empty()) out.push_back(std::move(current));
      current.clear();
    } else {
      append_utf8(current, to_lower(cp));
    }
  }
  if (!current.empty()) out.push_back(std::move(current));
  return out;
}

// ---- Vocabulary ------------------------------------------------------------

Vocabulary::Vocabulary() : tokens_{std::string(pad_token), std::string(unk_token)} { index_tokens(); }

void Vocabulary::index_tokens() {
  index_.clear();
  index_.reserve(tokens_.size());
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    if (!index_.emplace(tokens_[i], static_cast<TokenId>(i)).second) {
      throw DataError("duplicate vocabulary token '" + tokens_[i] + "'");
    }
  }
}

Vocabulary Vocabulary::build(std::span<const Tokens> corpus, std::size_t min_count) {
  std::unordered_map<std::string, std::size_t> freq;
  for (const auto& doc : corpus) {
    for (const auto& tok : doc) ++freq[tok];
  }
  std::vector<std::pair<std::string, std::size_t>> kept;
  for (auto& [tok, n] : freq) {
    if (n > min_count && tok != pad_token && tok != unk_token) kept.emplace_back(tok, n);
  }
  std::sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) {
    return a.second != b.second ? a.second > b.second : a.first < b.first;
  });

  Vocabulary v;
  v.min_count_ = min_count;
  v.tokens_.reserve(kept.size() + 2);
  for (auto& [tok, n] : kept) v.tokens_.push_back(std::move(tok));
  v.index_tokens();
  return v;
}

Vocabulary Vocabulary::from_tokens(std::vector<std::string> tokens, std::size_t min_count) {
  if (tokens.size() < 2 || tokens[0] != pad_token || tokens[1] != unk_token) {
    throw DataError("vocabulary must start with the reserved pad and unk tokens");
  }
  Vocabulary v;
  v.tokens_ = std::move(tokens);
  v.min_count_ = min_count;
  v.index_tokens();
  return v;
}

std::optional<TokenId> Vocabulary::find(std::string_view token) const {
  auto it = index_.find(std::string(token));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

TokenId Vocabulary::id(std::string_view token) const { return find(token).value_or(unk_id); }

const std::string& Vocabulary::token(TokenId id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) {
    throw DataError("token id " + std::to_string(id) + " out of range");
  }
  return tokens_[static_cast<std::size_t>(id)];
}

// ---- LabelMap --------------------------------------------------------------

LabelMap LabelMap::from_labels(std::span<const std::string> labels) {
  std::set<std::string> unique(labels.begin(), labels.end());
  LabelMap m;
  m.labels_.assign(unique.begin(), unique.end());
  return m;
}

LabelMap LabelMap::from_ordered(std::vector<std::string> labels) {
  for (std::size_t i = 1; i < labels.size(); ++i) {
    if (!(labels[i - 1] < labels[i])) throw DataError("label list must be sorted and unique");
  }
  LabelMap m;
  m.labels_ = std::move(labels);
  return m;
}

std::optional<std::size_t> LabelMap::find(std::string_view label) const {
  auto it = std::lower_bound(labels_.begin(), labels_.end(), label);
  if (it == labels_.end() || *it != label) return std::nullopt;
  return static_cast<std::size_t>(it - labels_.begin());
}

const std::string& LabelMap::label(std::size_t id) const {
  if (id >= labels_.size()) throw DataError("class id " + std::to_string(id) + " out of range");
  return labels_[id];
}

// ---- encoding --------------------------------------------------------------

std::vector<TokenId> encode(std::span<const std::string> tokens, const Vocabulary& vocab, std::size_t seq_len) {
  if (seq_len == 0) throw ConfigError("sequence length must be >= 1");
  std::vector<TokenId> ids(seq_len, Vocabulary::pad_id);
  const std::size_t n = std::min(seq_len, tokens.size());
  for (std::size_t i = 0; i < n; ++i) ids[i] = vocab.id(tokens[i]);
  return ids;
}

Tokens decode(std::span<const TokenId> ids, const Vocabulary& vocab) {
  Tokens out;
  for (TokenId id : ids) {
    if (id != Vocabulary::pad_id) out.push_back(vocab.token(id));
  }
  return out;
}

std::vector<RawRecord> read_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open dataset '" + path.string() + "'");

  std::vector<RawRecord> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (lineno == 1 && line.starts_with("\xEF\xBB\xBF")) throw DataError("byte order mark not allowed", lineno);
    if (line.empty()) throw DataError("blank line", lineno);

    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw DataError(std::string("invalid JSON: ") + e.what(), lineno);
    }
    if (!j.is_object()) throw DataError("expected a JSON object", lineno);
    for (const char* key : {"text", "label"}) {
      auto it = j.find(key);
      if (it == j.end()) throw DataError(std::string("missing \"") + key + "\" field", lineno);
      if (!it->is_string()) throw DataError(std::string("\"") + key + "\" must be a string", lineno);
    }
    if (j.size() != 2) throw DataError("unexpected fields (only \"text\" and \"label\" allowed)", lineno);
    out.push_back({j["text"].get<std::string>(), j["label"].get<std::string>()});
  }
  return out;
}

void write_jsonl(const std::filesystem::path& path, std::span<const RawRecord> records) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write '" + path.string() + "'");
  for (const auto& r : records) {
    nlohmann::ordered_json j;
    j["text"] = r.text;
    j["label"] = r.label;
    out << j.dump() << '\n';
  }
  if (!out) throw Error("write failed for '" + path.string() + "'");
}

Dataset encode_dataset(std::vector<RawRecord> raw, const EncodingOptions& options, const Vocabulary* vocab,
                       const LabelMap* labels, const Tokenizer& tokenizer) {
  Dataset ds;
  std::vector<Tokens> tokenized;
  tokenized.reserve(raw.size());
  for (const auto& r : raw) tokenized.push_back(tokenizer(r.text));

  ds.vocab = vocab ? *vocab : Vocabulary::build(tokenized, options.min_count);
  if (labels) {
    ds.labels = *labels;
  } else {
    std::vector<std::string> names;
    names.reserve(raw.size());
    for (const auto& r : raw) names.push_back(r.label);
    ds.labels = LabelMap::from_labels(names);
  }

  ds.records.reserve(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) {
    auto cls = ds.labels.find(raw[i].label);
    if (!cls) throw DataError("unknown label '" + raw[i].label + "'", i + 1);
    ds.records.push_back({encode(tokenized[i], ds.vocab, options.seq_len), *cls});
  }
  ds.raw = std::move(raw);
  return ds;
}

Dataset load_dataset(const std::filesystem::path& path, const EncodingOptions& options, const Vocabulary* vocab,
                     const LabelMap* labels, const Tokenizer& tokenizer) {
  return encode_dataset(read_jsonl(path), options, vocab, labels, tokenizer);
}

}  // namespace tcnn
