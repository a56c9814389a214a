// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace tcnn {

using TokenId = std::int32_t;
using Tokens = std::vector<std::string>;
using Tokenizer = std::function<Tokens(std::string_view)>;

/// Splits UTF-8 text on Unicode whitespace and lowercases each token.
/// Lowercasing covers ASCII, Latin-1, Latin Extended-A, Greek and Cyrillic;
/// other scripts (including CJK, which has no case) pass through unchanged.
Tokens tokenize(std::string_view text);

/// Ordered token list; a token's position is its id. Ids 0 and 1 are the
/// reserved pad and unknown-word tokens.
class Vocabulary {
 public:
  static constexpr TokenId pad_id = 0;
  static constexpr TokenId unk_id = 1;
  static constexpr std::string_view pad_token = "*pad*";
  static constexpr std::string_view unk_token = "*unk*";

  Vocabulary();

  /// Keeps every token whose corpus frequency is strictly greater than
  /// `min_count`, ordered by frequency descending then token ascending.
  static Vocabulary build(std::span<const Tokens> corpus, std::size_t min_count);

  /// Rebuilds from a stored id-ordered token list (reserved tokens included).
  static Vocabulary from_tokens(std::vector<std::string> tokens, std::size_t min_count);

  std::size_t size() const noexcept { return tokens_.size(); }
  std::size_t min_count() const noexcept { return min_count_; }
  const std::vector<std::string>& tokens() const noexcept { return tokens_; }

  std::optional<TokenId> find(std::string_view token) const;
  /// Id of `token`, or unk_id when absent.
  TokenId id(std::string_view token) const;
  const std::string& token(TokenId id) const;

  bool operator==(const Vocabulary& other) const {
    return tokens_ == other.tokens_ && min_count_ == other.min_count_;
  }

 private:
  void index_tokens();

  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> index_;
  std::size_t min_count_ = 0;
};

/// Lexicographically sorted class labels; a label's position is its class id.
class LabelMap {
 public:
  LabelMap() = default;

  /// Deduplicates and sorts.
  static LabelMap from_labels(std::span<const std::string> labels);
  /// Takes an id-ordered list, which must already be sorted and unique.
  static LabelMap from_ordered(std::vector<std::string> labels);

  std::size_t size() const noexcept { return labels_.size(); }
  const std::vector<std::string>& labels() const noexcept { return labels_; }
  std::optional<std::size_t> find(std::string_view label) const;
  const std::string& label(std::size_t id) const;

  bool operator==(const LabelMap&) const = default;

 private:
  std::vector<std::string> labels_;
};

struct EncodedRecord {
  std::vector<TokenId> ids;
  std::size_t label = 0;

  bool operator==(const EncodedRecord&) const = default;
};

/// Maps tokens to ids (unknown -> unk_id), truncates to `seq_len`, right-pads with pad_id.
std::vector<TokenId> encode(std::span<const std::string> tokens, const Vocabulary& vocab, std::size_t seq_len);

/// Inverse of encode for non-pad ids; pad positions are dropped.
Tokens decode(std::span<const TokenId> ids, const Vocabulary& vocab);

struct RawRecord {
  std::string text;
  std::string label;

  bool operator==(const RawRecord&) const = default;
};

/// Reads the JSON Lines dataset format: one object per line with exactly the
/// string fields "text" and "label". Throws DataError naming the line.
std::vector<RawRecord> read_jsonl(const std::filesystem::path& path);
void write_jsonl(const std::filesystem::path& path, std::span<const RawRecord> records);

struct EncodingOptions {
  std::size_t seq_len = 130;
  std::size_t min_count = 5;
};

struct Dataset {
  std::vector<RawRecord> raw;
  std::vector<EncodedRecord> records;
  Vocabulary vocab;
  LabelMap labels;
};

/// Builds vocab and labels from `raw` when they are not supplied (training
/// mode); otherwise reuses them and rejects labels missing from `labels`.
Dataset encode_dataset(std::vector<RawRecord> raw, const EncodingOptions& options,
                       const Vocabulary* vocab = nullptr, const LabelMap* labels = nullptr,
                       const Tokenizer& tokenizer = tokenize);

Dataset load_dataset(const std::filesystem::path& path, const EncodingOptions& options,
                     const Vocabulary* vocab = nullptr, const LabelMap* labels = nullptr,
                     const Tokenizer& tokenizer = tokenize);

}  // namespace tcnn
