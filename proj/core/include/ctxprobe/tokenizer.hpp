#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace ctxprobe {

// Token <-> id table in the standard BERT vocab.txt layout (one token per
// line, line number is the id). Immutable after construction.
class Vocab {
 public:
  static Vocab load(const std::filesystem::path& path);
  static Vocab from_tokens(std::vector<std::string> tokens);

  std::optional<int> find(std::string_view token) const;
  const std::string& token(int id) const;
  std::size_t size() const noexcept { return tokens_.size(); }

  int cls_id() const noexcept { return cls_; }
  int sep_id() const noexcept { return sep_; }
  int unk_id() const noexcept { return unk_; }
  int pad_id() const noexcept { return pad_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> ids_;
  int cls_ = -1, sep_ = -1, unk_ = -1, pad_ = -1;
};

// Half-open range of piece indices.
struct PieceSpan {
  std::size_t begin = 0;
  std::size_t end = 0;

  std::size_t length() const noexcept { return end - begin; }
  bool operator==(const PieceSpan&) const = default;
};

struct Tokenization {
  std::string text;
  std::vector<int> piece_ids;           // starts with [CLS], ends with [SEP]
  std::vector<std::string> pieces;      // surface strings, "##" marks continuation
  std::vector<std::string> words;       // normalized words, one per word span
  std::vector<PieceSpan> word_spans;    // ordered, non-overlapping
  bool truncated = false;
};

struct TokenizerOptions {
  std::size_t max_len = 128;  // including [CLS] and [SEP]
  bool reject_empty = false;  // empty text: error instead of [CLS][SEP]
  std::size_t max_chars_per_word = 100;
};

// Uncased BERT pre-tokenization: control-character removal, whitespace
// cleanup, CJK isolation, NFC, lowercasing, accent stripping and punctuation
// splitting. Returns the normalized words in order.
std::vector<std::string> basic_tokenize(std::string_view text);

class WordpieceTokenizer {
 public:
  explicit WordpieceTokenizer(const Vocab& vocab, TokenizerOptions options = {});

  Tokenization tokenize(std::string_view text) const;

  // Greedy longest-match-first split of one normalized word. A word that
  // cannot be covered, or is longer than max_chars_per_word code points,
  // becomes a single [UNK].
  std::vector<int> wordpiece(std::string_view word) const;

  const Vocab& vocab() const noexcept { return *vocab_; }
  const TokenizerOptions& options() const noexcept { return options_; }

 private:
  const Vocab* vocab_;
  TokenizerOptions options_;
};

Tokenization tokenize(std::string_view text, const Vocab& vocab, std::size_t max_len = 128);

// Piece span of the `occurrence`-th (0-based) word-level, case-insensitive
// match of `keyword`. Multi-word keywords match a run of consecutive words.
// Throws NotFoundError naming the sentence and keyword.
PieceSpan locate_keyword(const Tokenization& tok, std::string_view keyword,
                         std::size_t occurrence = 0);

// Word-level helpers shared with dataset validation.
std::size_t count_keyword(std::span<const std::string> words, std::string_view keyword);
std::optional<std::size_t> find_keyword_word(std::span<const std::string> words,
                                             std::string_view keyword, std::size_t occurrence);

}  // namespace ctxprobe
