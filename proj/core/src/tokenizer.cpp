#include "ctxprobe/tokenizer.hpp"

#include <unicode/locid.h>
#include <unicode/normalizer2.h>
#include <unicode/uchar.h>
#include <unicode/unistr.h>
#include <unicode/utf8.h>

#include <fstream>
#include <sstream>

#include "ctxprobe/error.hpp"

namespace ctxprobe {

Vocab Vocab::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError("cannot open vocab file " + path.string());
  std::vector<std::string> tokens;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    tokens.push_back(line);
  }
  // A trailing empty line is the file's final newline, not a token.
  while (!tokens.empty() && tokens.back().empty()) tokens.pop_back();
  return from_tokens(std::move(tokens));
}

Vocab Vocab::from_tokens(std::vector<std::string> tokens) {
  Vocab v;
  v.tokens_ = std::move(tokens);
  v.ids_.reserve(v.tokens_.size());
  for (std::size_t i = 0; i < v.tokens_.size(); ++i) {
    auto [it, inserted] = v.ids_.emplace(v.tokens_[i], static_cast<int>(i));
    if (!inserted) {
      throw LoadError("vocab: duplicate token '" + v.tokens_[i] + "' at ids " +
                      std::to_string(it->second) + " and " + std::to_string(i));
    }
  }
  auto special = [&](const char* name) {
    auto id = v.find(name);
    if (!id) throw LoadError(std::string("vocab: missing special token ") + name);
    return *id;
  };
  v.cls_ = special("[CLS]");
  v.sep_ = special("[SEP]");
  v.unk_ = special("[UNK]");
  v.pad_ = special("[PAD]");
  return v;
}

std::optional<int> Vocab::find(std::string_view token) const {
  auto it = ids_.find(std::string(token));
  if (it == ids_.end()) return std::nullopt;
  return it->second;
}

const std::string& Vocab::token(int id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) {
    throw ValidationError("vocab: id " + std::to_string(id) + " out of range [0, " +
                          std::to_string(tokens_.size()) + ")");
  }
  return tokens_[static_cast<std::size_t>(id)];
}

namespace {

bool is_whitespace(UChar32 c) {
  if (c == ' ' || c == '\t' || c == '\n' || c == '\r') return true;
  return u_charType(c) == U_SPACE_SEPARATOR;
}

bool is_control(UChar32 c) {
  if (c == '\t' || c == '\n' || c == '\r') return false;
  switch (u_charType(c)) {
    case U_CONTROL_CHAR:
    case U_FORMAT_CHAR:
    case U_UNASSIGNED:
    case U_PRIVATE_USE_CHAR:
    case U_SURROGATE:
      return true;
    default:
      return false;
  }
}

bool is_punctuation(UChar32 c) {
  if ((c >= 33 && c <= 47) || (c >= 58 && c <= 64) || (c >= 91 && c <= 96) ||
      (c >= 123 && c <= 126)) {
    return true;
  }
  switch (u_charType(c)) {
    case U_DASH_PUNCTUATION:
    case U_START_PUNCTUATION:
    case U_END_PUNCTUATION:
    case U_CONNECTOR_PUNCTUATION:
    case U_OTHER_PUNCTUATION:
    case U_INITIAL_PUNCTUATION:
    case U_FINAL_PUNCTUATION:
      return true;
    default:
      return false;
  }
}

bool is_cjk(UChar32 c) {
  return (c >= 0x4E00 && c <= 0x9FFF) || (c >= 0x3400 && c <= 0x4DBF) ||
         (c >= 0x20000 && c <= 0x2A6DF) || (c >= 0x2A700 && c <= 0x2B73F) ||
         (c >= 0x2B740 && c <= 0x2B81F) || (c >= 0x2B820 && c <= 0x2CEAF) ||
         (c >= 0xF900 && c <= 0xFAFF) || (c >= 0x2F800 && c <= 0x2FA1F);
}

const icu::Normalizer2& normalizer(bool decompose) {
  UErrorCode status = U_ZERO_ERROR;
  const icu::Normalizer2* n =
      decompose ? icu::Normalizer2::getNFDInstance(status) : icu::Normalizer2::getNFCInstance(status);
  if (U_FAILURE(status) || n == nullptr) throw Error("ICU normalizer unavailable");
  return *n;
}

icu::UnicodeString normalize(const icu::UnicodeString& s, bool decompose) {
  UErrorCode status = U_ZERO_ERROR;
  icu::UnicodeString out = normalizer(decompose).normalize(s, status);
  if (U_FAILURE(status)) throw ValidationError("text normalization failed");
  return out;
}

std::string to_utf8(const icu::UnicodeString& s) {
  std::string out;
  s.toUTF8String(out);
  return out;
}

// Lowercase, strip combining marks, split on punctuation.
void split_normalized_word(const icu::UnicodeString& raw, std::vector<std::string>& out) {
  icu::UnicodeString lowered(raw);
  lowered.toLower(icu::Locale::getRoot());
  const icu::UnicodeString decomposed = normalize(lowered, true);
  icu::UnicodeString current;
  for (int32_t i = 0; i < decomposed.length();) {
    const UChar32 c = decomposed.char32At(i);
    i += U16_LENGTH(c);
    if (u_charType(c) == U_NON_SPACING_MARK) continue;
    if (is_punctuation(c)) {
      if (!current.isEmpty()) {
        out.push_back(to_utf8(current));
        current.remove();
      }
      out.push_back(to_utf8(icu::UnicodeString(c)));
    } else {
      current.append(c);
    }
  }
  if (!current.isEmpty()) out.push_back(to_utf8(current));
}

// Byte offsets of each code point boundary in a UTF-8 string (including the end).
std::vector<std::size_t> code_point_offsets(std::string_view s) {
  std::vector<std::size_t> offs;
  offs.reserve(s.size() + 1);
  int32_t i = 0;
  const auto len = static_cast<int32_t>(s.size());
  while (i < len) {
    offs.push_back(static_cast<std::size_t>(i));
    UChar32 c;
    U8_NEXT(reinterpret_cast<const uint8_t*>(s.data()), i, len, c);
    (void)c;
  }
  offs.push_back(s.size());
  return offs;
}

}  // namespace

std::vector<std::string> basic_tokenize(std::string_view text) {
  const icu::UnicodeString input =
      icu::UnicodeString::fromUTF8(icu::StringPiece(text.data(), static_cast<int32_t>(text.size())));
  icu::UnicodeString cleaned;
  for (int32_t i = 0; i < input.length();) {
    const UChar32 c = input.char32At(i);
    i += U16_LENGTH(c);
    if (c == 0 || c == 0xFFFD || is_control(c)) continue;
    if (is_whitespace(c)) {
      cleaned.append(static_cast<UChar32>(' '));
    } else if (is_cjk(c)) {
      cleaned.append(static_cast<UChar32>(' '));
      cleaned.append(c);
      cleaned.append(static_cast<UChar32>(' '));
    } else {
      cleaned.append(c);
    }
  }
  const icu::UnicodeString composed = normalize(cleaned, false);

  std::vector<std::string> words;
  icu::UnicodeString current;
  for (int32_t i = 0; i < composed.length();) {
    const UChar32 c = composed.char32At(i);
    i += U16_LENGTH(c);
    if (is_whitespace(c)) {
      if (!current.isEmpty()) {
        split_normalized_word(current, words);
        current.remove();
      }
    } else {
      current.append(c);
    }
  }
  if (!current.isEmpty()) split_normalized_word(current, words);
  return words;
}

WordpieceTokenizer::WordpieceTokenizer(const Vocab& vocab, TokenizerOptions options)
    : vocab_(&vocab), options_(options) {
  if (options_.max_len < 2) throw ConfigError("tokenizer: max_len must be at least 2");
}

std::vector<int> WordpieceTokenizer::wordpiece(std::string_view word) const {
  const auto offs = code_point_offsets(word);
  const std::size_t n_chars = offs.size() - 1;
  if (n_chars > options_.max_chars_per_word) return {vocab_->unk_id()};
  std::vector<int> ids;
  std::size_t start = 0;
  std::string candidate;
  while (start < n_chars) {
    std::size_t end = n_chars;
    std::optional<int> found;
    while (start < end) {
      candidate.clear();
      if (start > 0) candidate = "##";
      candidate.append(word.substr(offs[start], offs[end] - offs[start]));
      found = vocab_->find(candidate);
      if (found) break;
      --end;
    }
    if (!found) return {vocab_->unk_id()};
    ids.push_back(*found);
    start = end;
  }
  return ids;
}

Tokenization WordpieceTokenizer::tokenize(std::string_view text) const {
  if (options_.reject_empty && basic_tokenize(text).empty()) {
    throw ValidationError("tokenize: empty text");
  }
  Tokenization tok;
  tok.text = std::string(text);
  tok.piece_ids.push_back(vocab_->cls_id());
  const std::size_t budget = options_.max_len - 2;
  for (const std::string& word : basic_tokenize(text)) {
    const std::vector<int> ids = wordpiece(word);
    const std::size_t used = tok.piece_ids.size() - 1;
    if (used >= budget) {
      tok.truncated = true;
      break;
    }
    std::size_t take = ids.size();
    if (used + take > budget) {
      take = budget - used;
      tok.truncated = true;
    }
    const std::size_t begin = tok.piece_ids.size();
    tok.piece_ids.insert(tok.piece_ids.end(), ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(take));
    tok.word_spans.push_back({begin, begin + take});
    tok.words.push_back(word);
    if (take < ids.size()) break;
  }
  tok.piece_ids.push_back(vocab_->sep_id());
  tok.pieces.reserve(tok.piece_ids.size());
  for (int id : tok.piece_ids) tok.pieces.push_back(vocab_->token(id));
  return tok;
}

Tokenization tokenize(std::string_view text, const Vocab& vocab, std::size_t max_len) {
  TokenizerOptions opts;
  opts.max_len = max_len;
  return WordpieceTokenizer(vocab, opts).tokenize(text);
}

std::optional<std::size_t> find_keyword_word(std::span<const std::string> words,
                                             std::string_view keyword, std::size_t occurrence) {
  const std::vector<std::string> needle = basic_tokenize(keyword);
  if (needle.empty()) throw ValidationError("keyword is empty after normalization");
  if (words.size() < needle.size()) return std::nullopt;
  std::size_t seen = 0;
  for (std::size_t i = 0; i + needle.size() <= words.size(); ++i) {
    bool match = true;
    for (std::size_t k = 0; k < needle.size() && match; ++k) match = words[i + k] == needle[k];
    if (match) {
      if (seen == occurrence) return i;
      ++seen;
    }
  }
  return std::nullopt;
}

std::size_t count_keyword(std::span<const std::string> words, std::string_view keyword) {
  std::size_t n = 0;
  while (find_keyword_word(words, keyword, n)) ++n;
  return n;
}

PieceSpan locate_keyword(const Tokenization& tok, std::string_view keyword, std::size_t occurrence) {
  const auto start = find_keyword_word(tok.words, keyword, occurrence);
  if (!start) {
    std::ostringstream os;
    os << "keyword '" << keyword << "' (occurrence " << occurrence << ") not found in sentence '"
       << tok.text << "'";
    throw NotFoundError(os.str());
  }
  const std::size_t n_words = basic_tokenize(keyword).size();
  return {tok.word_spans[*start].begin, tok.word_spans[*start + n_words - 1].end};
}

}  // namespace ctxprobe
