#include "ctxprobe/datasets.hpp"

#include <algorithm>
#include <set>
#include <sstream>
#include <unicode/unistr.h>
#include <unordered_map>

#include "ctxprobe/error.hpp"
#include "ctxprobe/io.hpp"
#include "ctxprobe/rng.hpp"
#include "ctxprobe/tokenizer.hpp"

namespace ctxprobe {

using nlohmann::json;

std::string_view to_string(DatasetSource s) {
  switch (s) {
    case DatasetSource::kCPWS:
      return "CPWS";
    case DatasetSource::kPWC:
      return "PWC";
    case DatasetSource::kSPWC:
      return "sPWC";
  }
  return "CPWS";
}

DatasetSource parse_dataset_source(std::string_view s) {
  if (s == "CPWS") return DatasetSource::kCPWS;
  if (s == "PWC") return DatasetSource::kPWC;
  if (s == "sPWC") return DatasetSource::kSPWC;
  throw ParseError("unknown dataset source '" + std::string(s) + "'");
}

json SenseSample::to_json() const {
  json j = {{"keyword", keyword},
            {"sense_label", sense_label},
            {"sentence", sentence},
            {"keyword_occurrence", keyword_occurrence},
            {"source", to_string(source)}};
  j["topic"] = topic ? json(*topic) : json(nullptr);
  return j;
}

SenseSample SenseSample::from_json(const json& j) {
  SenseSample s;
  s.keyword = j.at("keyword").get<std::string>();
  s.sense_label = j.at("sense_label").get<std::string>();
  s.sentence = j.at("sentence").get<std::string>();
  s.keyword_occurrence = j.value("keyword_occurrence", std::size_t{0});
  s.source = parse_dataset_source(j.at("source").get<std::string>());
  if (j.contains("topic") && j.at("topic").is_string()) s.topic = j.at("topic").get<std::string>();
  return s;
}

json DatasetStats::to_json() const {
  json spk = json::object(), sps = json::object();
  for (const auto& [k, v] : senses_per_keyword) spk[std::to_string(k)] = v;
  for (const auto& [k, v] : samples_per_sense) sps[std::to_string(k)] = v;
  return {{"total_samples", total_samples},
          {"unique_keywords", unique_keywords},
          {"senses_per_keyword", spk},
          {"samples_per_sense", sps}};
}

json JoinReport::to_json() const {
  return {{"cwi_rows", cwi_rows},
          {"secoda_rows", secoda_rows},
          {"matched_rows", matched_rows},
          {"unmatched_rows", unmatched_rows},
          {"single_sense_rows", single_sense_rows},
          {"keyword_missing_rows", keyword_missing_rows},
          {"conflicting_annotations", conflicting_annotations},
          {"kept_rows", kept_rows},
          {"kept_keywords", kept_keywords}};
}

std::string namespaced_label(const SenseSample& s) { return s.keyword + "::" + s.sense_label; }

void sort_samples(std::vector<SenseSample>& samples) {
  std::stable_sort(samples.begin(), samples.end(), [](const SenseSample& a, const SenseSample& b) {
    if (a.keyword != b.keyword) return a.keyword < b.keyword;
    return a.sentence < b.sentence;
  });
}

void validate_sample(const SenseSample& s) {
  if (s.sense_label.empty()) {
    throw ValidationError("sample for keyword '" + s.keyword + "' has an empty sense label");
  }
  const auto words = basic_tokenize(s.sentence);
  if (!find_keyword_word(words, s.keyword, s.keyword_occurrence)) {
    throw ValidationError("keyword '" + s.keyword + "' (occurrence " + std::to_string(s.keyword_occurrence) +
                          ") does not occur in sentence '" + s.sentence + "'");
  }
}

std::vector<SentencePair> make_pairs(std::span<const SenseSample> samples) {
  std::vector<std::string> order;
  std::map<std::string, std::vector<std::size_t>> by_keyword;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    auto [it, inserted] = by_keyword.try_emplace(samples[i].keyword);
    if (inserted) order.push_back(samples[i].keyword);
    it->second.push_back(i);
  }
  std::sort(order.begin(), order.end());
  std::vector<SentencePair> pairs;
  for (const auto& kw : order) {
    const auto& idx = by_keyword[kw];
    const std::size_t first = idx.front();
    for (std::size_t k = 1; k < idx.size(); ++k) {
      if (samples[idx[k]].sense_label != samples[first].sense_label) {
        pairs.push_back({kw, first, idx[k]});
        break;
      }
    }
  }
  return pairs;
}

std::vector<std::vector<std::string>> parse_delimited(std::string_view text, char delimiter,
                                                      const std::string& origin) {
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> row;
  std::string field;
  bool in_quotes = false;
  bool field_started = false;
  std::size_t line = 1;
  auto end_field = [&] {
    row.push_back(std::move(field));
    field.clear();
    field_started = false;
  };
  auto end_row = [&] {
    end_field();
    // Blank lines are skipped.
    if (!(row.size() == 1 && row[0].empty())) rows.push_back(std::move(row));
    row.clear();
  };
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (in_quotes) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          in_quotes = false;
        }
      } else {
        if (c == '\n') ++line;
        field.push_back(c);
      }
      continue;
    }
    if (c == '"' && !field_started) {
      in_quotes = true;
      field_started = true;
    } else if (c == delimiter) {
      end_field();
    } else if (c == '\r') {
      continue;
    } else if (c == '\n') {
      end_row();
      ++line;
    } else {
      field.push_back(c);
      field_started = true;
    }
  }
  if (in_quotes) throw ParseError(origin + ":" + std::to_string(line) + ": unterminated quoted field");
  if (field_started || !row.empty()) end_row();
  return rows;
}

namespace {

std::string lower_ascii(std::string s) {
  for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

// Uncased, accent-free, whitespace-insensitive key.
std::string normalize_key(std::string_view s) {
  std::string out;
  for (const auto& w : basic_tokenize(s)) {
    if (!out.empty()) out.push_back(' ');
    out += w;
  }
  return out;
}

// Byte offset of the `cp`-th code point (clamped to the string end).
std::size_t code_point_to_byte(std::string_view s, std::size_t cp) {
  const icu::UnicodeString u =
      icu::UnicodeString::fromUTF8(icu::StringPiece(s.data(), static_cast<int32_t>(s.size())));
  std::size_t count = 0;
  std::size_t bytes = 0;
  for (int32_t i = 0; i < u.length() && count < cp;) {
    const UChar32 c = u.char32At(i);
    i += U16_LENGTH(c);
    bytes += c < 0x80 ? 1 : c < 0x800 ? 2 : c < 0x10000 ? 3 : 4;
    ++count;
  }
  return std::min(bytes, s.size());
}

std::size_t find_column(const std::vector<std::string>& header, const std::vector<std::string>& names,
                        const std::string& origin, bool required) {
  for (const auto& name : names) {
    for (std::size_t i = 0; i < header.size(); ++i) {
      if (lower_ascii(trim(header[i])) == name) return i;
    }
  }
  if (required) {
    throw ParseError(origin + ": header lacks a column named any of: " + json(names).dump());
  }
  return std::string::npos;
}

}  // namespace

CpwsDataset load_cpws(const std::filesystem::path& path) {
  const std::string origin = path.string();
  const auto rows = parse_delimited(read_text_file(path), ',', origin);
  if (rows.empty()) throw ParseError(origin + ": empty file");
  const auto& header = rows.front();
  if (header.size() != 3 || lower_ascii(trim(header[0])) != "keyword" ||
      lower_ascii(trim(header[1])) != "sense" || lower_ascii(trim(header[2])) != "sentence") {
    throw ParseError(origin + ":1: expected header 'keyword,sense,sentence'");
  }
  CpwsDataset ds;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& row = rows[r];
    const std::string where = origin + ":" + std::to_string(r + 1);
    if (row.size() != 3) {
      throw ParseError(where + ": expected 3 fields, found " + std::to_string(row.size()));
    }
    SenseSample s;
    s.keyword = trim(row[0]);
    s.sense_label = trim(row[1]);
    s.sentence = trim(row[2]);
    s.source = DatasetSource::kCPWS;
    if (s.keyword.empty() || s.sentence.empty()) throw ParseError(where + ": empty keyword or sentence");
    try {
      validate_sample(s);
    } catch (const ValidationError& e) {
      throw ValidationError(where + ": " + e.what());
    }
    const auto pos = find_keyword_word(basic_tokenize(s.sentence), s.keyword, 0);
    if (pos && *pos != 1) {
      ds.warnings.push_back(where + ": keyword '" + s.keyword + "' is word " + std::to_string(*pos + 1) +
                            ", not the second word");
    }
    ds.samples.push_back(std::move(s));
  }
  sort_samples(ds.samples);
  ds.pairs = make_pairs(ds.samples);
  std::set<std::string> paired;
  for (const auto& p : ds.pairs) paired.insert(p.keyword);
  for (const auto& s : ds.samples) {
    if (!paired.count(s.keyword)) {
      ds.warnings.push_back("keyword '" + s.keyword + "' has no second sense; no pair formed");
      paired.insert(s.keyword);
    }
  }
  return ds;
}

PwcBuild build_pwc(std::span<const std::filesystem::path> cwi_paths, const std::filesystem::path& secoda_path,
                   const SecodaColumns& columns) {
  PwcBuild out;

  struct Annotation {
    std::string sense;
    std::optional<std::string> topic;
  };
  const std::string sorigin = secoda_path.string();
  const char sdelim = secoda_path.extension() == ".tsv" ? '\t' : ',';
  const auto srows = parse_delimited(read_text_file(secoda_path), sdelim, sorigin);
  if (srows.empty()) throw ParseError(sorigin + ": empty file");
  const auto& header = srows.front();
  const std::size_t c_sentence = find_column(header, columns.sentence, sorigin, true);
  const std::size_t c_target = find_column(header, columns.target, sorigin, true);
  const std::size_t c_sense = find_column(header, columns.sense, sorigin, true);
  const std::size_t c_topic = find_column(header, columns.topic, sorigin, false);

  std::unordered_map<std::string, Annotation> annotations;  // key: target '\x1f' sentence
  std::map<std::string, std::set<std::string>> senses_of;
  for (std::size_t r = 1; r < srows.size(); ++r) {
    const auto& row = srows[r];
    const std::size_t need = std::max({c_sentence, c_target, c_sense}) + 1;
    if (row.size() < need) {
      throw ParseError(sorigin + ":" + std::to_string(r + 1) + ": expected at least " + std::to_string(need) +
                       " fields, found " + std::to_string(row.size()));
    }
    ++out.report.secoda_rows;
    const std::string target = normalize_key(row[c_target]);
    const std::string sense = trim(row[c_sense]);
    if (target.empty() || sense.empty()) continue;
    senses_of[target].insert(sense);
    Annotation a{sense, std::nullopt};
    if (c_topic != std::string::npos && c_topic < row.size() && !trim(row[c_topic]).empty()) {
      a.topic = trim(row[c_topic]);
    }
    const std::string key = target + '\x1f' + normalize_key(row[c_sentence]);
    auto [it, inserted] = annotations.emplace(key, a);
    if (!inserted && it->second.sense != sense) ++out.report.conflicting_annotations;
  }

  std::set<std::string> kept_keywords;
  for (const auto& cwi_path : cwi_paths) {
    const std::string corigin = cwi_path.string();
    const auto crows = parse_delimited(read_text_file(cwi_path), '\t', corigin);
    for (std::size_t r = 0; r < crows.size(); ++r) {
      const auto& row = crows[r];
      const std::string where = corigin + ":" + std::to_string(r + 1);
      if (row.size() < 5) {
        throw ParseError(where + ": expected at least 5 tab-separated fields, found " + std::to_string(row.size()));
      }
      ++out.report.cwi_rows;
      const std::string& sentence = row[1];
      const std::string target = normalize_key(row[4]);
      std::size_t start = 0;
      try {
        start = std::stoul(row[2]);
      } catch (const std::exception&) {
        throw ParseError(where + ": start offset '" + row[2] + "' is not a number");
      }
      auto it = annotations.find(target + '\x1f' + normalize_key(sentence));
      if (target.empty() || it == annotations.end()) {
        ++out.report.unmatched_rows;
        continue;
      }
      ++out.report.matched_rows;
      if (senses_of[target].size() < 2) {
        ++out.report.single_sense_rows;
        continue;
      }
      const auto words = basic_tokenize(sentence);
      const auto prefix = basic_tokenize(std::string_view(sentence).substr(0, code_point_to_byte(sentence, start)));
      std::size_t occurrence = count_keyword(prefix, target);
      if (!find_keyword_word(words, target, occurrence)) {
        if (!find_keyword_word(words, target, 0)) {
          ++out.report.keyword_missing_rows;
          continue;
        }
        occurrence = 0;
      }
      SenseSample s;
      s.keyword = target;
      s.sense_label = it->second.sense;
      s.sentence = sentence;
      s.keyword_occurrence = occurrence;
      s.source = DatasetSource::kPWC;
      s.topic = it->second.topic;
      kept_keywords.insert(target);
      out.samples.push_back(std::move(s));
    }
  }
  // A token can have several senses in SeCoDa yet only one among the joined
  // rows; those keywords are dropped as well.
  std::map<std::string, std::set<std::string>> joined_senses;
  for (const auto& s : out.samples) joined_senses[s.keyword].insert(s.sense_label);
  const auto before = out.samples.size();
  std::erase_if(out.samples, [&](const SenseSample& s) { return joined_senses[s.keyword].size() < 2; });
  out.report.single_sense_rows += before - out.samples.size();
  kept_keywords.clear();
  for (const auto& s : out.samples) kept_keywords.insert(s.keyword);
  out.report.kept_rows = out.samples.size();
  out.report.kept_keywords = kept_keywords.size();
  if (out.samples.empty()) {
    throw ValidationError("PWC join produced no rows (" + out.report.to_json().dump() +
                          "); check the CWI/SeCoDa schemas and token normalization");
  }
  sort_samples(out.samples);
  return out;
}

std::vector<SenseSample> subset_spwc(std::span<const SenseSample> pwc, std::uint64_t seed) {
  std::map<std::string, std::map<std::string, std::vector<std::size_t>>> groups;
  for (std::size_t i = 0; i < pwc.size(); ++i) groups[pwc[i].keyword][pwc[i].sense_label].push_back(i);
  std::vector<SenseSample> out;
  for (const auto& [keyword, senses] : groups) {
    if (senses.size() < 2) continue;
    for (const auto& [sense, idx] : senses) {
      Rng rng(mix_seed(seed, fnv1a64(keyword + "::" + sense)));
      SenseSample s = pwc[idx[rng.below(idx.size())]];
      s.source = DatasetSource::kSPWC;
      out.push_back(std::move(s));
    }
  }
  sort_samples(out);
  return out;
}

DatasetStats stats(std::span<const SenseSample> samples) {
  DatasetStats st;
  st.total_samples = samples.size();
  std::map<std::string, std::map<std::string, std::size_t>> counts;
  for (const auto& s : samples) ++counts[s.keyword][s.sense_label];
  st.unique_keywords = counts.size();
  for (const auto& [kw, senses] : counts) {
    ++st.senses_per_keyword[senses.size()];
    for (const auto& [sense, n] : senses) ++st.samples_per_sense[n];
  }
  return st;
}

std::vector<SenseSample> read_jsonl(const std::filesystem::path& path) {
  const std::string text = read_text_file(path);
  std::vector<SenseSample> out;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    try {
      out.push_back(SenseSample::from_json(json::parse(line)));
    } catch (const json::exception& e) {
      throw ParseError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    } catch (const ParseError& e) {
      throw ParseError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

std::string to_jsonl(std::span<const SenseSample> samples) {
  std::string out;
  for (const auto& s : samples) out += s.to_json().dump() + "\n";
  return out;
}

void write_jsonl(const std::filesystem::path& path, std::span<const SenseSample> samples) {
  write_file_atomic(path, to_jsonl(samples));
}

std::vector<SenseSample> load_dataset(const std::filesystem::path& path) {
  if (path.extension() == ".csv") return load_cpws(path).samples;
  return read_jsonl(path);
}

}  // namespace ctxprobe
