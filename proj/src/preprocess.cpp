#include "relx/preprocess.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>

#include <json.hpp>

#include "relx/common.hpp"

namespace relx::preprocess {

using corpus::RelationInstance;
using corpus::Span;

VariantKind variant_from_name(const std::string& name) {
  if (name == "original") return VariantKind::kOriginal;
  if (name == "entity_blind") return VariantKind::kEntityBlind;
  if (name == "punct_digit") return VariantKind::kPunctDigit;
  if (name == "punct_digit_stop") return VariantKind::kPunctDigitStop;
  if (name == "ner_blind") return VariantKind::kNerBlind;
  throw ConfigError("unknown preprocessing variant '" + name + "'");
}

std::string variant_name(VariantKind kind) {
  switch (kind) {
    case VariantKind::kOriginal: return "original";
    case VariantKind::kEntityBlind: return "entity_blind";
    case VariantKind::kPunctDigit: return "punct_digit";
    case VariantKind::kPunctDigitStop: return "punct_digit_stop";
    case VariantKind::kNerBlind: return "ner_blind";
  }
  return "?";
}

// ---------------------------------------------------------------------------
// Tokenizer.

namespace {

bool is_ascii_punct(unsigned char c) { return c < 128 && std::ispunct(c); }
bool is_ascii_space(unsigned char c) { return c < 128 && std::isspace(c); }

}  // namespace

std::vector<std::string> tokenize_lower(const std::string& raw) {
  std::vector<std::string> tokens;
  std::size_t i = 0;
  const std::size_t n = raw.size();
  while (i < n) {
    while (i < n && is_ascii_space(static_cast<unsigned char>(raw[i]))) ++i;
    std::size_t j = i;
    while (j < n && !is_ascii_space(static_cast<unsigned char>(raw[j]))) ++j;
    if (j == i) break;
    std::string_view chunk(raw.data() + i, j - i);

    std::size_t lo = 0, hi = chunk.size();
    while (lo < hi && is_ascii_punct(static_cast<unsigned char>(chunk[lo]))) {
      tokens.emplace_back(1, chunk[lo]);
      ++lo;
    }
    std::size_t trail = hi;
    while (trail > lo && is_ascii_punct(static_cast<unsigned char>(chunk[trail - 1]))) {
      --trail;
    }
    if (trail > lo) {
      tokens.push_back(lowercase_ascii(chunk.substr(lo, trail - lo)));
    }
    for (std::size_t k = trail; k < hi; ++k) tokens.emplace_back(1, chunk[k]);
    i = j;
  }
  return tokens;
}

// ---------------------------------------------------------------------------
// Stop list.

const std::set<std::string>& default_stop_list() {
  static const std::set<std::string> list = {
      "i", "me", "my", "myself", "we", "our", "ours", "ourselves", "you", "your",
      "yours", "yourself", "yourselves", "he", "him", "his", "himself", "she",
      "her", "hers", "herself", "it", "its", "itself", "they", "them", "their",
      "theirs", "themselves", "what", "which", "who", "whom", "this", "that",
      "these", "those", "am", "is", "are", "was", "were", "be", "been", "being",
      "have", "has", "had", "having", "do", "does", "did", "doing", "a", "an",
      "the", "and", "but", "if", "or", "because", "as", "until", "while", "of",
      "at", "by", "for", "with", "about", "against", "between", "into",
      "through", "during", "before", "after", "above", "below", "to", "from",
      "up", "down", "in", "out", "on", "off", "over", "under", "again",
      "further", "then", "once", "here", "there", "when", "where", "why", "how",
      "all", "any", "both", "each", "few", "more", "most", "other", "some",
      "such", "no", "nor", "not", "only", "own", "same", "so", "than", "too",
      "very", "s", "t", "can", "will", "just", "don", "should", "now"};
  return list;
}

std::set<std::string> load_stop_list(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open stop list: " + path);
  std::set<std::string> out;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) out.insert(line);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Span re-indexing helpers.

namespace {

// Keeps tokens where keep[i] is true; both argument spans are forced kept.
// Returns the instance with spans re-indexed.
RelationInstance filter_tokens(const RelationInstance& inst, std::vector<bool> keep) {
  for (int i = inst.e1.start; i <= inst.e1.end; ++i) keep[static_cast<std::size_t>(i)] = true;
  for (int i = inst.e2.start; i <= inst.e2.end; ++i) keep[static_cast<std::size_t>(i)] = true;

  RelationInstance out = inst;
  out.tokens.clear();
  std::vector<int> remap(inst.tokens.size(), -1);
  for (std::size_t i = 0; i < inst.tokens.size(); ++i) {
    if (keep[i]) {
      remap[i] = static_cast<int>(out.tokens.size());
      out.tokens.push_back(inst.tokens[i]);
    }
  }
  out.e1 = {remap[static_cast<std::size_t>(inst.e1.start)],
            remap[static_cast<std::size_t>(inst.e1.end)]};
  out.e2 = {remap[static_cast<std::size_t>(inst.e2.start)],
            remap[static_cast<std::size_t>(inst.e2.end)]};
  return out;
}

// Replaces each given span by a single token; spans must be sorted,
// non-overlapping and in-bounds. Argument spans are re-indexed through the
// rewrite (they may themselves be collapsed when listed).
RelationInstance collapse_spans(const RelationInstance& inst,
                                const std::vector<std::pair<Span, std::string>>& collapses) {
  RelationInstance out = inst;
  out.tokens.clear();
  const int n = static_cast<int>(inst.tokens.size());
  std::vector<int> remap(static_cast<std::size_t>(n), -1);
  int i = 0;
  for (const auto& [span, replacement] : collapses) {
    while (i < span.start) {
      remap[static_cast<std::size_t>(i)] = static_cast<int>(out.tokens.size());
      out.tokens.push_back(inst.tokens[static_cast<std::size_t>(i)]);
      ++i;
    }
    const int idx = static_cast<int>(out.tokens.size());
    out.tokens.push_back(replacement);
    for (int j = span.start; j <= span.end; ++j) remap[static_cast<std::size_t>(j)] = idx;
    i = span.end + 1;
  }
  while (i < n) {
    remap[static_cast<std::size_t>(i)] = static_cast<int>(out.tokens.size());
    out.tokens.push_back(inst.tokens[static_cast<std::size_t>(i)]);
    ++i;
  }
  out.e1 = {remap[static_cast<std::size_t>(inst.e1.start)],
            remap[static_cast<std::size_t>(inst.e1.end)]};
  out.e2 = {remap[static_cast<std::size_t>(inst.e2.start)],
            remap[static_cast<std::size_t>(inst.e2.end)]};
  return out;
}

bool punct_only(const std::string& tok) {
  if (tok.empty()) return false;
  return std::all_of(tok.begin(), tok.end(), [](char c) {
    return is_ascii_punct(static_cast<unsigned char>(c));
  });
}

std::string normalize_digit_runs(const std::string& tok, const std::string& symbol) {
  std::string out;
  bool in_run = false;
  for (char c : tok) {
    if (std::isdigit(static_cast<unsigned char>(c))) {
      if (!in_run) out += symbol;
      in_run = true;
    } else {
      out += c;
      in_run = false;
    }
  }
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// Variants.

RelationInstance entity_blind(const RelationInstance& inst) {
  if (inst.e1_type.empty() || inst.e2_type.empty()) {
    throw DataError("entity_blind: instance '" + inst.id +
                    "' is missing a concept type");
  }
  std::vector<std::pair<Span, std::string>> collapses = {{inst.e1, inst.e1_type},
                                                         {inst.e2, inst.e2_type}};
  std::sort(collapses.begin(), collapses.end(),
            [](const auto& a, const auto& b) { return a.first.start < b.first.start; });
  return collapse_spans(inst, collapses);
}

RelationInstance punct_digit_normalize(const RelationInstance& inst,
                                       const std::string& digit_symbol) {
  std::vector<bool> keep(inst.tokens.size());
  for (std::size_t i = 0; i < inst.tokens.size(); ++i) {
    keep[i] = !punct_only(inst.tokens[i]);
  }
  RelationInstance out = filter_tokens(inst, std::move(keep));
  for (auto& tok : out.tokens) tok = normalize_digit_runs(tok, digit_symbol);
  return out;
}

RelationInstance stop_remove(const RelationInstance& inst,
                             const std::set<std::string>& stop_list) {
  std::vector<bool> keep(inst.tokens.size());
  for (std::size_t i = 0; i < inst.tokens.size(); ++i) {
    keep[i] = stop_list.count(inst.tokens[i]) == 0;
  }
  return filter_tokens(inst, std::move(keep));
}

RelationInstance ner_blind(const RelationInstance& inst, const NerAnnotation& ann,
                           bool typed) {
  const int n = static_cast<int>(inst.tokens.size());
  std::vector<std::pair<Span, std::string>> collapses;
  for (const auto& [span, type] : ann.entities) {
    if (span.start < 0 || span.start > span.end || span.end >= n) {
      throw DataError("ner_blind: annotation span out of bounds for instance '" +
                      inst.id + "'");
    }
    // Gold argument spans take precedence: an annotation that collides with
    // one is applied only when it matches the argument span exactly.
    const bool hits_e1 = span.overlaps(inst.e1);
    const bool hits_e2 = span.overlaps(inst.e2);
    if ((hits_e1 && !(span == inst.e1)) || (hits_e2 && !(span == inst.e2))) {
      continue;
    }
    collapses.emplace_back(span, typed ? type : std::string("Entity"));
  }
  std::sort(collapses.begin(), collapses.end(),
            [](const auto& a, const auto& b) { return a.first.start < b.first.start; });
  for (std::size_t i = 1; i < collapses.size(); ++i) {
    if (collapses[i - 1].first.end >= collapses[i].first.start) {
      throw DataError("ner_blind: overlapping annotation spans for instance '" +
                      inst.id + "'");
    }
  }
  return collapse_spans(inst, collapses);
}

RelationInstance apply_variant(const RelationInstance& inst,
                               const PreprocessVariant& variant) {
  switch (variant.kind) {
    case VariantKind::kOriginal:
      return inst;
    case VariantKind::kEntityBlind:
      return entity_blind(inst);
    case VariantKind::kPunctDigit:
      return punct_digit_normalize(inst, variant.digit_symbol);
    case VariantKind::kPunctDigitStop: {
      if (variant.stop_list.empty()) {
        throw ConfigError("punct_digit_stop requires a nonempty stop list");
      }
      return stop_remove(punct_digit_normalize(inst, variant.digit_symbol),
                         variant.stop_list);
    }
    case VariantKind::kNerBlind: {
      const auto it = variant.ner.find(inst.id);
      if (it == variant.ner.end()) return inst;
      return ner_blind(inst, it->second, variant.ner_typed);
    }
  }
  throw ConfigError("unhandled preprocessing variant");
}

std::vector<RelationInstance> apply_variant(
    const std::vector<RelationInstance>& instances, const PreprocessVariant& variant) {
  std::vector<RelationInstance> out;
  out.reserve(instances.size());
  for (const auto& inst : instances) out.push_back(apply_variant(inst, variant));
  return out;
}

// ---------------------------------------------------------------------------
// NER sidecar.

std::unordered_map<std::string, NerAnnotation> load_ner_sidecar(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open NER sidecar: " + path);
  std::unordered_map<std::string, NerAnnotation> out;
  std::string line;
  long line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json rec;
    try {
      rec = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw DataError(path + ", line " + std::to_string(line_no) +
                      ": malformed JSON: " + e.what());
    }
    if (!rec.contains("id") || !rec["id"].is_string()) {
      throw DataError(path + ", line " + std::to_string(line_no) + ": missing id");
    }
    NerAnnotation ann;
    ann.id = rec["id"].get<std::string>();
    if (rec.contains("entities")) {
      for (const auto& e : rec["entities"]) {
        if (!e.contains("start") || !e.contains("end")) {
          throw DataError(path + ", line " + std::to_string(line_no) +
                          ": entity missing start/end");
        }
        Span span{e["start"].get<int>(), e["end"].get<int>()};
        const std::string type = e.value("type", std::string("Entity"));
        ann.entities.emplace_back(span, type);
      }
    }
    if (!out.emplace(ann.id, std::move(ann)).second) {
      throw DataError(path + ", line " + std::to_string(line_no) + ": duplicate id");
    }
  }
  return out;
}

void write_ner_sidecar(const std::vector<NerAnnotation>& annotations,
                       const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write NER sidecar: " + path);
  for (const auto& ann : annotations) {
    nlohmann::json rec;
    rec["id"] = ann.id;
    rec["entities"] = nlohmann::json::array();
    for (const auto& [span, type] : ann.entities) {
      rec["entities"].push_back({{"start", span.start}, {"end", span.end}, {"type", type}});
    }
    out << rec.dump() << '\n';
  }
  if (!out.flush()) throw DataError("write failed: " + path);
}

// ---------------------------------------------------------------------------
// Toy tagger.

NerAnnotation toy_ner_tagger(const corpus::RelationInstance& inst) {
  static const std::unordered_map<std::string, std::string> gazetteer = {
      {"john", "PERSON"},   {"mary", "PERSON"},        {"acme", "ORGANIZATION"},
      {"globex", "ORGANIZATION"}, {"london", "LOCATION"}, {"paris", "LOCATION"},
      {"alpha", "MISC"},    {"beta", "MISC"},          {"gamma", "MISC"},
      {"delta", "MISC"},    {"epsilon", "MISC"},       {"zeta", "MISC"},
      {"eta", "MISC"},      {"theta", "MISC"}};
  NerAnnotation ann;
  ann.id = inst.id;
  // The two argument spans are always recognized.
  const auto arg_type = [&](const Span& span, const std::string& concept_type) {
    const auto it = gazetteer.find(inst.tokens[static_cast<std::size_t>(span.start)]);
    if (it != gazetteer.end()) return it->second;
    return concept_type.empty() ? std::string("MISC") : concept_type;
  };
  std::vector<std::pair<Span, std::string>> spans = {
      {inst.e1, arg_type(inst.e1, inst.e1_type)},
      {inst.e2, arg_type(inst.e2, inst.e2_type)}};
  for (int i = 0; i < static_cast<int>(inst.tokens.size()); ++i) {
    if (inst.e1.contains(i) || inst.e2.contains(i)) continue;
    const auto it = gazetteer.find(inst.tokens[static_cast<std::size_t>(i)]);
    if (it != gazetteer.end()) {
      spans.push_back({Span{i, i}, it->second});
    }
  }
  std::sort(spans.begin(), spans.end(),
            [](const auto& a, const auto& b) { return a.first.start < b.first.start; });
  ann.entities = std::move(spans);
  return ann;
}

}  // namespace relx::preprocess
