#ifndef RELX_PREPROCESS_HPP
#define RELX_PREPROCESS_HPP

#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include "relx/corpus.hpp"

namespace relx::preprocess {

enum class VariantKind {
  kOriginal,
  kEntityBlind,
  kPunctDigit,
  kPunctDigitStop,
  kNerBlind,
};

VariantKind variant_from_name(const std::string& name);
std::string variant_name(VariantKind kind);

// External NER spans for one instance. Spans refer to the instance's current
// token sequence and must not overlap each other.
struct NerAnnotation {
  std::string id;
  std::vector<std::pair<corpus::Span, std::string>> entities;
};

struct PreprocessVariant {
  VariantKind kind = VariantKind::kOriginal;
  std::set<std::string> stop_list;  // required nonempty for kPunctDigitStop
  std::unordered_map<std::string, NerAnnotation> ner;  // sidecar, by id
  bool ner_typed = true;  // false replaces every NER span with "Entity"
  std::string digit_symbol = "#";
};

// Deterministic rule tokenizer: split on whitespace, detach leading and
// trailing punctuation as single-character tokens, keep intra-token
// punctuation (hyphens, slashes, apostrophes), lowercase ASCII letters.
std::vector<std::string> tokenize_lower(const std::string& raw);

// The classic 127-word English stop list.
const std::set<std::string>& default_stop_list();
std::set<std::string> load_stop_list(const std::string& path);

// Pure per-instance transforms. Each preserves instance validity: the two
// argument spans survive, re-indexed, and token order is preserved.
corpus::RelationInstance entity_blind(const corpus::RelationInstance& inst);
corpus::RelationInstance punct_digit_normalize(const corpus::RelationInstance& inst,
                                               const std::string& digit_symbol = "#");
corpus::RelationInstance stop_remove(const corpus::RelationInstance& inst,
                                     const std::set<std::string>& stop_list);
corpus::RelationInstance ner_blind(const corpus::RelationInstance& inst,
                                   const NerAnnotation& ann, bool typed);

// Applies the configured variant to one instance.
corpus::RelationInstance apply_variant(const corpus::RelationInstance& inst,
                                       const PreprocessVariant& variant);
std::vector<corpus::RelationInstance> apply_variant(
    const std::vector<corpus::RelationInstance>& instances,
    const PreprocessVariant& variant);

// NER sidecar: JSON-lines, one record per instance:
//   {"id": "...", "entities": [{"start": i, "end": j, "type": "PERSON"}]}
std::unordered_map<std::string, NerAnnotation> load_ner_sidecar(const std::string& path);
void write_ner_sidecar(const std::vector<NerAnnotation>& annotations,
                       const std::string& path);

// Toy tagger for tests and desk-scale runs: marks tokens found in a small
// gazetteer, plus alphabetic tokens longer than three characters that are
// outside the gold spans, as single-token entities.
NerAnnotation toy_ner_tagger(const corpus::RelationInstance& inst);

}  // namespace relx::preprocess

#endif  // RELX_PREPROCESS_HPP
