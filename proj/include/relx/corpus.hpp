#ifndef RELX_CORPUS_HPP
#define RELX_CORPUS_HPP

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace relx::corpus {

// Inclusive token-index range.
struct Span {
  int start = 0;
  int end = 0;

  bool contains(int i) const { return i >= start && i <= end; }
  int length() const { return end - start + 1; }
  bool overlaps(const Span& other) const {
    return start <= other.end && other.start <= end;
  }
  bool operator==(const Span&) const = default;
};

// One sentence with two marked concept spans and a relation label. The unit
// flowing through every pipeline stage.
struct RelationInstance {
  std::string id;
  std::vector<std::string> tokens;
  Span e1;
  Span e2;
  std::string e1_type;  // empty when absent
  std::string e2_type;
  std::string label;
  std::string source;

  bool operator==(const RelationInstance&) const = default;
};

enum class Averaging { kMacro, kMicro };

// Label set and per-dataset evaluation policy.
struct RelationSchema {
  std::string name;
  std::vector<std::string> labels;           // ordered
  std::string null_label;                    // empty when the schema has none
  std::vector<std::string> metric_included;  // subset of labels
  Averaging averaging = Averaging::kMacro;
  bool detection_enabled = false;
  std::vector<std::string> concept_types;

  bool has_null() const { return !null_label.empty(); }
  bool has_label(const std::string& label) const;
  bool is_included(const std::string& label) const;
  // Index into `labels`; throws DataError for unknown labels.
  int label_index(const std::string& label) const;

  // Checks the schema's own invariants (metric_included subset, null
  // membership, detection implies a null label).
  void validate() const;
};

struct Dataset {
  RelationSchema schema;
  std::vector<RelationInstance> train;
  std::optional<std::vector<RelationInstance>> test;
};

// Throws DataError when a span is out of bounds, the spans overlap, or the
// label is not in the schema. `where` prefixes the message.
void validate_instance(const RelationInstance& inst, const RelationSchema& schema,
                       const std::string& where = {});
void validate_dataset(const Dataset& dataset);

// ---------------------------------------------------------------------------
// Common CSV interchange format.
// Header: id,tokens,e1_start,e1_end,e2_start,e2_end,e1_type,e2_type,label
// `tokens` is the space-joined token sequence. RFC 4180 quoting, UTF-8.

extern const char* const kCommonCsvHeader;

std::vector<RelationInstance> read_common_csv(const std::string& path,
                                              const RelationSchema& schema);
void write_common_csv(const std::vector<RelationInstance>& instances,
                      const std::string& path);

// ---------------------------------------------------------------------------
// Built-in dataset schemas.

RelationSchema semeval_schema();
RelationSchema ddi_schema();
RelationSchema i2b2_schema();
// Lookup by name ("semeval", "ddi", "i2b2"); throws ConfigError otherwise.
RelationSchema builtin_schema(const std::string& name);

// ---------------------------------------------------------------------------
// SemEval-2010 task 8 adapter. Input blocks look like
//   8 "The <e1>pollen</e1> caused the <e2>allergy</e2>."
//   Cause-Effect(e1,e2)
//   Comment: ...
// Entity tags are stripped, tagged spans become token spans, concept types
// are set to ENTITY. Comment lines are discarded.
Dataset adapt_semeval(const std::string& train_path,
                      const std::string& test_path = {});

// Parses one stream of blocks (exposed for tests).
std::vector<RelationInstance> parse_semeval_stream(std::istream& in,
                                                   const std::string& source_tag);

// ---------------------------------------------------------------------------
// Deterministic synthetic corpora for desk-scale experiments.
//
// kTrigger: each class is realized by a distinct trigger token between the
//   two entities, so the label is learnable from the surface form.
// kTyped: the label is a pure function of the two concept types while entity
//   surface forms are unique per instance, so entity blinding is required to
//   make the mapping learnable.
enum class SynthMode { kTrigger, kTyped };

struct SynthSpec {
  int size = 0;      // training instances
  int classes = 0;   // >= 2
  std::uint64_t seed = 0;
  SynthMode mode = SynthMode::kTrigger;
  int test_size = -1;  // -1 -> size / 5
};

Dataset synth_corpus(const SynthSpec& spec);

}  // namespace relx::corpus

#endif  // RELX_CORPUS_HPP
