#include "relx/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>
#include <unordered_set>

#include "relx/common.hpp"
#include "relx/csv.hpp"
#include "relx/preprocess.hpp"

namespace relx::corpus {

bool RelationSchema::has_label(const std::string& label) const {
  return std::find(labels.begin(), labels.end(), label) != labels.end();
}

bool RelationSchema::is_included(const std::string& label) const {
  return std::find(metric_included.begin(), metric_included.end(), label) !=
         metric_included.end();
}

int RelationSchema::label_index(const std::string& label) const {
  const auto it = std::find(labels.begin(), labels.end(), label);
  if (it == labels.end()) {
    throw DataError("unknown label '" + label + "' for schema " + name);
  }
  return static_cast<int>(it - labels.begin());
}

void RelationSchema::validate() const {
  if (labels.empty()) throw ConfigError("schema " + name + ": empty label set");
  std::unordered_set<std::string> seen;
  for (const auto& l : labels) {
    if (l.empty()) throw ConfigError("schema " + name + ": empty label");
    if (!seen.insert(l).second) {
      throw ConfigError("schema " + name + ": duplicate label '" + l + "'");
    }
  }
  for (const auto& l : metric_included) {
    if (!has_label(l)) {
      throw ConfigError("schema " + name + ": metric_included label '" + l +
                        "' not in label set");
    }
  }
  if (!null_label.empty() && !has_label(null_label)) {
    throw ConfigError("schema " + name + ": null label '" + null_label +
                      "' not in label set");
  }
  if (detection_enabled && null_label.empty()) {
    throw ConfigError("schema " + name +
                      ": detection requires a null label to collapse against");
  }
}

void validate_instance(const RelationInstance& inst, const RelationSchema& schema,
                       const std::string& where) {
  const auto fail = [&](const std::string& msg) {
    throw DataError(where.empty() ? msg : where + ": " + msg);
  };
  const int n = static_cast<int>(inst.tokens.size());
  if (n == 0) fail("instance '" + inst.id + "' has no tokens");
  for (const Span* s : {&inst.e1, &inst.e2}) {
    if (s->start < 0 || s->start > s->end || s->end >= n) {
      fail("span out of bounds");
    }
  }
  if (inst.e1.overlaps(inst.e2)) fail("entity spans overlap");
  if (!schema.has_label(inst.label)) fail("unknown label '" + inst.label + "'");
}

void validate_dataset(const Dataset& dataset) {
  dataset.schema.validate();
  const auto check_split = [&](const std::vector<RelationInstance>& split,
                               const char* split_name) {
    std::unordered_set<std::string> ids;
    for (const auto& inst : split) {
      validate_instance(inst, dataset.schema, std::string(split_name));
      if (!ids.insert(inst.id).second) {
        throw DataError(std::string(split_name) + ": duplicate id '" + inst.id + "'");
      }
    }
  };
  check_split(dataset.train, "train");
  if (dataset.test) check_split(*dataset.test, "test");
}

// ---------------------------------------------------------------------------
// Common CSV.

const char* const kCommonCsvHeader =
    "id,tokens,e1_start,e1_end,e2_start,e2_end,e1_type,e2_type,label";

namespace {

const std::vector<std::string>& header_fields() {
  static const std::vector<std::string> fields = split(kCommonCsvHeader, ',');
  return fields;
}

}  // namespace

std::vector<RelationInstance> read_common_csv(const std::string& path,
                                              const RelationSchema& schema) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open csv file: " + path);

  auto header = csv::read_record(in);
  if (!header || *header != header_fields()) {
    throw DataError(path + ": bad or missing header, expected '" +
                    std::string(kCommonCsvHeader) + "'");
  }

  std::vector<RelationInstance> out;
  std::unordered_set<std::string> ids;
  long row = 0;
  while (auto rec = csv::read_record(in)) {
    if (rec->size() == 1 && (*rec)[0].empty()) continue;  // blank line
    ++row;
    const std::string where = path + ", row " + std::to_string(row);
    if (rec->size() != header_fields().size()) {
      throw DataError(where + ": expected " + std::to_string(header_fields().size()) +
                      " fields, got " + std::to_string(rec->size()));
    }
    RelationInstance inst;
    inst.id = (*rec)[0];
    if (inst.id.empty()) throw DataError(where + ": empty id");
    for (const auto& tok : split((*rec)[1], ' ')) {
      if (!tok.empty()) inst.tokens.push_back(tok);
    }
    inst.e1.start = static_cast<int>(parse_long((*rec)[2], where));
    inst.e1.end = static_cast<int>(parse_long((*rec)[3], where));
    inst.e2.start = static_cast<int>(parse_long((*rec)[4], where));
    inst.e2.end = static_cast<int>(parse_long((*rec)[5], where));
    inst.e1_type = (*rec)[6];
    inst.e2_type = (*rec)[7];
    inst.label = (*rec)[8];
    inst.source = "csv";
    if (!ids.insert(inst.id).second) {
      throw DataError(where + ": duplicate id '" + inst.id + "'");
    }
    validate_instance(inst, schema, where);
    out.push_back(std::move(inst));
  }
  return out;
}

void write_common_csv(const std::vector<RelationInstance>& instances,
                      const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write csv file: " + path);
  out << kCommonCsvHeader << '\n';
  for (const auto& inst : instances) {
    for (const auto& tok : inst.tokens) {
      if (tok.find(' ') != std::string::npos) {
        throw DataError("instance '" + inst.id + "': token contains a space: '" +
                        tok + "'");
      }
    }
    csv::write_record(out, {inst.id, join(inst.tokens, " "),
                            std::to_string(inst.e1.start), std::to_string(inst.e1.end),
                            std::to_string(inst.e2.start), std::to_string(inst.e2.end),
                            inst.e1_type, inst.e2_type, inst.label});
  }
  if (!out.flush()) throw DataError("write failed: " + path);
}

// ---------------------------------------------------------------------------
// Built-in schemas.

RelationSchema semeval_schema() {
  RelationSchema s;
  s.name = "semeval";
  const std::vector<std::string> directional = {
      "Cause-Effect",   "Component-Whole",  "Content-Container",
      "Entity-Destination", "Entity-Origin", "Instrument-Agency",
      "Member-Collection", "Message-Topic", "Product-Producer"};
  for (const auto& base : directional) {
    s.labels.push_back(base + "(e1,e2)");
    s.labels.push_back(base + "(e2,e1)");
  }
  s.metric_included = s.labels;  // the 18 directional labels
  s.labels.push_back("Other");
  s.null_label = "Other";
  s.averaging = Averaging::kMacro;
  s.detection_enabled = false;
  s.concept_types = {"ENTITY"};
  return s;
}

RelationSchema ddi_schema() {
  RelationSchema s;
  s.name = "ddi";
  s.labels = {"advise", "effect", "int", "mechanism", "None"};
  s.null_label = "None";
  s.metric_included = s.labels;  // None participates in the official metric
  s.averaging = Averaging::kMacro;
  s.detection_enabled = true;
  s.concept_types = {"DRUG"};
  return s;
}

RelationSchema i2b2_schema() {
  RelationSchema s;
  s.name = "i2b2";
  s.labels = {"TrIP", "TrWP", "TrCP", "TrAP", "TrNAP", "TeRP", "TeCP", "PIP", "None"};
  s.null_label = "None";
  s.metric_included = {"TrIP", "TrWP", "TrCP", "TrAP", "TrNAP", "TeRP", "TeCP", "PIP"};
  s.averaging = Averaging::kMicro;
  s.detection_enabled = true;
  s.concept_types = {"PROBLEM", "TEST", "TREATMENT"};
  return s;
}

RelationSchema builtin_schema(const std::string& name) {
  if (name == "semeval") return semeval_schema();
  if (name == "ddi") return ddi_schema();
  if (name == "i2b2") return i2b2_schema();
  throw ConfigError("unknown builtin schema '" + name +
                    "' (expected semeval, ddi or i2b2)");
}

// ---------------------------------------------------------------------------
// SemEval adapter.

namespace {

struct TaggedSentence {
  std::string pre, ent1, mid, ent2, post;
  bool e1_first = true;
};

TaggedSentence split_tagged(const std::string& text, const std::string& where) {
  const auto find_one = [&](const std::string& tag) {
    const auto pos = text.find(tag);
    if (pos == std::string::npos) {
      throw DataError(where + ": missing entity tag " + tag);
    }
    if (text.find(tag, pos + 1) != std::string::npos) {
      throw DataError(where + ": repeated entity tag " + tag);
    }
    return pos;
  };
  const auto o1 = find_one("<e1>"), c1 = find_one("</e1>");
  const auto o2 = find_one("<e2>"), c2 = find_one("</e2>");
  if (c1 < o1 || c2 < o2) throw DataError(where + ": malformed entity tags");

  TaggedSentence out;
  out.e1_first = o1 < o2;
  const auto oa = out.e1_first ? o1 : o2, ca = out.e1_first ? c1 : c2;
  const auto ob = out.e1_first ? o2 : o1, cb = out.e1_first ? c2 : c1;
  if (ca + 5 > ob) throw DataError(where + ": nested or overlapping entity tags");
  const std::string first = text.substr(oa + 4, ca - oa - 4);
  const std::string second = text.substr(ob + 4, cb - ob - 4);
  out.pre = text.substr(0, oa);
  out.mid = text.substr(ca + 5, ob - (ca + 5));
  out.post = text.substr(cb + 5);
  out.ent1 = out.e1_first ? first : second;
  out.ent2 = out.e1_first ? second : first;
  return out;
}

bool blank(const std::string& line) {
  return line.find_first_not_of(" \t\r") == std::string::npos;
}

}  // namespace

std::vector<RelationInstance> parse_semeval_stream(std::istream& in,
                                                   const std::string& source_tag) {
  const RelationSchema schema = semeval_schema();
  std::vector<RelationInstance> out;
  std::string line;
  long block = 0;
  while (std::getline(in, line)) {
    if (blank(line)) continue;
    ++block;
    const std::string where = source_tag + ", block " + std::to_string(block);

    // Sentence line: <number> <tab> "<sentence>"
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto tab = line.find_first_of("\t ");
    if (tab == std::string::npos) throw DataError(where + ": unparseable sentence line");
    const std::string id = line.substr(0, tab);
    if (id.empty() || id.find_first_not_of("0123456789") != std::string::npos) {
      throw DataError(where + ": sentence line does not start with a number");
    }
    std::string text = line.substr(tab + 1);
    // Strip the surrounding quotes when present.
    if (text.size() >= 2 && text.front() == '"' && text.back() == '"') {
      text = text.substr(1, text.size() - 2);
    }

    std::string relation;
    if (!std::getline(in, relation)) throw DataError(where + ": missing relation line");
    if (!relation.empty() && relation.back() == '\r') relation.pop_back();
    if (blank(relation)) throw DataError(where + ": missing relation line");
    if (!schema.has_label(relation)) {
      throw DataError(where + ": unknown relation string '" + relation + "'");
    }

    // Optional comment line, discarded.
    const auto pos = in.tellg();
    std::string comment;
    if (std::getline(in, comment)) {
      if (comment.rfind("Comment", 0) != 0) {
        in.clear();
        in.seekg(pos);
      }
    }

    const TaggedSentence parts = split_tagged(text, where);
    RelationInstance inst;
    inst.id = id;
    inst.source = source_tag;
    inst.label = relation;
    inst.e1_type = "ENTITY";
    inst.e2_type = "ENTITY";

    // Tokenize segment-wise so the tagged substrings map to token ranges.
    const auto push = [&](const std::string& seg) {
      Span span{static_cast<int>(inst.tokens.size()), 0};
      for (auto& t : preprocess::tokenize_lower(seg)) inst.tokens.push_back(std::move(t));
      span.end = static_cast<int>(inst.tokens.size()) - 1;
      return span;
    };
    push(parts.pre);
    Span first_span = push(parts.e1_first ? parts.ent1 : parts.ent2);
    push(parts.mid);
    Span second_span = push(parts.e1_first ? parts.ent2 : parts.ent1);
    push(parts.post);
    inst.e1 = parts.e1_first ? first_span : second_span;
    inst.e2 = parts.e1_first ? second_span : first_span;
    if (inst.e1.end < inst.e1.start || inst.e2.end < inst.e2.start) {
      throw DataError(where + ": entity tokenizes to nothing");
    }
    validate_instance(inst, schema, where);
    out.push_back(std::move(inst));
  }
  return out;
}

Dataset adapt_semeval(const std::string& train_path, const std::string& test_path) {
  Dataset out;
  out.schema = semeval_schema();
  std::ifstream train_in(train_path, std::ios::binary);
  if (!train_in) throw DataError("cannot open semeval file: " + train_path);
  out.train = parse_semeval_stream(train_in, "semeval");
  if (!test_path.empty()) {
    std::ifstream test_in(test_path, std::ios::binary);
    if (!test_in) throw DataError("cannot open semeval file: " + test_path);
    out.test = parse_semeval_stream(test_in, "semeval");
  }
  validate_dataset(out);
  return out;
}

// ---------------------------------------------------------------------------
// Synthetic corpora.

namespace {

const std::vector<std::string>& filler_pool() {
  static const std::vector<std::string> pool = {
      "the", "a", "of", "to", "in", "on", "with", "for", "and", "as"};
  return pool;
}

const std::vector<std::string>& surface_pool() {
  static const std::vector<std::string> pool = {
      "alpha", "beta", "gamma", "delta", "epsilon", "zeta", "eta", "theta"};
  return pool;
}

std::vector<RelationInstance> synth_split(const SynthSpec& spec, int count,
                                          const std::string& split_name, Rng& rng,
                                          long* unique_counter) {
  std::vector<RelationInstance> out;
  out.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    const int cls = i % spec.classes;
    RelationInstance inst;
    inst.id = "synth-" + split_name + "-" + std::to_string(i);
    inst.source = "synth";
    inst.label = "rel" + std::to_string(cls);

    const auto fillers = [&](int lo, int hi) {
      const auto n = rng.uniform_int(lo, hi);
      for (int k = 0; k < n; ++k) {
        inst.tokens.push_back(
            filler_pool()[static_cast<std::size_t>(rng.uniform_int(
                0, static_cast<std::int64_t>(filler_pool().size()) - 1))]);
      }
    };

    std::string surf1, surf2;
    if (spec.mode == SynthMode::kTrigger) {
      surf1 = surface_pool()[static_cast<std::size_t>(
          rng.uniform_int(0, static_cast<std::int64_t>(surface_pool().size()) - 1))];
      surf2 = surface_pool()[static_cast<std::size_t>(
          rng.uniform_int(0, static_cast<std::int64_t>(surface_pool().size()) - 1))];
      inst.e1_type = "THING";
      inst.e2_type = "THING";
    } else {
      surf1 = "q" + std::to_string((*unique_counter)++) + "a";
      surf2 = "q" + std::to_string((*unique_counter)++) + "b";
      inst.e1_type = "TYPE" + std::to_string(cls);
      inst.e2_type = "TYPE" + std::to_string((cls + 1) % spec.classes);
    }

    fillers(0, 2);
    inst.e1.start = inst.e1.end = static_cast<int>(inst.tokens.size());
    inst.tokens.push_back(surf1);
    fillers(0, 2);
    if (spec.mode == SynthMode::kTrigger) {
      inst.tokens.push_back("link" + std::to_string(cls));
    }
    fillers(0, 2);
    inst.e2.start = inst.e2.end = static_cast<int>(inst.tokens.size());
    inst.tokens.push_back(surf2);
    fillers(0, 2);
    out.push_back(std::move(inst));
  }
  return out;
}

}  // namespace

Dataset synth_corpus(const SynthSpec& spec) {
  if (spec.classes < 2) throw ConfigError("synth corpus needs at least 2 classes");
  if (spec.size < spec.classes) {
    throw ConfigError("synth corpus size must be >= number of classes");
  }
  Dataset out;
  out.schema.name = "synth";
  for (int c = 0; c < spec.classes; ++c) {
    out.schema.labels.push_back("rel" + std::to_string(c));
  }
  out.schema.metric_included = out.schema.labels;
  out.schema.averaging = Averaging::kMacro;
  out.schema.detection_enabled = false;
  if (spec.mode == SynthMode::kTrigger) {
    out.schema.concept_types = {"THING"};
  } else {
    for (int c = 0; c < spec.classes; ++c) {
      out.schema.concept_types.push_back("TYPE" + std::to_string(c));
    }
  }

  Rng rng = derived_rng(spec.seed, RngStream::kSynth);
  long unique_counter = 0;
  out.train = synth_split(spec, spec.size, "train", rng, &unique_counter);
  const int test_size = spec.test_size >= 0 ? spec.test_size : spec.size / 5;
  if (test_size > 0) {
    out.test = synth_split(spec, test_size, "test", rng, &unique_counter);
  }
  validate_dataset(out);
  return out;
}

}  // namespace relx::corpus
