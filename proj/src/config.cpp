#include "relx/config.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "relx/common.hpp"

namespace relx::config {

namespace {

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

bool parse_bool(const std::string& v, const std::string& what) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError(what + ": expected a boolean, got '" + v + "'");
}

std::vector<std::string> parse_list(const std::string& v) {
  std::vector<std::string> out;
  for (const auto& part : split(v, ',')) {
    const std::string t = trim(part);
    if (!t.empty()) out.push_back(t);
  }
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// INI document.

IniFile IniFile::parse_text(const std::string& text, const std::string& origin) {
  IniFile ini;
  std::istringstream in(text);
  std::string line;
  std::string section;
  long line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#' || t[0] == ';') continue;
    if (t.front() == '[') {
      if (t.back() != ']') {
        throw ConfigError(origin + ", line " + std::to_string(line_no) +
                          ": malformed section header");
      }
      section = trim(t.substr(1, t.size() - 2));
      if (section.empty()) {
        throw ConfigError(origin + ", line " + std::to_string(line_no) + ": empty section");
      }
      if (!std::any_of(ini.sections.begin(), ini.sections.end(),
                       [&](const auto& s) { return s.first == section; })) {
        ini.sections.emplace_back(section, Section{});
      }
      continue;
    }
    const auto eq = t.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(origin + ", line " + std::to_string(line_no) +
                        ": expected key = value");
    }
    if (section.empty()) {
      throw ConfigError(origin + ", line " + std::to_string(line_no) +
                        ": key outside any [section]");
    }
    ini.set(section, trim(t.substr(0, eq)), trim(t.substr(eq + 1)));
  }
  return ini;
}

IniFile IniFile::parse_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_text(buf.str(), path);
}

std::string IniFile::render() const {
  std::string out;
  for (const auto& [name, section] : sections) {
    out += "[" + name + "]\n";
    for (const auto& [key, value] : section) out += key + " = " + value + "\n";
    out += "\n";
  }
  return out;
}

bool IniFile::has(const std::string& section, const std::string& key) const {
  for (const auto& [name, sec] : sections) {
    if (name != section) continue;
    for (const auto& [k, v] : sec) {
      if (k == key) return true;
    }
  }
  return false;
}

std::string IniFile::get(const std::string& section, const std::string& key,
                         const std::string& fallback) const {
  for (const auto& [name, sec] : sections) {
    if (name != section) continue;
    for (const auto& [k, v] : sec) {
      if (k == key) return v;
    }
  }
  return fallback;
}

void IniFile::set(const std::string& section, const std::string& key,
                  const std::string& value) {
  for (auto& [name, sec] : sections) {
    if (name != section) continue;
    for (auto& [k, v] : sec) {
      if (k == key) {
        v = value;
        return;
      }
    }
    sec.emplace_back(key, value);
    return;
  }
  sections.emplace_back(section, Section{{key, value}});
}

// ---------------------------------------------------------------------------
// Schema section.

corpus::RelationSchema schema_from_ini(const IniFile& ini, const std::string& origin) {
  corpus::RelationSchema s;
  s.name = ini.get("schema", "name", "custom");
  s.labels = parse_list(ini.get("schema", "labels", ""));
  if (s.labels.empty()) throw ConfigError(origin + ": [schema] labels is required");
  s.null_label = ini.get("schema", "null_label", "");
  const std::string included = ini.get("schema", "metric_included", "");
  s.metric_included = included.empty() ? s.labels : parse_list(included);
  const std::string avg = ini.get("schema", "averaging", "macro");
  if (avg == "macro") {
    s.averaging = corpus::Averaging::kMacro;
  } else if (avg == "micro") {
    s.averaging = corpus::Averaging::kMicro;
  } else {
    throw ConfigError(origin + ": [schema] averaging must be macro or micro");
  }
  s.detection_enabled = parse_bool(ini.get("schema", "detection", "false"),
                                   origin + ": [schema] detection");
  s.concept_types = parse_list(ini.get("schema", "concept_types", ""));
  s.validate();
  return s;
}

void schema_to_ini(const corpus::RelationSchema& schema, IniFile& ini) {
  ini.set("schema", "name", schema.name);
  ini.set("schema", "labels", join(schema.labels, ","));
  ini.set("schema", "null_label", schema.null_label);
  ini.set("schema", "metric_included", join(schema.metric_included, ","));
  ini.set("schema", "averaging",
          schema.averaging == corpus::Averaging::kMacro ? "macro" : "micro");
  ini.set("schema", "detection", schema.detection_enabled ? "true" : "false");
  ini.set("schema", "concept_types", join(schema.concept_types, ","));
}

// ---------------------------------------------------------------------------
// RunConfig.

namespace {

// Known keys per section; anything else is rejected.
const std::vector<std::pair<std::string, std::vector<std::string>>>& known_keys() {
  static const std::vector<std::pair<std::string, std::vector<std::string>>> keys = {
      {"data", {"train", "test", "schema", "schema_file"}},
      {"schema",
       {"name", "labels", "null_label", "metric_included", "averaging", "detection",
        "concept_types"}},
      {"preprocess", {"variant", "stop_list", "ner_sidecar", "ner_typed", "digit_symbol"}},
      {"features",
       {"word_vectors", "word_dim", "pos_dim", "max_dist", "contextual",
        "contextual_path", "oov_range"}},
      {"model",
       {"pooling", "filters", "windows", "gamma", "margin_pos", "margin_neg",
        "score_null", "null_threshold", "nonlinearity", "freeze_word_vectors"}},
      {"train",
       {"epochs", "batch_size", "lr", "momentum", "early_stop", "patience", "seed",
        "dev_fraction"}},
      {"experiment", {"folds", "trials", "alpha", "pass2_cap", "jobs"}},
  };
  return keys;
}

void check_known(const IniFile& ini) {
  std::vector<std::string> bad;
  for (const auto& [section, entries] : ini.sections) {
    const auto it = std::find_if(known_keys().begin(), known_keys().end(),
                                 [&](const auto& s) { return s.first == section; });
    if (it == known_keys().end()) {
      bad.push_back("[" + section + "] (unknown section)");
      continue;
    }
    for (const auto& [key, value] : entries) {
      if (std::find(it->second.begin(), it->second.end(), key) == it->second.end()) {
        bad.push_back(section + "." + key);
      }
    }
  }
  if (!bad.empty()) {
    throw ConfigError("unknown config keys: " + join(bad, ", "));
  }
}

void require_file(std::vector<std::string>& missing, const std::string& path,
                  const std::string& what) {
  if (path.empty()) return;
  if (!std::filesystem::exists(path)) missing.push_back(what + " = " + path);
}

}  // namespace

RunConfig RunConfig::from_ini(IniFile ini) {
  check_known(ini);

  // Pull a schema_file's [schema] section inline so snapshots are
  // self-contained.
  const std::string schema_file = ini.get("data", "schema_file", "");
  RunConfig cfg;
  cfg.schema_name = ini.get("data", "schema", schema_file.empty() ? "" : "custom");
  if (cfg.schema_name.empty()) {
    throw ConfigError("[data] schema (or schema_file) is required");
  }
  if (cfg.schema_name == "custom") {
    if (!schema_file.empty() && !ini.has("schema", "labels")) {
      IniFile schema_ini = IniFile::parse_file(schema_file);
      for (const auto& [name, section] : schema_ini.sections) {
        if (name != "schema") continue;
        for (const auto& [key, value] : section) ini.set("schema", key, value);
      }
    }
    cfg.schema = schema_from_ini(ini, "config");
  } else {
    cfg.schema = corpus::builtin_schema(cfg.schema_name);
  }

  std::vector<std::string> missing;
  cfg.train_csv = ini.get("data", "train", "");
  cfg.test_csv = ini.get("data", "test", "");
  if (cfg.train_csv.empty()) throw ConfigError("[data] train is required");
  require_file(missing, cfg.train_csv, "data.train");
  require_file(missing, cfg.test_csv, "data.test");

  cfg.variant = preprocess::variant_from_name(ini.get("preprocess", "variant", "original"));
  cfg.stop_list_path = ini.get("preprocess", "stop_list", "");
  cfg.ner_sidecar_path = ini.get("preprocess", "ner_sidecar", "");
  cfg.ner_typed = parse_bool(ini.get("preprocess", "ner_typed", "true"), "preprocess.ner_typed");
  cfg.digit_symbol = ini.get("preprocess", "digit_symbol", "#");
  require_file(missing, cfg.stop_list_path, "preprocess.stop_list");
  require_file(missing, cfg.ner_sidecar_path, "preprocess.ner_sidecar");
  if (cfg.variant == preprocess::VariantKind::kNerBlind && cfg.ner_sidecar_path.empty()) {
    throw ConfigError("preprocess.variant = ner_blind requires preprocess.ner_sidecar");
  }

  cfg.word_vectors_path = ini.get("features", "word_vectors", "");
  cfg.word_dim = static_cast<int>(parse_long(ini.get("features", "word_dim", "50"),
                                             "features.word_dim"));
  cfg.pos_dim = static_cast<int>(parse_long(ini.get("features", "pos_dim", "10"),
                                            "features.pos_dim"));
  cfg.max_dist = static_cast<int>(parse_long(ini.get("features", "max_dist", "50"),
                                             "features.max_dist"));
  cfg.contextual = ini.get("features", "contextual", "none");
  cfg.contextual_path = ini.get("features", "contextual_path", "");
  cfg.oov_range = parse_double(ini.get("features", "oov_range", "0.25"),
                               "features.oov_range");
  require_file(missing, cfg.word_vectors_path, "features.word_vectors");
  require_file(missing, cfg.contextual_path, "features.contextual_path");
  if (cfg.contextual != "none" && cfg.contextual != "tokens" && cfg.contextual != "cls") {
    throw ConfigError("features.contextual must be none, tokens or cls");
  }
  if (cfg.contextual != "none" && cfg.contextual_path.empty()) {
    throw ConfigError("features.contextual = " + cfg.contextual +
                      " requires features.contextual_path");
  }
  if (cfg.word_dim < 1 || cfg.pos_dim < 1 || cfg.max_dist < 1) {
    throw ConfigError("features dimensions must be positive");
  }

  cfg.pooling = crcnn::pooling_from_name(ini.get("model", "pooling", "max"));
  cfg.filters = static_cast<int>(parse_long(ini.get("model", "filters", "50"),
                                            "model.filters"));
  cfg.windows = train::parse_windows(ini.get("model", "windows", "2-3-4"));
  cfg.gamma = parse_double(ini.get("model", "gamma", "2"), "model.gamma");
  cfg.margin_pos = parse_double(ini.get("model", "margin_pos", "2.5"), "model.margin_pos");
  cfg.margin_neg = parse_double(ini.get("model", "margin_neg", "0.5"), "model.margin_neg");
  cfg.score_null_mode = ini.get("model", "score_null", "auto");
  cfg.null_threshold = parse_double(ini.get("model", "null_threshold", "0"),
                                    "model.null_threshold");
  const std::string nonlin = ini.get("model", "nonlinearity", "tanh");
  if (nonlin == "tanh") {
    cfg.tanh_nonlinearity = true;
  } else if (nonlin == "identity") {
    cfg.tanh_nonlinearity = false;
  } else {
    throw ConfigError("model.nonlinearity must be tanh or identity");
  }
  cfg.freeze_word_vectors = parse_bool(ini.get("model", "freeze_word_vectors", "false"),
                                       "model.freeze_word_vectors");
  if (cfg.score_null_mode != "auto" && cfg.score_null_mode != "true" &&
      cfg.score_null_mode != "false") {
    throw ConfigError("model.score_null must be auto, true or false");
  }
  if (cfg.gamma <= 0.0) throw ConfigError("model.gamma must be positive");
  if (!(cfg.margin_pos > cfg.margin_neg && cfg.margin_neg >= 0.0)) {
    throw ConfigError("model margins must satisfy margin_pos > margin_neg >= 0");
  }
  if (cfg.filters < 1) throw ConfigError("model.filters must be >= 1");

  cfg.epochs = static_cast<int>(parse_long(ini.get("train", "epochs", "100"),
                                           "train.epochs"));
  cfg.batch_size = static_cast<int>(parse_long(ini.get("train", "batch_size", "30"),
                                               "train.batch_size"));
  cfg.lr = train::parse_schedule(ini.get("train", "lr", "constant:0.025"));
  cfg.momentum = parse_double(ini.get("train", "momentum", "0"), "train.momentum");
  cfg.early_stop = parse_bool(ini.get("train", "early_stop", "false"), "train.early_stop");
  cfg.patience = static_cast<int>(parse_long(ini.get("train", "patience", "0"),
                                             "train.patience"));
  cfg.seed = static_cast<std::uint64_t>(parse_long(ini.get("train", "seed", "42"),
                                                   "train.seed"));
  cfg.dev_fraction = parse_double(ini.get("train", "dev_fraction", "0.1"),
                                  "train.dev_fraction");
  if (cfg.epochs < 1 || cfg.batch_size < 1) {
    throw ConfigError("train.epochs and train.batch_size must be >= 1");
  }
  if (cfg.momentum < 0.0 || cfg.momentum >= 1.0) {
    throw ConfigError("train.momentum must be in [0, 1)");
  }
  if (cfg.dev_fraction < 0.0 || cfg.dev_fraction >= 1.0) {
    throw ConfigError("train.dev_fraction must be in [0, 1)");
  }

  cfg.folds = static_cast<int>(parse_long(ini.get("experiment", "folds", "5"),
                                          "experiment.folds"));
  cfg.trials = static_cast<int>(parse_long(ini.get("experiment", "trials", "100"),
                                           "experiment.trials"));
  cfg.alpha = parse_double(ini.get("experiment", "alpha", "0.05"), "experiment.alpha");
  cfg.pass2_cap = static_cast<int>(parse_long(ini.get("experiment", "pass2_cap", "32"),
                                              "experiment.pass2_cap"));
  cfg.jobs = static_cast<int>(parse_long(ini.get("experiment", "jobs", "1"),
                                         "experiment.jobs"));
  if (cfg.alpha <= 0.0 || cfg.alpha >= 1.0) {
    throw ConfigError("experiment.alpha must be in (0, 1)");
  }
  if (cfg.jobs < 1) throw ConfigError("experiment.jobs must be >= 1");

  if (!missing.empty()) {
    throw ConfigError("referenced files do not exist: " + join(missing, ", "));
  }
  return cfg;
}

RunConfig RunConfig::load(const std::string& path, const std::vector<std::string>& overrides) {
  IniFile ini = IniFile::parse_file(path);
  for (const auto& ov : overrides) {
    const auto eq = ov.find('=');
    const auto dot = ov.find('.');
    if (eq == std::string::npos || dot == std::string::npos || dot > eq) {
      throw ConfigError("override '" + ov + "' is not of the form section.key=value");
    }
    ini.set(ov.substr(0, dot), ov.substr(dot + 1, eq - dot - 1), ov.substr(eq + 1));
  }
  return from_ini(std::move(ini));
}

bool RunConfig::resolved_score_null() const {
  if (score_null_mode == "true") return true;
  if (score_null_mode == "false") return false;
  // Default rule: a noisy null class that is excluded from the official
  // metric and never detection-collapsed stays out of scoring; every other
  // null participates.
  if (schema.has_null() && !schema.is_included(schema.null_label) &&
      !schema.detection_enabled) {
    return false;
  }
  return true;
}

std::string RunConfig::snapshot() const {
  IniFile ini;
  ini.set("data", "train", train_csv);
  ini.set("data", "test", test_csv);
  ini.set("data", "schema", schema_name);
  if (schema_name == "custom") schema_to_ini(schema, ini);
  ini.set("preprocess", "variant", preprocess::variant_name(variant));
  ini.set("preprocess", "stop_list", stop_list_path);
  ini.set("preprocess", "ner_sidecar", ner_sidecar_path);
  ini.set("preprocess", "ner_typed", ner_typed ? "true" : "false");
  ini.set("preprocess", "digit_symbol", digit_symbol);
  ini.set("features", "word_vectors", word_vectors_path);
  ini.set("features", "word_dim", std::to_string(word_dim));
  ini.set("features", "pos_dim", std::to_string(pos_dim));
  ini.set("features", "max_dist", std::to_string(max_dist));
  ini.set("features", "contextual", contextual);
  ini.set("features", "contextual_path", contextual_path);
  ini.set("features", "oov_range", format_double(oov_range));
  ini.set("model", "pooling", crcnn::pooling_name(pooling));
  ini.set("model", "filters", std::to_string(filters));
  ini.set("model", "windows", train::windows_repr(windows));
  ini.set("model", "gamma", format_double(gamma));
  ini.set("model", "margin_pos", format_double(margin_pos));
  ini.set("model", "margin_neg", format_double(margin_neg));
  ini.set("model", "score_null", resolved_score_null() ? "true" : "false");
  ini.set("model", "null_threshold", format_double(null_threshold));
  ini.set("model", "nonlinearity", tanh_nonlinearity ? "tanh" : "identity");
  ini.set("model", "freeze_word_vectors", freeze_word_vectors ? "true" : "false");
  ini.set("train", "epochs", std::to_string(epochs));
  ini.set("train", "batch_size", std::to_string(batch_size));
  ini.set("train", "lr", train::schedule_repr(lr));
  ini.set("train", "momentum", format_double(momentum));
  ini.set("train", "early_stop", early_stop ? "true" : "false");
  ini.set("train", "patience", std::to_string(patience));
  ini.set("train", "seed", std::to_string(seed));
  ini.set("train", "dev_fraction", format_double(dev_fraction));
  ini.set("experiment", "folds", std::to_string(folds));
  ini.set("experiment", "trials", std::to_string(trials));
  ini.set("experiment", "alpha", format_double(alpha));
  ini.set("experiment", "pass2_cap", std::to_string(pass2_cap));
  ini.set("experiment", "jobs", std::to_string(jobs));
  return ini.render();
}

std::string RunConfig::config_hash() const {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(fnv1a(snapshot())));
  return std::string(buf, 8);  // first 8 hex chars are plenty
}

train::HyperParams RunConfig::hyperparams() const {
  train::HyperParams hp;
  hp.epochs = epochs;
  hp.batch_size = batch_size;
  hp.lr = lr;
  hp.momentum = momentum;
  hp.early_stop = early_stop;
  hp.patience = patience;
  hp.pos_embed_dim = pos_dim;
  hp.filters_per_size = filters;
  hp.window_sizes = windows;
  hp.max_dist = max_dist;
  hp.seed = seed;
  hp.loss.gamma = gamma;
  hp.loss.margin_pos = margin_pos;
  hp.loss.margin_neg = margin_neg;
  hp.loss.score_null = resolved_score_null();
  hp.loss.null_threshold = null_threshold;
  return hp;
}

train::ModelConfig RunConfig::model_config() const {
  train::ModelConfig mc;
  mc.pooling = pooling;
  mc.nonlinearity = tanh_nonlinearity ? crcnn::Nonlinearity::kTanh
                                      : crcnn::Nonlinearity::kIdentity;
  mc.ctx_mode = contextual == "tokens" ? features::ContextMode::kConcatTokens
                                       : features::ContextMode::kNone;
  mc.use_cls = contextual == "cls";
  mc.word_dim = word_dim;
  mc.oov_range = oov_range;
  mc.freeze_words = freeze_word_vectors;
  return mc;
}

}  // namespace relx::config
