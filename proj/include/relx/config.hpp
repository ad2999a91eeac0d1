#ifndef RELX_CONFIG_HPP
#define RELX_CONFIG_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "relx/corpus.hpp"
#include "relx/crcnn.hpp"
#include "relx/features.hpp"
#include "relx/preprocess.hpp"
#include "relx/train.hpp"

namespace relx::config {

// Minimal INI document: [section] headers, key = value lines, # or ;
// comments. Order-preserving so snapshots render deterministically.
struct IniFile {
  using Section = std::vector<std::pair<std::string, std::string>>;
  std::vector<std::pair<std::string, Section>> sections;

  static IniFile parse_text(const std::string& text, const std::string& origin);
  static IniFile parse_file(const std::string& path);
  std::string render() const;

  bool has(const std::string& section, const std::string& key) const;
  std::string get(const std::string& section, const std::string& key,
                  const std::string& fallback) const;
  void set(const std::string& section, const std::string& key, const std::string& value);
};

// Fully resolved run configuration. Loading validates every key (unknown
// keys are rejected, all of them reported at once) and checks that every
// referenced file exists.
struct RunConfig {
  // [data]
  std::string train_csv;
  std::string test_csv;
  std::string schema_name = "custom";  // semeval | ddi | i2b2 | custom
  corpus::RelationSchema schema;

  // [preprocess]
  preprocess::VariantKind variant = preprocess::VariantKind::kOriginal;
  std::string stop_list_path;
  std::string ner_sidecar_path;
  bool ner_typed = true;
  std::string digit_symbol = "#";

  // [features]
  std::string word_vectors_path;
  int word_dim = 50;
  int pos_dim = 10;
  int max_dist = 50;
  std::string contextual = "none";  // none | tokens | cls
  std::string contextual_path;
  double oov_range = 0.25;

  // [model]
  crcnn::Pooling pooling = crcnn::Pooling::kMax;
  int filters = 50;
  std::vector<int> windows = {2, 3, 4};
  double gamma = 2.0;
  double margin_pos = 2.5;
  double margin_neg = 0.5;
  std::string score_null_mode = "auto";  // auto | true | false
  double null_threshold = 0.0;
  bool tanh_nonlinearity = true;
  bool freeze_word_vectors = false;

  // [train]
  int epochs = 100;
  int batch_size = 30;
  train::LrSchedule lr = train::ConstantLr{0.025};
  double momentum = 0.0;
  bool early_stop = false;
  int patience = 0;  // 0 = a fifth of the epochs
  std::uint64_t seed = 42;
  double dev_fraction = 0.1;

  // [experiment]
  int folds = 5;
  int trials = 100;
  double alpha = 0.05;
  int pass2_cap = 32;
  int jobs = 1;

  // `overrides` are "section.key=value" entries applied on top of the file.
  static RunConfig load(const std::string& path, const std::vector<std::string>& overrides);
  static RunConfig from_ini(IniFile ini);

  // Canonical INI rendering of the resolved configuration; reloading a
  // snapshot yields the same snapshot.
  std::string snapshot() const;
  // Hex digest of the snapshot, used for content-addressed run directories.
  std::string config_hash() const;

  bool resolved_score_null() const;
  train::HyperParams hyperparams() const;
  train::ModelConfig model_config() const;
};

// Schema <-> INI [schema] section (used for schema files and snapshots).
corpus::RelationSchema schema_from_ini(const IniFile& ini, const std::string& origin);
void schema_to_ini(const corpus::RelationSchema& schema, IniFile& ini);

}  // namespace relx::config

#endif  // RELX_CONFIG_HPP
