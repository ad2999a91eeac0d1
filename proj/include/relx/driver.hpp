#ifndef RELX_DRIVER_HPP
#define RELX_DRIVER_HPP

#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "relx/config.hpp"
#include "relx/corpus.hpp"
#include "relx/experiments.hpp"
#include "relx/features.hpp"
#include "relx/train.hpp"

namespace relx::driver {

// Data and features loaded per the run configuration, with the preprocessing
// variant already applied.
struct LoadedData {
  corpus::Dataset dataset;
  std::optional<features::WordEmbeddingTable> pretrained;
  std::unordered_map<std::string, features::ContextualFeatures> contextual;

  train::FeatureProvider provider() const {
    train::FeatureProvider p;
    p.pretrained = pretrained ? &*pretrained : nullptr;
    p.contextual = contextual.empty() ? nullptr : &contextual;
    return p;
  }
};

LoadedData load_data(const config::RunConfig& cfg);

struct FormatArgs {
  std::string adapter;  // semeval | synth
  std::string in;
  std::string test_in;
  std::string out_dir;
  corpus::SynthSpec synth;
};

// Writes train.csv (and test.csv) plus schema.ini under out_dir.
void cmd_format(const FormatArgs& args);

// Applies the configured preprocessing variant to a CSV.
void cmd_preprocess(const config::RunConfig& cfg, const std::string& in_csv,
                    const std::string& out_csv);

// Trains one model; artifacts land in <out_root>/<config-hash>-<seed>/.
// Returns the run directory.
std::string cmd_train(const config::RunConfig& cfg, const std::string& out_root);

// Evaluates either a predictions CSV or a checkpoint against a split.
struct EvalArgs {
  std::string predictions;  // id,gold,pred CSV; or
  std::string checkpoint;   // model checkpoint plus...
  std::string split = "test";  // ...the split to score
  std::string task = "classification";
  std::string out_dir;  // optional; report.json (+ predictions.csv) land here
};
metrics::MetricsReport cmd_eval(const config::RunConfig& cfg, const EvalArgs& args);

// Nested cross-validation; writes cv_summary.json (+ per-fold traces) under
// <out_root>/<config-hash>-<seed>/. When the dataset has a test split, also
// trains on the full training data and reports the test score.
struct CvSummary {
  std::string name;
  experiments::CvResult cv;
  std::optional<double> test_score;
};
CvSummary cmd_cv(const config::RunConfig& cfg, const std::string& out_root,
                 const std::string& name);

// Hyperparameter search; writes manifest.jsonl and summary.json.
void cmd_search(const config::RunConfig& cfg, const std::string& kind,
                const std::string& out_root);

// Renders a Table-style comparison from cv_summary.json files; the first
// file is the baseline. Returns the rendered text.
std::string cmd_report(const std::vector<std::string>& summary_files, double alpha,
                       const std::string& out_file);

// cv_summary.json (de)serialization, shared with the report command.
std::string cv_summary_to_json(const CvSummary& summary);
experiments::ComparisonRow comparison_row_from_json(const std::string& path);

}  // namespace relx::driver

#endif  // RELX_DRIVER_HPP
