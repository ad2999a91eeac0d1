#ifndef RELX_EXPERIMENTS_HPP
#define RELX_EXPERIMENTS_HPP

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "relx/common.hpp"
#include "relx/corpus.hpp"
#include "relx/metrics.hpp"
#include "relx/train.hpp"

namespace relx::experiments {

// ---------------------------------------------------------------------------
// Fold plans.

struct FoldRoles {
  int test_fold = 0;
  int dev_fold = 0;
  std::vector<int> train_folds;
};

struct FoldPlan {
  int k = 0;
  std::vector<int> fold_of;         // aligned with the training corpus
  std::vector<std::string> ids;     // instance ids, same order
  // Outer fold i: held-out test fold i, dev fold (i+1) mod k, train rest.
  FoldRoles roles(int outer) const;
};

FoldPlan make_folds(const std::vector<corpus::RelationInstance>& instances, int k,
                    std::uint64_t seed);

// ---------------------------------------------------------------------------
// Nested cross-validation.

struct CvFold {
  int fold = 0;
  metrics::MetricsReport test_report;
  double test_score = 0.0;  // official metric on the held-out fold
  double dev_score = 0.0;   // best dev metric reached while training
  std::vector<train::EpochStats> trace;
};

struct CvResult {
  std::vector<CvFold> folds;
  double mean = 0.0;
  double stddev = 0.0;  // sample standard deviation over fold test scores
  std::vector<double> test_scores() const;
  std::vector<double> dev_scores() const;
};

// One independent training run per outer fold; fold seeds are seed + fold
// index. `jobs` > 1 runs folds concurrently (results are ordered by fold
// index regardless of completion order).
CvResult nested_cv(const corpus::Dataset& dataset, const train::HyperParams& hp,
                   const train::ModelConfig& mc, const train::FeatureProvider& provider,
                   int k, std::uint64_t seed, int jobs = 1,
                   metrics::Task task = metrics::Task::kClassification);

// ---------------------------------------------------------------------------
// Paired t-test.

struct SignificanceResult {
  std::vector<double> diffs;
  double mean_diff = 0.0;
  double t_stat = 0.0;
  int df = 0;
  double p_value = 1.0;  // two-tailed
  bool significant = false;
  bool degenerate = false;  // all pairwise differences identical
};

// Two-tailed paired t-test over aligned fold scores. Zero-variance inputs:
// all-zero differences give p = 1, identical nonzero differences give p = 0
// with the degenerate flag set.
SignificanceResult paired_ttest(const std::vector<double>& scores_a,
                                const std::vector<double>& scores_b, double alpha);

// Regularized incomplete beta function I_x(a, b) (continued fraction).
double incomplete_beta(double a, double b, double x);
// Two-tailed Student-t tail probability.
double student_t_two_tailed(double t, int df);

// ---------------------------------------------------------------------------
// Hyperparameter search.

enum class Provenance { kDefault, kManualPass1, kManualPass2, kRandom };
std::string provenance_name(Provenance p);

struct TrialSpec {
  train::HyperParams hp;
  Provenance provenance = Provenance::kDefault;
  std::string field;       // perturbed field for manual pass-1 trials
  std::string value_repr;  // human-readable perturbed value(s)
};

struct TrialResult {
  TrialSpec spec;
  int trial_id = 0;
  std::uint64_t seed = 0;
  std::vector<double> dev_scores;  // per-fold (sweep) or single dev (random)
  double mean_dev = 0.0;
  std::optional<SignificanceResult> vs_default;
};

// One named alternative value for a hyperparameter field.
struct GridValue {
  std::string field;
  std::string repr;
  std::function<void(train::HyperParams&)> apply;
};
using SweepGrid = std::vector<std::vector<GridValue>>;  // grouped by field

// The stock first-pass grid: epoch {50,100,150,200}, step lr decay
// [1e-3,1e-4,1e-5]@[60,120], momentum {on,off}, early stop {on,off},
// position embedding {10,50,80,100}, filters {50,150}, windows
// {2-3-4, 3-4-5}, batch {70,30}. Values equal to the default are dropped.
SweepGrid default_manual_grid(const train::HyperParams& defaults);

struct SweepResult {
  TrialResult default_trial;
  std::vector<TrialResult> pass1;
  std::vector<TrialResult> pass2;
  TrialSpec winner;
  bool winner_is_default = true;
  // All trials (default first), ranked by mean dev metric descending.
  std::vector<TrialResult> ranked() const;
};

// Two-pass one-at-a-time sweep with paired t-tests on dev folds; pass 2
// crosses all values flagged as significant improvements, capped.
SweepResult manual_sweep(const corpus::Dataset& dataset,
                         const train::HyperParams& defaults, const SweepGrid& grid,
                         const train::ModelConfig& mc,
                         const train::FeatureProvider& provider, int k,
                         std::uint64_t seed, double alpha, int pass2_cap = 32,
                         int jobs = 1);

// Random-search sampling:
//   epochs ~ uniform int [70, 300]
//   lr kind in {constant, decay} equiprobable; lr_init ~ uniform [1e-5, 0.001]
//   windows uniform over {2-3, 2-3-4, 2-3-4-5, 3-4-5, 3-4-5-6}
//   early stop in {T, F} equiprobable, patience = epochs / 5
//   batch ~ uniform int [30, 70]
train::HyperParams sample_random_hp(const train::HyperParams& base, Rng& rng);

struct RandomSearchResult {
  std::vector<TrialResult> trials;  // ranked by dev metric descending
};

// Trials are evaluated on one fixed dev split sampled from the training data
// with the base seed; trial seeds are seed + trial index.
RandomSearchResult random_search(const corpus::Dataset& dataset,
                                 const train::HyperParams& base,
                                 const train::ModelConfig& mc,
                                 const train::FeatureProvider& provider, int trials,
                                 std::uint64_t seed, double dev_fraction = 0.1,
                                 int jobs = 1);

// ---------------------------------------------------------------------------
// Reporting.

// A named result suitable for a comparison table row: optional test-set
// score on top of cross-validated fold scores.
struct ComparisonRow {
  std::string name;
  std::optional<double> test_score;
  std::vector<double> fold_scores;
};

// Renders rows against the first (baseline) row: score, mean (stddev) and a
// bullet marker on rows whose fold scores are NOT significantly different
// from the baseline's under a paired t-test.
std::string render_comparison(const std::vector<ComparisonRow>& rows, double alpha);

// JSON-lines manifest of every trial in a sweep or search.
std::string trial_to_json(const TrialResult& trial);
void write_manifest(const std::vector<TrialResult>& trials, const std::string& path);

double mean_of(const std::vector<double>& xs);
double stddev_of(const std::vector<double>& xs);  // sample (n-1); 0 when n < 2

}  // namespace relx::experiments

#endif  // RELX_EXPERIMENTS_HPP
