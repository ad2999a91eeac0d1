#include "relx/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "relx/common.hpp"

namespace relx::experiments {

using train::HyperParams;

double mean_of(const std::vector<double>& xs) {
  if (xs.empty()) return 0.0;
  return std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
}

double stddev_of(const std::vector<double>& xs) {
  if (xs.size() < 2) return 0.0;
  const double m = mean_of(xs);
  double ss = 0.0;
  for (double x : xs) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(xs.size() - 1));
}

// ---------------------------------------------------------------------------
// Parallel fold/trial execution. Results land in caller-indexed slots, so
// ordering is deterministic regardless of completion order.

namespace {

void parallel_for(int count, int jobs, const std::function<void(int)>& fn) {
  if (count <= 0) return;
  jobs = std::max(1, std::min(jobs, count));
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(count));
  if (jobs == 1) {
    for (int i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::thread> workers;
  workers.reserve(static_cast<std::size_t>(jobs));
  for (int j = 0; j < jobs; ++j) {
    workers.emplace_back([&]() {
      while (true) {
        const int i = next.fetch_add(1);
        if (i >= count) return;
        try {
          fn(i);
        } catch (...) {
          errors[static_cast<std::size_t>(i)] = std::current_exception();
        }
      }
    });
  }
  for (auto& w : workers) w.join();
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// Folds.

FoldRoles FoldPlan::roles(int outer) const {
  if (outer < 0 || outer >= k) throw ConfigError("fold index out of range");
  FoldRoles r;
  r.test_fold = outer;
  r.dev_fold = (outer + 1) % k;
  for (int f = 0; f < k; ++f) {
    if (f != r.test_fold && f != r.dev_fold) r.train_folds.push_back(f);
  }
  return r;
}

FoldPlan make_folds(const std::vector<corpus::RelationInstance>& instances, int k,
                    std::uint64_t seed) {
  if (k < 3) throw ConfigError("nested cross-validation needs k >= 3");
  if (static_cast<int>(instances.size()) < k) {
    throw DataError("corpus too small for " + std::to_string(k) + " folds");
  }
  FoldPlan plan;
  plan.k = k;
  plan.ids.reserve(instances.size());
  for (const auto& inst : instances) plan.ids.push_back(inst.id);

  std::vector<std::size_t> order(instances.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng = derived_rng(seed, RngStream::kFolds);
  rng.shuffle(order);

  plan.fold_of.assign(instances.size(), 0);
  for (std::size_t j = 0; j < order.size(); ++j) {
    plan.fold_of[order[j]] = static_cast<int>(j % static_cast<std::size_t>(k));
  }
  return plan;
}

// ---------------------------------------------------------------------------
// Nested cross-validation.

std::vector<double> CvResult::test_scores() const {
  std::vector<double> out;
  for (const auto& f : folds) out.push_back(f.test_score);
  return out;
}

std::vector<double> CvResult::dev_scores() const {
  std::vector<double> out;
  for (const auto& f : folds) out.push_back(f.dev_score);
  return out;
}

CvResult nested_cv(const corpus::Dataset& dataset, const HyperParams& hp,
                   const train::ModelConfig& mc, const train::FeatureProvider& provider,
                   int k, std::uint64_t seed, int jobs, metrics::Task task) {
  const FoldPlan plan = make_folds(dataset.train, k, seed);
  CvResult result;
  result.folds.resize(static_cast<std::size_t>(k));

  parallel_for(k, jobs, [&](int outer) {
    const FoldRoles roles = plan.roles(outer);
    std::vector<corpus::RelationInstance> train_split, dev_split, test_split;
    for (std::size_t i = 0; i < dataset.train.size(); ++i) {
      const int f = plan.fold_of[i];
      if (f == roles.test_fold) {
        test_split.push_back(dataset.train[i]);
      } else if (f == roles.dev_fold) {
        dev_split.push_back(dataset.train[i]);
      } else {
        train_split.push_back(dataset.train[i]);
      }
    }
    HyperParams fold_hp = hp;
    fold_hp.seed = seed + static_cast<std::uint64_t>(outer);
    try {
      auto trained = train::train(dataset.schema, train_split, dev_split, fold_hp, mc, provider);
      CvFold fold;
      fold.fold = outer;
      fold.test_report = train::evaluate_model(trained.params, fold_hp.loss, dataset.schema,
                                               mc, test_split, provider, task);
      fold.test_score = fold.test_report.official_f1(dataset.schema.averaging);
      fold.dev_score = trained.best_dev;
      fold.trace = std::move(trained.trace);
      result.folds[static_cast<std::size_t>(outer)] = std::move(fold);
    } catch (const DataError& e) {
      throw DataError("fold " + std::to_string(outer) + ": " + e.what());
    } catch (const ConfigError& e) {
      throw ConfigError("fold " + std::to_string(outer) + ": " + e.what());
    }
  });

  result.mean = mean_of(result.test_scores());
  result.stddev = stddev_of(result.test_scores());
  return result;
}

// ---------------------------------------------------------------------------
// Paired t-test.

namespace {

// Modified Lentz continued fraction for the incomplete beta function.
double beta_cf(double a, double b, double x) {
  constexpr int kMaxIter = 300;
  constexpr double kEps = 3e-16;
  constexpr double kTiny = 1e-300;
  const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::abs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIter; ++m) {
    const double m2 = 2.0 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < kEps) break;
  }
  return h;
}

}  // namespace

double incomplete_beta(double a, double b, double x) {
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  const double ln_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                          a * std::log(x) + b * std::log1p(-x);
  const double front = std::exp(ln_front);
  if (x < (a + 1.0) / (a + b + 2.0)) {
    return front * beta_cf(a, b, x) / a;
  }
  return 1.0 - front * beta_cf(b, a, 1.0 - x) / b;
}

double student_t_two_tailed(double t, int df) {
  if (df < 1) throw ConfigError("student_t_two_tailed: df must be >= 1");
  if (std::isinf(t)) return 0.0;
  const double x = df / (df + t * t);
  return incomplete_beta(df / 2.0, 0.5, x);
}

SignificanceResult paired_ttest(const std::vector<double>& scores_a,
                                const std::vector<double>& scores_b, double alpha) {
  if (scores_a.size() != scores_b.size()) {
    throw DataError("paired_ttest: score vectors have different lengths");
  }
  const int n = static_cast<int>(scores_a.size());
  if (n < 2) throw DataError("paired_ttest: need at least 2 paired scores");

  SignificanceResult r;
  r.df = n - 1;
  for (int i = 0; i < n; ++i) r.diffs.push_back(scores_a[i] - scores_b[i]);
  r.mean_diff = mean_of(r.diffs);
  const double sd = stddev_of(r.diffs);

  if (sd == 0.0) {
    // All differences identical.
    if (r.mean_diff == 0.0) {
      r.t_stat = 0.0;
      r.p_value = 1.0;
    } else {
      r.degenerate = true;
      r.t_stat = std::copysign(std::numeric_limits<double>::infinity(), r.mean_diff);
      r.p_value = 0.0;
    }
  } else {
    r.t_stat = r.mean_diff * std::sqrt(static_cast<double>(n)) / sd;
    r.p_value = student_t_two_tailed(r.t_stat, r.df);
  }
  r.significant = r.p_value < alpha;
  return r;
}

// ---------------------------------------------------------------------------
// Manual sweep.

std::string provenance_name(Provenance p) {
  switch (p) {
    case Provenance::kDefault: return "default";
    case Provenance::kManualPass1: return "manual-pass-1";
    case Provenance::kManualPass2: return "manual-pass-2";
    case Provenance::kRandom: return "random";
  }
  return "?";
}

SweepGrid default_manual_grid(const HyperParams& defaults) {
  SweepGrid grid;
  const auto add_field = [&](std::vector<GridValue> values) {
    if (!values.empty()) grid.push_back(std::move(values));
  };

  {
    std::vector<GridValue> vals;
    for (int e : {50, 100, 150, 200}) {
      if (e == defaults.epochs) continue;
      vals.push_back({"epochs", std::to_string(e),
                      [e](HyperParams& hp) { hp.epochs = e; }});
    }
    add_field(std::move(vals));
  }
  {
    const train::LrSchedule decay = train::StepSchedule{};
    std::vector<GridValue> vals;
    if (train::schedule_repr(defaults.lr) != train::schedule_repr(decay)) {
      vals.push_back({"lr", train::schedule_repr(decay),
                      [decay](HyperParams& hp) { hp.lr = decay; }});
    }
    add_field(std::move(vals));
  }
  {
    std::vector<GridValue> vals;
    for (double m : {0.9, 0.0}) {
      if (m == defaults.momentum) continue;
      vals.push_back({"momentum", format_double(m),
                      [m](HyperParams& hp) { hp.momentum = m; }});
    }
    add_field(std::move(vals));
  }
  {
    std::vector<GridValue> vals;
    for (bool es : {true, false}) {
      if (es == defaults.early_stop) continue;
      vals.push_back({"early_stop", es ? "true" : "false",
                      [es](HyperParams& hp) { hp.early_stop = es; }});
    }
    add_field(std::move(vals));
  }
  {
    std::vector<GridValue> vals;
    for (int d : {10, 50, 80, 100}) {
      if (d == defaults.pos_embed_dim) continue;
      vals.push_back({"pos_embed_dim", std::to_string(d),
                      [d](HyperParams& hp) { hp.pos_embed_dim = d; }});
    }
    add_field(std::move(vals));
  }
  {
    std::vector<GridValue> vals;
    for (int f : {50, 150}) {
      if (f == defaults.filters_per_size) continue;
      vals.push_back({"filters_per_size", std::to_string(f),
                      [f](HyperParams& hp) { hp.filters_per_size = f; }});
    }
    add_field(std::move(vals));
  }
  {
    std::vector<GridValue> vals;
    for (const std::string& w : {std::string("2-3-4"), std::string("3-4-5")}) {
      if (w == train::windows_repr(defaults.window_sizes)) continue;
      const auto sizes = train::parse_windows(w);
      vals.push_back({"window_sizes", w,
                      [sizes](HyperParams& hp) { hp.window_sizes = sizes; }});
    }
    add_field(std::move(vals));
  }
  {
    std::vector<GridValue> vals;
    for (int b : {70, 30}) {
      if (b == defaults.batch_size) continue;
      vals.push_back({"batch_size", std::to_string(b),
                      [b](HyperParams& hp) { hp.batch_size = b; }});
    }
    add_field(std::move(vals));
  }
  return grid;
}

std::vector<TrialResult> SweepResult::ranked() const {
  std::vector<TrialResult> all;
  all.push_back(default_trial);
  all.insert(all.end(), pass1.begin(), pass1.end());
  all.insert(all.end(), pass2.begin(), pass2.end());
  std::stable_sort(all.begin(), all.end(), [](const TrialResult& a, const TrialResult& b) {
    if (a.mean_dev != b.mean_dev) return a.mean_dev > b.mean_dev;
    return a.trial_id < b.trial_id;
  });
  return all;
}

SweepResult manual_sweep(const corpus::Dataset& dataset, const HyperParams& defaults,
                         const SweepGrid& grid, const train::ModelConfig& mc,
                         const train::FeatureProvider& provider, int k,
                         std::uint64_t seed, double alpha, int pass2_cap, int jobs) {
  if (grid.empty()) throw ConfigError("manual_sweep: empty grid");

  SweepResult result;
  int next_id = 0;

  const auto run_trial = [&](TrialSpec spec) {
    TrialResult trial;
    trial.spec = std::move(spec);
    trial.trial_id = next_id++;
    trial.seed = seed;
    // Same fold plan and fold seeds for every trial, so fold scores pair up.
    const CvResult cv = nested_cv(dataset, trial.spec.hp, mc, provider, k, seed, jobs);
    trial.dev_scores = cv.dev_scores();
    trial.mean_dev = mean_of(trial.dev_scores);
    return trial;
  };

  TrialSpec default_spec;
  default_spec.hp = defaults;
  default_spec.provenance = Provenance::kDefault;
  result.default_trial = run_trial(std::move(default_spec));

  // Pass 1: one hyperparameter changed per experiment.
  for (const auto& field : grid) {
    for (const auto& value : field) {
      TrialSpec spec;
      spec.hp = defaults;
      value.apply(spec.hp);
      spec.provenance = Provenance::kManualPass1;
      spec.field = value.field;
      spec.value_repr = value.repr;
      TrialResult trial = run_trial(std::move(spec));
      trial.vs_default =
          paired_ttest(trial.dev_scores, result.default_trial.dev_scores, alpha);
      result.pass1.push_back(std::move(trial));
    }
  }

  // Values flagged as significant improvements, grouped per field.
  std::vector<std::vector<const TrialResult*>> flagged;
  for (const auto& field : grid) {
    std::vector<const TrialResult*> hits;
    for (const auto& trial : result.pass1) {
      if (trial.spec.field == field.front().field && trial.vs_default->significant &&
          trial.vs_default->mean_diff > 0.0) {
        hits.push_back(&trial);
      }
    }
    if (!hits.empty()) flagged.push_back(std::move(hits));
  }

  // Pass 2: cross-product of flagged values, bounded by the cap.
  if (flagged.size() >= 2) {
    std::vector<std::size_t> idx(flagged.size(), 0);
    int emitted = 0;
    while (emitted < pass2_cap) {
      TrialSpec spec;
      spec.hp = defaults;
      spec.provenance = Provenance::kManualPass2;
      std::string fields, values;
      for (std::size_t f = 0; f < flagged.size(); ++f) {
        const TrialResult* src = flagged[f][idx[f]];
        // Re-apply the pass-1 perturbation by copying its field value.
        for (const auto& field : grid) {
          for (const auto& value : field) {
            if (value.field == src->spec.field && value.repr == src->spec.value_repr) {
              value.apply(spec.hp);
            }
          }
        }
        if (!fields.empty()) fields += "+";
        fields += src->spec.field;
        if (!values.empty()) values += "+";
        values += src->spec.value_repr;
      }
      spec.field = fields;
      spec.value_repr = values;
      TrialResult trial = run_trial(std::move(spec));
      trial.vs_default =
          paired_ttest(trial.dev_scores, result.default_trial.dev_scores, alpha);
      result.pass2.push_back(std::move(trial));
      ++emitted;

      // Advance the cross-product odometer.
      std::size_t f = 0;
      while (f < flagged.size()) {
        if (++idx[f] < flagged[f].size()) break;
        idx[f] = 0;
        ++f;
      }
      if (f == flagged.size()) break;
    }
  }

  // Winner: best mean dev metric among significant improvements.
  const TrialResult* winner = nullptr;
  for (const auto* pool : {&result.pass1, &result.pass2}) {
    for (const auto& trial : *pool) {
      if (trial.vs_default->significant && trial.vs_default->mean_diff > 0.0) {
        if (winner == nullptr || trial.mean_dev > winner->mean_dev) winner = &trial;
      }
    }
  }
  if (winner != nullptr) {
    result.winner = winner->spec;
    result.winner_is_default = false;
  } else {
    result.winner = result.default_trial.spec;
    result.winner_is_default = true;
  }
  return result;
}

// ---------------------------------------------------------------------------
// Random search.

HyperParams sample_random_hp(const HyperParams& base, Rng& rng) {
  HyperParams hp = base;
  hp.epochs = static_cast<int>(rng.uniform_int(70, 300));
  const bool decay = rng.coin();
  const double lr_init = rng.uniform(1e-5, 0.001);
  hp.lr = decay ? train::LrSchedule(train::HalfwayDecay{lr_init})
                : train::LrSchedule(train::ConstantLr{lr_init});
  static const std::vector<std::vector<int>> kWindowSets = {
      {2, 3}, {2, 3, 4}, {2, 3, 4, 5}, {3, 4, 5}, {3, 4, 5, 6}};
  hp.window_sizes =
      kWindowSets[static_cast<std::size_t>(rng.uniform_int(0, 4))];
  hp.early_stop = rng.coin();
  hp.patience = hp.early_stop ? hp.epochs / 5 : 0;
  hp.batch_size = static_cast<int>(rng.uniform_int(30, 70));
  return hp;
}

RandomSearchResult random_search(const corpus::Dataset& dataset, const HyperParams& base,
                                 const train::ModelConfig& mc,
                                 const train::FeatureProvider& provider, int trials,
                                 std::uint64_t seed, double dev_fraction, int jobs) {
  if (trials < 1) throw ConfigError("random_search: trials must be >= 1");
  const std::size_t n = dataset.train.size();
  std::size_t dev_n = static_cast<std::size_t>(
      std::max(1.0, std::floor(dev_fraction * static_cast<double>(n))));
  if (dev_n >= n) throw DataError("random_search: corpus too small for a dev split");

  // One fixed dev split sampled from the training data.
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng split_rng = derived_rng(seed, RngStream::kDevSplit);
  split_rng.shuffle(order);
  std::vector<corpus::RelationInstance> dev_split, train_split;
  for (std::size_t j = 0; j < n; ++j) {
    (j < dev_n ? dev_split : train_split).push_back(dataset.train[order[j]]);
  }

  // Sample every trial up front from one sampler stream.
  Rng sampler = derived_rng(seed, RngStream::kSampler);
  std::vector<TrialSpec> specs;
  for (int i = 0; i < trials; ++i) {
    TrialSpec spec;
    spec.hp = sample_random_hp(base, sampler);
    spec.hp.seed = seed + static_cast<std::uint64_t>(i);
    spec.provenance = Provenance::kRandom;
    spec.field = "";
    spec.value_repr = "epochs=" + std::to_string(spec.hp.epochs) +
                      ",lr=" + train::schedule_repr(spec.hp.lr) +
                      ",windows=" + train::windows_repr(spec.hp.window_sizes) +
                      ",early_stop=" + (spec.hp.early_stop ? "true" : "false") +
                      ",batch=" + std::to_string(spec.hp.batch_size);
    specs.push_back(std::move(spec));
  }

  RandomSearchResult result;
  result.trials.resize(static_cast<std::size_t>(trials));
  parallel_for(trials, jobs, [&](int i) {
    TrialResult trial;
    trial.spec = specs[static_cast<std::size_t>(i)];
    trial.trial_id = i;
    trial.seed = trial.spec.hp.seed;
    try {
      auto trained =
          train::train(dataset.schema, train_split, dev_split, trial.spec.hp, mc, provider);
      const auto report =
          train::evaluate_model(trained.params, trial.spec.hp.loss, dataset.schema, mc,
                                dev_split, provider, metrics::Task::kClassification);
      trial.dev_scores = {report.official_f1(dataset.schema.averaging)};
      trial.mean_dev = trial.dev_scores[0];
    } catch (const DataError& e) {
      throw DataError("trial " + std::to_string(i) + ": " + e.what());
    }
    result.trials[static_cast<std::size_t>(i)] = std::move(trial);
  });

  std::stable_sort(result.trials.begin(), result.trials.end(),
                   [](const TrialResult& a, const TrialResult& b) {
                     if (a.mean_dev != b.mean_dev) return a.mean_dev > b.mean_dev;
                     return a.trial_id < b.trial_id;
                   });
  return result;
}

// ---------------------------------------------------------------------------
// Reporting.

std::string render_comparison(const std::vector<ComparisonRow>& rows, double alpha) {
  if (rows.empty()) return "";
  std::ostringstream out;
  char line[256];
  std::snprintf(line, sizeof(line), "%-28s %10s %18s %10s\n", "technique", "test",
                "cv mean (sd)", "p");
  out << line;
  const auto& base = rows.front();
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& row = rows[i];
    std::string test = "-";
    if (row.test_score) {
      char buf[32];
      std::snprintf(buf, sizeof(buf), "%.2f", *row.test_score * 100.0);
      test = buf;
    }
    char cv[64];
    std::snprintf(cv, sizeof(cv), "%.2f (%.2f)", mean_of(row.fold_scores) * 100.0,
                  stddev_of(row.fold_scores) * 100.0);
    std::string marker;
    std::string p = "-";
    if (i > 0) {
      const auto sig = paired_ttest(row.fold_scores, base.fold_scores, alpha);
      char pbuf[32];
      std::snprintf(pbuf, sizeof(pbuf), "%.4f", sig.p_value);
      p = pbuf;
      // The bullet marks rows NOT significantly different from the baseline.
      if (!sig.significant) marker = " \xe2\x80\xa2";
    }
    std::snprintf(line, sizeof(line), "%-28s %10s %18s %10s%s\n", row.name.c_str(),
                  test.c_str(), cv, p.c_str(), marker.c_str());
    out << line;
  }
  return out.str();
}

std::string trial_to_json(const TrialResult& trial) {
  nlohmann::json j;
  j["trial"] = trial.trial_id;
  j["provenance"] = provenance_name(trial.spec.provenance);
  if (!trial.spec.field.empty()) j["field"] = trial.spec.field;
  if (!trial.spec.value_repr.empty()) j["value"] = trial.spec.value_repr;
  j["seed"] = trial.seed;
  j["dev_scores"] = trial.dev_scores;
  j["mean_dev"] = trial.mean_dev;
  if (trial.vs_default) {
    j["p_value"] = trial.vs_default->p_value;
    j["significant"] = trial.vs_default->significant;
    j["mean_diff"] = trial.vs_default->mean_diff;
  }
  j["hp"] = {{"epochs", trial.spec.hp.epochs},
             {"batch_size", trial.spec.hp.batch_size},
             {"lr", train::schedule_repr(trial.spec.hp.lr)},
             {"momentum", trial.spec.hp.momentum},
             {"early_stop", trial.spec.hp.early_stop},
             {"patience", trial.spec.hp.effective_patience()},
             {"pos_embed_dim", trial.spec.hp.pos_embed_dim},
             {"filters_per_size", trial.spec.hp.filters_per_size},
             {"window_sizes", train::windows_repr(trial.spec.hp.window_sizes)},
             {"max_dist", trial.spec.hp.max_dist}};
  return j.dump();
}

void write_manifest(const std::vector<TrialResult>& trials, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write manifest: " + path);
  for (const auto& trial : trials) out << trial_to_json(trial) << '\n';
  if (!out.flush()) throw DataError("write failed: " + path);
}

}  // namespace relx::experiments
