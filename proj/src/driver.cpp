#include "relx/driver.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "relx/common.hpp"
#include "relx/crcnn.hpp"
#include "relx/metrics.hpp"
#include "relx/preprocess.hpp"

namespace relx::driver {

namespace fs = std::filesystem;

namespace {

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path);
  out << text;
  if (!out.flush()) throw DataError("write failed: " + path);
}

std::string make_run_dir(const config::RunConfig& cfg, const std::string& out_root) {
  const std::string dir =
      out_root + "/" + cfg.config_hash() + "-" + std::to_string(cfg.seed);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw DataError("cannot create run directory: " + dir);
  return dir;
}

preprocess::PreprocessVariant build_variant(const config::RunConfig& cfg) {
  preprocess::PreprocessVariant variant;
  variant.kind = cfg.variant;
  variant.digit_symbol = cfg.digit_symbol;
  variant.ner_typed = cfg.ner_typed;
  if (cfg.variant == preprocess::VariantKind::kPunctDigitStop) {
    variant.stop_list = cfg.stop_list_path.empty()
                            ? preprocess::default_stop_list()
                            : preprocess::load_stop_list(cfg.stop_list_path);
  }
  if (cfg.variant == preprocess::VariantKind::kNerBlind) {
    variant.ner = preprocess::load_ner_sidecar(cfg.ner_sidecar_path);
  }
  return variant;
}

// Carves a seeded dev split off the training data (used by `train` and the
// random-search fixed dev set).
void carve_dev(const std::vector<corpus::RelationInstance>& all, double fraction,
               std::uint64_t seed, std::vector<corpus::RelationInstance>* train_out,
               std::vector<corpus::RelationInstance>* dev_out) {
  std::vector<std::size_t> order(all.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng = derived_rng(seed, RngStream::kDevSplit);
  rng.shuffle(order);
  const auto dev_n = static_cast<std::size_t>(
      std::max(0.0, std::floor(fraction * static_cast<double>(all.size()))));
  for (std::size_t j = 0; j < order.size(); ++j) {
    (j < dev_n ? *dev_out : *train_out).push_back(all[order[j]]);
  }
}

}  // namespace

LoadedData load_data(const config::RunConfig& cfg) {
  LoadedData data;
  data.dataset.schema = cfg.schema;
  data.dataset.train = corpus::read_common_csv(cfg.train_csv, cfg.schema);
  if (!cfg.test_csv.empty()) {
    data.dataset.test = corpus::read_common_csv(cfg.test_csv, cfg.schema);
  }

  const auto variant = build_variant(cfg);
  data.dataset.train = preprocess::apply_variant(data.dataset.train, variant);
  if (data.dataset.test) {
    data.dataset.test = preprocess::apply_variant(*data.dataset.test, variant);
  }
  corpus::validate_dataset(data.dataset);

  if (!cfg.word_vectors_path.empty()) {
    data.pretrained = features::WordEmbeddingTable::load(cfg.word_vectors_path,
                                                         cfg.word_dim, cfg.seed,
                                                         cfg.oov_range);
  }
  if (!cfg.contextual_path.empty()) {
    data.contextual = features::load_contextual(cfg.contextual_path);
  }
  return data;
}

// ---------------------------------------------------------------------------
// format

void cmd_format(const FormatArgs& args) {
  std::error_code ec;
  fs::create_directories(args.out_dir, ec);
  if (ec) throw DataError("cannot create output directory: " + args.out_dir);

  corpus::Dataset dataset;
  if (args.adapter == "semeval") {
    if (args.in.empty()) throw ConfigError("format --adapter semeval requires --in");
    dataset = corpus::adapt_semeval(args.in, args.test_in);
  } else if (args.adapter == "synth") {
    dataset = corpus::synth_corpus(args.synth);
  } else {
    throw ConfigError("unknown adapter '" + args.adapter +
                      "' (expected semeval or synth)");
  }

  corpus::write_common_csv(dataset.train, args.out_dir + "/train.csv");
  if (dataset.test) {
    corpus::write_common_csv(*dataset.test, args.out_dir + "/test.csv");
  }
  config::IniFile schema_ini;
  config::schema_to_ini(dataset.schema, schema_ini);
  write_text_file(args.out_dir + "/schema.ini", schema_ini.render());
  std::cout << "wrote " << dataset.train.size() << " train instances";
  if (dataset.test) std::cout << " and " << dataset.test->size() << " test instances";
  std::cout << " to " << args.out_dir << "\n";
}

// ---------------------------------------------------------------------------
// preprocess

void cmd_preprocess(const config::RunConfig& cfg, const std::string& in_csv,
                    const std::string& out_csv) {
  const auto variant = build_variant(cfg);
  const auto instances = corpus::read_common_csv(in_csv, cfg.schema);
  const auto transformed = preprocess::apply_variant(instances, variant);
  for (const auto& inst : transformed) corpus::validate_instance(inst, cfg.schema);
  corpus::write_common_csv(transformed, out_csv);
  std::cout << "wrote " << transformed.size() << " instances to " << out_csv << "\n";
}

// ---------------------------------------------------------------------------
// train

std::string cmd_train(const config::RunConfig& cfg, const std::string& out_root) {
  const LoadedData data = load_data(cfg);
  const auto hp = cfg.hyperparams();
  const auto mc = cfg.model_config();

  std::vector<corpus::RelationInstance> train_split, dev_split;
  if (cfg.dev_fraction > 0.0) {
    carve_dev(data.dataset.train, cfg.dev_fraction, cfg.seed, &train_split, &dev_split);
  } else {
    train_split = data.dataset.train;
  }

  const auto result =
      train::train(data.dataset.schema, train_split, dev_split, hp, mc, data.provider());

  const std::string dir = make_run_dir(cfg, out_root);
  train::write_run_artifacts(result, dir, cfg.snapshot());
  std::cout << "run directory: " << dir << "\n"
            << "stopped at epoch " << result.stopped_epoch;
  if (result.best_epoch > 0) {
    std::cout << ", best dev metric " << format_double(result.best_dev) << " at epoch "
              << result.best_epoch;
  }
  std::cout << "\n";
  return dir;
}

// ---------------------------------------------------------------------------
// eval

metrics::MetricsReport cmd_eval(const config::RunConfig& cfg, const EvalArgs& args) {
  const auto task = metrics::task_from_name(args.task);

  metrics::MetricsReport report;
  if (!args.predictions.empty()) {
    const auto rows = metrics::read_predictions(args.predictions);
    std::vector<std::string> gold, pred;
    for (const auto& r : rows) {
      gold.push_back(r.gold);
      pred.push_back(r.pred);
    }
    report = metrics::evaluate(gold, pred, cfg.schema, task);
  } else if (!args.checkpoint.empty()) {
    const LoadedData data = load_data(cfg);
    const std::vector<corpus::RelationInstance>* split = nullptr;
    if (args.split == "train") {
      split = &data.dataset.train;
    } else if (args.split == "test") {
      if (!data.dataset.test) throw ConfigError("eval --split test but [data] has no test");
      split = &*data.dataset.test;
    } else {
      throw ConfigError("eval --split must be train or test");
    }
    const auto params = crcnn::load_checkpoint(args.checkpoint);
    const auto hp = cfg.hyperparams();
    const auto pred = train::predict_labels(params, hp.loss, cfg.schema,
                                            cfg.model_config(), *split, data.provider());
    std::vector<std::string> gold;
    for (const auto& inst : *split) gold.push_back(inst.label);
    report = metrics::evaluate(gold, pred, cfg.schema, task);
    if (!args.out_dir.empty()) {
      std::error_code ec;
      fs::create_directories(args.out_dir, ec);
      std::vector<metrics::Prediction> rows;
      for (std::size_t i = 0; i < gold.size(); ++i) {
        rows.push_back({(*split)[i].id, gold[i], pred[i]});
      }
      metrics::write_predictions(rows, args.out_dir + "/predictions.csv");
    }
  } else {
    throw ConfigError("eval requires --predictions or --checkpoint");
  }

  std::cout << metrics::render_report(report);
  if (!args.out_dir.empty()) {
    std::error_code ec;
    fs::create_directories(args.out_dir, ec);
    write_text_file(args.out_dir + "/report.json", metrics::report_to_json(report));
  }
  return report;
}

// ---------------------------------------------------------------------------
// cv

std::string cv_summary_to_json(const CvSummary& summary) {
  nlohmann::json j;
  j["name"] = summary.name;
  j["fold_scores"] = summary.cv.test_scores();
  j["dev_scores"] = summary.cv.dev_scores();
  j["mean"] = summary.cv.mean;
  j["stddev"] = summary.cv.stddev;
  if (summary.test_score) j["test_score"] = *summary.test_score;
  return j.dump(2);
}

experiments::ComparisonRow comparison_row_from_json(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open summary file: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path + ": malformed JSON: " + e.what());
  }
  experiments::ComparisonRow row;
  row.name = j.value("name", path);
  if (j.contains("test_score")) row.test_score = j["test_score"].get<double>();
  if (!j.contains("fold_scores")) throw DataError(path + ": missing fold_scores");
  row.fold_scores = j["fold_scores"].get<std::vector<double>>();
  return row;
}

CvSummary cmd_cv(const config::RunConfig& cfg, const std::string& out_root,
                 const std::string& name) {
  const LoadedData data = load_data(cfg);
  const auto hp = cfg.hyperparams();
  const auto mc = cfg.model_config();

  CvSummary summary;
  summary.name =
      name.empty() ? preprocess::variant_name(cfg.variant) : name;
  summary.cv = experiments::nested_cv(data.dataset, hp, mc, data.provider(), cfg.folds,
                                      cfg.seed, cfg.jobs);

  // Official test-set score alongside the fold distribution, when available.
  if (data.dataset.test && !data.dataset.test->empty()) {
    std::vector<corpus::RelationInstance> train_split, dev_split;
    if (hp.early_stop) {
      carve_dev(data.dataset.train, cfg.dev_fraction, cfg.seed, &train_split, &dev_split);
    } else {
      train_split = data.dataset.train;
    }
    const auto result =
        train::train(data.dataset.schema, train_split, dev_split, hp, mc, data.provider());
    const auto report =
        train::evaluate_model(result.params, hp.loss, data.dataset.schema, mc,
                              *data.dataset.test, data.provider(),
                              metrics::Task::kClassification);
    summary.test_score = report.official_f1(data.dataset.schema.averaging);
  }

  const std::string dir = make_run_dir(cfg, out_root);
  write_text_file(dir + "/config.snapshot", cfg.snapshot());
  write_text_file(dir + "/cv_summary.json", cv_summary_to_json(summary));
  for (const auto& fold : summary.cv.folds) {
    write_text_file(dir + "/fold" + std::to_string(fold.fold) + ".trace.csv",
                    train::trace_to_csv(fold.trace));
  }

  char line[128];
  std::snprintf(line, sizeof(line), "cv %s: mean %.4f (sd %.4f) over %d folds\n",
                summary.name.c_str(), summary.cv.mean, summary.cv.stddev, cfg.folds);
  std::cout << line << "summary: " << dir << "/cv_summary.json\n";
  return summary;
}

// ---------------------------------------------------------------------------
// search

void cmd_search(const config::RunConfig& cfg, const std::string& kind,
                const std::string& out_root) {
  const LoadedData data = load_data(cfg);
  const auto hp = cfg.hyperparams();
  const auto mc = cfg.model_config();
  const std::string dir = make_run_dir(cfg, out_root);
  write_text_file(dir + "/config.snapshot", cfg.snapshot());

  if (kind == "manual") {
    const auto grid = experiments::default_manual_grid(hp);
    const auto sweep =
        experiments::manual_sweep(data.dataset, hp, grid, mc, data.provider(), cfg.folds,
                                  cfg.seed, cfg.alpha, cfg.pass2_cap, cfg.jobs);
    experiments::write_manifest(sweep.ranked(), dir + "/manifest.jsonl");
    nlohmann::json j;
    j["winner_is_default"] = sweep.winner_is_default;
    j["winner_field"] = sweep.winner.field;
    j["winner_value"] = sweep.winner.value_repr;
    j["default_mean_dev"] = sweep.default_trial.mean_dev;
    write_text_file(dir + "/summary.json", j.dump(2));
    std::cout << "manual sweep: " << (sweep.pass1.size() + sweep.pass2.size())
              << " trials; winner "
              << (sweep.winner_is_default
                      ? std::string("default")
                      : sweep.winner.field + " = " + sweep.winner.value_repr)
              << "\nmanifest: " << dir << "/manifest.jsonl\n";
  } else if (kind == "random") {
    const auto search = experiments::random_search(data.dataset, hp, mc, data.provider(),
                                                   cfg.trials, cfg.seed,
                                                   cfg.dev_fraction, cfg.jobs);
    experiments::write_manifest(search.trials, dir + "/manifest.jsonl");
    nlohmann::json j;
    j["best_mean_dev"] = search.trials.front().mean_dev;
    j["best_value"] = search.trials.front().spec.value_repr;
    write_text_file(dir + "/summary.json", j.dump(2));
    std::cout << "random search: " << search.trials.size() << " trials; best dev "
              << format_double(search.trials.front().mean_dev) << " ("
              << search.trials.front().spec.value_repr << ")\nmanifest: " << dir
              << "/manifest.jsonl\n";
  } else {
    throw ConfigError("unknown search kind '" + kind + "' (expected manual or random)");
  }
}

// ---------------------------------------------------------------------------
// report

std::string cmd_report(const std::vector<std::string>& summary_files, double alpha,
                       const std::string& out_file) {
  if (summary_files.size() < 2) {
    throw ConfigError("report needs a baseline and at least one candidate summary");
  }
  std::vector<experiments::ComparisonRow> rows;
  for (const auto& path : summary_files) rows.push_back(comparison_row_from_json(path));
  const std::string table = experiments::render_comparison(rows, alpha);
  std::cout << table;
  if (!out_file.empty()) write_text_file(out_file, table);
  return table;
}

}  // namespace relx::driver
