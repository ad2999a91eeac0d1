// Command-line entry point wiring all pipeline stages:
//   format | preprocess | train | eval | cv | search {manual|random} | report
// Exit codes: 0 success, 2 config error, 3 data error, 4 runtime failure.

#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "relx/common.hpp"
#include "relx/config.hpp"
#include "relx/driver.hpp"

namespace {

struct CommonOpts {
  std::string config_path;
  std::vector<std::string> overrides;
  std::string out = "runs";
};

void add_config_opts(CLI::App* cmd, CommonOpts& opts, bool with_out = true) {
  cmd->add_option("--config", opts.config_path, "run configuration file (INI)")
      ->required();
  cmd->add_option("--set", opts.overrides,
                  "override a config value, section.key=value (repeatable)");
  if (with_out) {
    cmd->add_option("--out", opts.out, "output root for run directories");
  }
}

relx::config::RunConfig load_config(const CommonOpts& opts) {
  return relx::config::RunConfig::load(opts.config_path, opts.overrides);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"relation-extraction experimentation pipeline"};
  app.require_subcommand(1);

  // format
  auto* format = app.add_subcommand("format", "convert a raw dataset to the common CSV");
  relx::driver::FormatArgs format_args;
  std::string synth_mode = "trigger";
  long synth_seed = 1;
  format->add_option("--adapter", format_args.adapter, "semeval | synth")->required();
  format->add_option("--in", format_args.in, "raw training file");
  format->add_option("--test-in", format_args.test_in, "raw test file");
  format->add_option("--out", format_args.out_dir, "output directory")->required();
  format->add_option("--size", format_args.synth.size, "synth: training instances");
  format->add_option("--classes", format_args.synth.classes, "synth: class count");
  format->add_option("--seed", synth_seed, "synth: generator seed");
  format->add_option("--test-size", format_args.synth.test_size,
                     "synth: test instances (default size/5)");
  format->add_option("--mode", synth_mode, "synth: trigger | typed");

  // preprocess
  auto* preprocess = app.add_subcommand("preprocess", "apply a preprocessing variant");
  CommonOpts preprocess_opts;
  std::string pre_in, pre_out;
  add_config_opts(preprocess, preprocess_opts, false);
  preprocess->add_option("--in", pre_in, "input common CSV")->required();
  preprocess->add_option("--out-csv", pre_out, "output common CSV")->required();

  // train
  auto* train = app.add_subcommand("train", "train one model");
  CommonOpts train_opts;
  add_config_opts(train, train_opts);

  // eval
  auto* eval = app.add_subcommand("eval", "score predictions or a checkpoint");
  CommonOpts eval_opts;
  relx::driver::EvalArgs eval_args;
  add_config_opts(eval, eval_opts, false);
  eval->add_option("--predictions", eval_args.predictions, "id,gold,pred CSV");
  eval->add_option("--checkpoint", eval_args.checkpoint, "model checkpoint");
  eval->add_option("--split", eval_args.split, "train | test (with --checkpoint)");
  eval->add_option("--task", eval_args.task, "classification | detection");
  eval->add_option("--out", eval_args.out_dir, "directory for report.json");

  // cv
  auto* cv = app.add_subcommand("cv", "nested cross-validation");
  CommonOpts cv_opts;
  std::string cv_name;
  long cv_folds = 0;
  add_config_opts(cv, cv_opts);
  cv->add_option("--folds", cv_folds, "override experiment.folds");
  cv->add_option("--name", cv_name, "row label for reports");

  // search
  auto* search = app.add_subcommand("search", "hyperparameter search");
  CommonOpts search_opts;
  std::string search_kind;
  long search_trials = 0;
  search->add_option("kind", search_kind, "manual | random")->required();
  add_config_opts(search, search_opts);
  search->add_option("--trials", search_trials, "override experiment.trials");

  // report
  auto* report = app.add_subcommand("report", "comparison table from cv summaries");
  std::vector<std::string> report_files;
  double report_alpha = 0.05;
  std::string report_out;
  report->add_option("--cv", report_files,
                     "cv_summary.json files; first one is the baseline (repeatable)")
      ->required();
  report->add_option("--alpha", report_alpha, "significance level");
  report->add_option("--out", report_out, "write the table to a file");

  CLI11_PARSE(app, argc, argv);

  try {
    if (format->parsed()) {
      format_args.synth.seed = static_cast<std::uint64_t>(synth_seed);
      if (synth_mode == "trigger") {
        format_args.synth.mode = relx::corpus::SynthMode::kTrigger;
      } else if (synth_mode == "typed") {
        format_args.synth.mode = relx::corpus::SynthMode::kTyped;
      } else {
        throw relx::ConfigError("--mode must be trigger or typed");
      }
      relx::driver::cmd_format(format_args);
    } else if (preprocess->parsed()) {
      relx::driver::cmd_preprocess(load_config(preprocess_opts), pre_in, pre_out);
    } else if (train->parsed()) {
      relx::driver::cmd_train(load_config(train_opts), train_opts.out);
    } else if (eval->parsed()) {
      relx::driver::cmd_eval(load_config(eval_opts), eval_args);
    } else if (cv->parsed()) {
      if (cv_folds > 0) {
        cv_opts.overrides.push_back("experiment.folds=" + std::to_string(cv_folds));
      }
      relx::driver::cmd_cv(load_config(cv_opts), cv_opts.out, cv_name);
    } else if (search->parsed()) {
      if (search_trials > 0) {
        search_opts.overrides.push_back("experiment.trials=" +
                                        std::to_string(search_trials));
      }
      relx::driver::cmd_search(load_config(search_opts), search_kind, search_opts.out);
    } else if (report->parsed()) {
      relx::driver::cmd_report(report_files, report_alpha, report_out);
    }
  } catch (const relx::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const relx::DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  }
  return 0;
}
