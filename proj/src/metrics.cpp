#include "relx/metrics.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>
#include <unordered_map>

#include <json.hpp>

#include "relx/common.hpp"
#include "relx/csv.hpp"

namespace relx::metrics {

const char* const kDetectionPositive = "positive";
const char* const kDetectionNegative = "negative";

Task task_from_name(const std::string& name) {
  if (name == "classification") return Task::kClassification;
  if (name == "detection") return Task::kDetection;
  throw ConfigError("unknown task '" + name + "' (expected classification or detection)");
}

std::string task_name(Task task) {
  return task == Task::kClassification ? "classification" : "detection";
}

std::vector<std::string> detection_collapse(const std::vector<std::string>& labels,
                                            const std::string& null_label) {
  std::vector<std::string> out;
  out.reserve(labels.size());
  for (const auto& l : labels) {
    out.emplace_back(l == null_label ? kDetectionNegative : kDetectionPositive);
  }
  return out;
}

namespace {

MetricsReport compute(const std::vector<std::string>& gold,
                      const std::vector<std::string>& pred,
                      const std::vector<std::string>& labels,
                      const std::vector<std::string>& included, Task task) {
  std::unordered_map<std::string, int> index;
  for (std::size_t i = 0; i < labels.size(); ++i) index[labels[i]] = static_cast<int>(i);

  MetricsReport report;
  report.task = task;
  report.labels = labels;
  report.included = included;
  report.total = static_cast<long>(gold.size());
  report.confusion.assign(labels.size(), std::vector<long>(labels.size(), 0));

  long correct = 0;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    const auto g = index.find(gold[i]);
    const auto p = index.find(pred[i]);
    if (g == index.end()) throw DataError("gold label '" + gold[i] + "' not in schema");
    if (p == index.end()) throw DataError("pred label '" + pred[i] + "' not in schema");
    report.confusion[static_cast<std::size_t>(g->second)]
                    [static_cast<std::size_t>(p->second)] += 1;
    if (g->second == p->second) ++correct;
  }
  report.accuracy = gold.empty() ? 0.0 : static_cast<double>(correct) / report.total;

  const auto safe_div = [](double num, double den) { return den == 0.0 ? 0.0 : num / den; };

  long sum_tp = 0, sum_fp = 0, sum_fn = 0;
  double sum_p = 0.0, sum_r = 0.0, sum_f1 = 0.0;
  for (const auto& label : included) {
    const auto c = static_cast<std::size_t>(index.at(label));
    PerClass pc;
    pc.label = label;
    long gold_count = 0, pred_count = 0;
    for (std::size_t other = 0; other < labels.size(); ++other) {
      gold_count += report.confusion[c][other];
      pred_count += report.confusion[other][c];
    }
    pc.tp = report.confusion[c][c];
    pc.fp = pred_count - pc.tp;
    pc.fn = gold_count - pc.tp;
    pc.support = gold_count;
    pc.precision = safe_div(static_cast<double>(pc.tp), static_cast<double>(pc.tp + pc.fp));
    pc.recall = safe_div(static_cast<double>(pc.tp), static_cast<double>(pc.tp + pc.fn));
    pc.f1 = safe_div(2.0 * pc.precision * pc.recall, pc.precision + pc.recall);
    sum_tp += pc.tp;
    sum_fp += pc.fp;
    sum_fn += pc.fn;
    sum_p += pc.precision;
    sum_r += pc.recall;
    sum_f1 += pc.f1;
    report.per_class.push_back(std::move(pc));
  }

  report.micro_p = safe_div(static_cast<double>(sum_tp), static_cast<double>(sum_tp + sum_fp));
  report.micro_r = safe_div(static_cast<double>(sum_tp), static_cast<double>(sum_tp + sum_fn));
  report.micro_f1 = safe_div(2.0 * report.micro_p * report.micro_r,
                             report.micro_p + report.micro_r);
  const auto k = static_cast<double>(included.size());
  report.macro_p = safe_div(sum_p, k);
  report.macro_r = safe_div(sum_r, k);
  report.macro_f1 = safe_div(sum_f1, k);
  return report;
}

}  // namespace

MetricsReport evaluate(const std::vector<std::string>& gold,
                       const std::vector<std::string>& pred,
                       const corpus::RelationSchema& schema, Task task) {
  if (gold.size() != pred.size()) {
    throw DataError("evaluate: gold has " + std::to_string(gold.size()) +
                    " labels but pred has " + std::to_string(pred.size()));
  }
  if (task == Task::kDetection) {
    if (!schema.detection_enabled) {
      throw ConfigError("detection task is disabled for schema " + schema.name);
    }
    const std::vector<std::string> binary = {kDetectionPositive, kDetectionNegative};
    return compute(detection_collapse(gold, schema.null_label),
                   detection_collapse(pred, schema.null_label), binary, binary, task);
  }
  return compute(gold, pred, schema.labels, schema.metric_included, task);
}

ReportDelta compare_reports(const MetricsReport& a, const MetricsReport& b) {
  if (a.labels != b.labels || a.task != b.task || a.included != b.included) {
    throw DataError("compare_reports: reports use different schemas or tasks");
  }
  ReportDelta d;
  for (std::size_t i = 0; i < a.per_class.size(); ++i) {
    d.per_class_f1.emplace_back(a.per_class[i].label,
                                a.per_class[i].f1 - b.per_class[i].f1);
  }
  d.micro_p = a.micro_p - b.micro_p;
  d.micro_r = a.micro_r - b.micro_r;
  d.micro_f1 = a.micro_f1 - b.micro_f1;
  d.macro_p = a.macro_p - b.macro_p;
  d.macro_r = a.macro_r - b.macro_r;
  d.macro_f1 = a.macro_f1 - b.macro_f1;
  d.accuracy = a.accuracy - b.accuracy;
  return d;
}

std::string render_report(const MetricsReport& report) {
  std::ostringstream out;
  char line[160];
  out << "task: " << task_name(report.task) << "\n";
  std::snprintf(line, sizeof(line), "%-24s %9s %9s %9s %9s\n", "class", "P", "R", "F1",
                "support");
  out << line;
  for (const auto& pc : report.per_class) {
    std::snprintf(line, sizeof(line), "%-24s %9.4f %9.4f %9.4f %9ld\n",
                  pc.label.c_str(), pc.precision, pc.recall, pc.f1, pc.support);
    out << line;
  }
  std::snprintf(line, sizeof(line), "%-24s %9.4f %9.4f %9.4f\n", "micro",
                report.micro_p, report.micro_r, report.micro_f1);
  out << line;
  std::snprintf(line, sizeof(line), "%-24s %9.4f %9.4f %9.4f\n", "macro",
                report.macro_p, report.macro_r, report.macro_f1);
  out << line;
  std::snprintf(line, sizeof(line), "%-24s %9.4f   (%ld items)\n", "accuracy",
                report.accuracy, report.total);
  out << line;
  return out.str();
}

std::string report_to_json(const MetricsReport& report) {
  nlohmann::json j;
  j["task"] = task_name(report.task);
  j["labels"] = report.labels;
  j["included"] = report.included;
  j["accuracy"] = report.accuracy;
  j["total"] = report.total;
  j["micro"] = {{"precision", report.micro_p}, {"recall", report.micro_r},
                {"f1", report.micro_f1}};
  j["macro"] = {{"precision", report.macro_p}, {"recall", report.macro_r},
                {"f1", report.macro_f1}};
  j["per_class"] = nlohmann::json::array();
  for (const auto& pc : report.per_class) {
    j["per_class"].push_back({{"label", pc.label},
                              {"precision", pc.precision},
                              {"recall", pc.recall},
                              {"f1", pc.f1},
                              {"support", pc.support},
                              {"tp", pc.tp},
                              {"fp", pc.fp},
                              {"fn", pc.fn}});
  }
  j["confusion"] = report.confusion;
  return j.dump(2);
}

std::vector<Prediction> read_predictions(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open predictions file: " + path);
  auto header = csv::read_record(in);
  const std::vector<std::string> expected = {"id", "gold", "pred"};
  if (!header || *header != expected) {
    throw DataError(path + ": bad or missing header, expected 'id,gold,pred'");
  }
  std::vector<Prediction> out;
  long row = 0;
  while (auto rec = csv::read_record(in)) {
    if (rec->size() == 1 && (*rec)[0].empty()) continue;
    ++row;
    if (rec->size() != 3) {
      throw DataError(path + ", row " + std::to_string(row) + ": expected 3 fields");
    }
    out.push_back({(*rec)[0], (*rec)[1], (*rec)[2]});
  }
  return out;
}

void write_predictions(const std::vector<Prediction>& rows, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write predictions file: " + path);
  out << "id,gold,pred\n";
  for (const auto& r : rows) csv::write_record(out, {r.id, r.gold, r.pred});
  if (!out.flush()) throw DataError("write failed: " + path);
}

}  // namespace relx::metrics
