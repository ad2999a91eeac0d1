#ifndef RELX_METRICS_HPP
#define RELX_METRICS_HPP

#include <string>
#include <vector>

#include "relx/corpus.hpp"

namespace relx::metrics {

enum class Task { kClassification, kDetection };

Task task_from_name(const std::string& name);
std::string task_name(Task task);

struct PerClass {
  std::string label;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  long support = 0;  // gold occurrences
  long tp = 0, fp = 0, fn = 0;
};

struct MetricsReport {
  Task task = Task::kClassification;
  std::vector<std::string> labels;           // full label set of the report
  std::vector<std::string> included;         // labels entering micro/macro
  std::vector<PerClass> per_class;           // one entry per included label
  double micro_p = 0.0, micro_r = 0.0, micro_f1 = 0.0;
  double macro_p = 0.0, macro_r = 0.0, macro_f1 = 0.0;
  double accuracy = 0.0;                     // over all positions
  std::vector<std::vector<long>> confusion;  // [gold][pred] over `labels`
  long total = 0;

  // The dataset's official aggregate (Table-style macro or micro F1).
  double official_f1(corpus::Averaging averaging) const {
    return averaging == corpus::Averaging::kMacro ? macro_f1 : micro_f1;
  }
};

// Computes metrics for gold/pred label sequences under the schema's
// inclusion policy. Detection collapses both sequences to positive/negative
// around the schema's null label and scores both collapsed classes; it is
// refused when the schema has detection disabled.
MetricsReport evaluate(const std::vector<std::string>& gold,
                       const std::vector<std::string>& pred,
                       const corpus::RelationSchema& schema, Task task);

extern const char* const kDetectionPositive;
extern const char* const kDetectionNegative;

// x -> negative iff x == null_label, else positive.
std::vector<std::string> detection_collapse(const std::vector<std::string>& labels,
                                            const std::string& null_label);

// Signed differences (a - b) for every aggregate and per-class metric.
struct ReportDelta {
  std::vector<std::pair<std::string, double>> per_class_f1;
  double micro_p = 0.0, micro_r = 0.0, micro_f1 = 0.0;
  double macro_p = 0.0, macro_r = 0.0, macro_f1 = 0.0;
  double accuracy = 0.0;
};

ReportDelta compare_reports(const MetricsReport& a, const MetricsReport& b);

// Human-readable table and a machine-readable JSON mirror.
std::string render_report(const MetricsReport& report);
std::string report_to_json(const MetricsReport& report);

// Predictions file: CSV with header id,gold,pred.
struct Prediction {
  std::string id, gold, pred;
};
std::vector<Prediction> read_predictions(const std::string& path);
void write_predictions(const std::vector<Prediction>& rows, const std::string& path);

}  // namespace relx::metrics

#endif  // RELX_METRICS_HPP
