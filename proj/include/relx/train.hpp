#ifndef RELX_TRAIN_HPP
#define RELX_TRAIN_HPP

#include <cstdint>
#include <limits>
#include <string>
#include <unordered_map>
#include <variant>
#include <vector>

#include "relx/crcnn.hpp"
#include "relx/features.hpp"
#include "relx/metrics.hpp"

namespace relx::train {

// Learning-rate schedules.
struct ConstantLr {
  double lr = 0.01;
};
// Piecewise-constant decay: values[i] applies until the i-th breakpoint epoch.
struct StepSchedule {
  std::vector<double> values = {1e-3, 1e-4, 1e-5};
  std::vector<int> breakpoints = {60, 120};
};
// Linear decay from 0.001 at epoch 1 down to lr_init at ceil(epochs/2),
// constant afterwards.
struct HalfwayDecay {
  double lr_init = 1e-5;
};
using LrSchedule = std::variant<ConstantLr, StepSchedule, HalfwayDecay>;

double schedule_lr(const LrSchedule& schedule, int epoch, int total_epochs);
std::string schedule_repr(const LrSchedule& schedule);
LrSchedule parse_schedule(const std::string& text);

// Early-stop patience rule: a fifth of the epoch budget.
int derive_patience(int epochs);

// Window-size sets use the dash notation "2-3-4".
std::string windows_repr(const std::vector<int>& windows);
std::vector<int> parse_windows(const std::string& text);

// Every tunable knob of a run.
struct HyperParams {
  int epochs = 100;
  int batch_size = 30;
  LrSchedule lr = ConstantLr{0.01};
  double momentum = 0.0;  // 0 = plain SGD; 0.9 when the toggle is on
  bool early_stop = false;
  int patience = 0;  // 0 -> derive_patience(epochs)
  int pos_embed_dim = 10;
  int filters_per_size = 50;
  std::vector<int> window_sizes = {2, 3, 4};
  int max_dist = 50;
  std::uint64_t seed = 42;
  crcnn::LossConfig loss;

  int effective_patience() const { return patience > 0 ? patience : derive_patience(epochs); }
};

// Model axes that are switched per experiment but not swept numerically.
struct ModelConfig {
  crcnn::Pooling pooling = crcnn::Pooling::kMax;
  crcnn::Nonlinearity nonlinearity = crcnn::Nonlinearity::kTanh;
  features::ContextMode ctx_mode = features::ContextMode::kNone;
  bool use_cls = false;  // concatenate the sentence vector after pooling
  int word_dim = 50;     // used when no pre-trained table is supplied
  double oov_range = 0.25;
  bool freeze_words = false;
};

// Read-only feature inputs shared across runs.
struct FeatureProvider {
  const features::WordEmbeddingTable* pretrained = nullptr;
  const std::unordered_map<std::string, features::ContextualFeatures>* contextual = nullptr;
};

struct EpochStats {
  int epoch = 0;
  double lr = 0.0;
  double train_loss = 0.0;
  double dev_metric = std::numeric_limits<double>::quiet_NaN();
};

struct TrainResult {
  crcnn::ModelParams params;       // best-restored under early stopping
  crcnn::ModelParams best_params;  // highest dev metric (== params when restored)
  std::vector<EpochStats> trace;   // one entry per completed epoch
  int stopped_epoch = 0;
  int best_epoch = 0;  // 0 when no dev split
  double best_dev = std::numeric_limits<double>::quiet_NaN();
  std::uint64_t seed = 0;
  double wall_seconds = 0.0;
};

// Deterministic minibatch SGD. Given identical (data, hp, seed) the metric
// trace and checkpoint bytes are identical across reruns. Throws DataError
// on divergence (non-finite loss), naming the epoch and batch.
TrainResult train(const corpus::RelationSchema& schema,
                  const std::vector<corpus::RelationInstance>& train_split,
                  const std::vector<corpus::RelationInstance>& dev_split,
                  const HyperParams& hp, const ModelConfig& mc,
                  const FeatureProvider& provider);

std::vector<std::string> predict_labels(
    const crcnn::ModelParams& params, const crcnn::LossConfig& loss,
    const corpus::RelationSchema& schema, const ModelConfig& mc,
    const std::vector<corpus::RelationInstance>& instances,
    const FeatureProvider& provider);

metrics::MetricsReport evaluate_model(
    const crcnn::ModelParams& params, const crcnn::LossConfig& loss,
    const corpus::RelationSchema& schema, const ModelConfig& mc,
    const std::vector<corpus::RelationInstance>& instances,
    const FeatureProvider& provider, metrics::Task task);

// Run directory artifacts: config.snapshot, trace.csv, best.ckpt, final.ckpt.
void write_run_artifacts(const TrainResult& result, const std::string& dir,
                         const std::string& config_snapshot);
std::string trace_to_csv(const std::vector<EpochStats>& trace);

}  // namespace relx::train

#endif  // RELX_TRAIN_HPP
