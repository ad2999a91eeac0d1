#include "relx/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>

#include "relx/common.hpp"

namespace relx::train {

using crcnn::LabelMap;
using crcnn::ModelParams;
using features::Matrix;
using features::Vector;

// ---------------------------------------------------------------------------
// Schedules.

double schedule_lr(const LrSchedule& schedule, int epoch, int total_epochs) {
  if (epoch < 1) throw ConfigError("schedule_lr: epoch must be >= 1");
  return std::visit(
      [&](const auto& s) -> double {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, ConstantLr>) {
          return s.lr;
        } else if constexpr (std::is_same_v<T, StepSchedule>) {
          std::size_t i = 0;
          while (i < s.breakpoints.size() && epoch >= s.breakpoints[i]) ++i;
          return s.values[i];
        } else {
          static_assert(std::is_same_v<T, HalfwayDecay>);
          const double start = 0.001;
          const int half = (total_epochs + 1) / 2;
          if (epoch >= half || half <= 1) return s.lr_init;
          const double frac = static_cast<double>(epoch - 1) / (half - 1);
          return start + (s.lr_init - start) * frac;
        }
      },
      schedule);
}

std::string schedule_repr(const LrSchedule& schedule) {
  return std::visit(
      [](const auto& s) -> std::string {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, ConstantLr>) {
          return "constant:" + format_double(s.lr);
        } else if constexpr (std::is_same_v<T, StepSchedule>) {
          std::string out = "step:";
          for (std::size_t i = 0; i < s.values.size(); ++i) {
            if (i) out += ',';
            out += format_double(s.values[i]);
          }
          out += '@';
          for (std::size_t i = 0; i < s.breakpoints.size(); ++i) {
            if (i) out += ',';
            out += std::to_string(s.breakpoints[i]);
          }
          return out;
        } else {
          return "halfway:" + format_double(s.lr_init);
        }
      },
      schedule);
}

LrSchedule parse_schedule(const std::string& text) {
  const auto colon = text.find(':');
  const std::string kind = text.substr(0, colon);
  const std::string rest = colon == std::string::npos ? "" : text.substr(colon + 1);
  if (kind == "constant") {
    if (rest.empty()) throw ConfigError("lr: constant needs a value, e.g. constant:0.01");
    return ConstantLr{parse_double(rest, "lr")};
  }
  if (kind == "halfway") {
    if (rest.empty()) throw ConfigError("lr: halfway needs a value, e.g. halfway:1e-5");
    const double lr_init = parse_double(rest, "lr");
    if (lr_init <= 0.0 || lr_init > 0.001) {
      throw ConfigError("lr: halfway initial value must be in (0, 0.001]");
    }
    return HalfwayDecay{lr_init};
  }
  if (kind == "step") {
    const auto at = rest.find('@');
    if (at == std::string::npos) {
      throw ConfigError("lr: step needs values@breakpoints, e.g. step:1e-3,1e-4,1e-5@60,120");
    }
    StepSchedule s;
    s.values.clear();
    s.breakpoints.clear();
    for (const auto& v : split(rest.substr(0, at), ',')) {
      s.values.push_back(parse_double(v, "lr value"));
    }
    for (const auto& b : split(rest.substr(at + 1), ',')) {
      s.breakpoints.push_back(static_cast<int>(parse_long(b, "lr breakpoint")));
    }
    if (s.values.size() != s.breakpoints.size() + 1) {
      throw ConfigError("lr: step needs one more value than breakpoints");
    }
    for (std::size_t i = 0; i < s.values.size(); ++i) {
      if (s.values[i] <= 0.0) throw ConfigError("lr: step values must be positive");
      if (i > 0 && s.values[i] > s.values[i - 1]) {
        throw ConfigError("lr: step values must be non-increasing");
      }
    }
    return s;
  }
  throw ConfigError("unknown lr schedule '" + text +
                    "' (expected constant:X, step:...@..., or halfway:X)");
}

int derive_patience(int epochs) {
  if (epochs < 5) throw ConfigError("derive_patience: epochs must be >= 5");
  return epochs / 5;
}

std::string windows_repr(const std::vector<int>& windows) {
  std::string out;
  for (std::size_t i = 0; i < windows.size(); ++i) {
    if (i) out += '-';
    out += std::to_string(windows[i]);
  }
  return out;
}

std::vector<int> parse_windows(const std::string& text) {
  std::vector<int> out;
  for (const auto& part : split(text, '-')) {
    const long w = parse_long(part, "window size");
    if (w < 1) throw ConfigError("window sizes must be >= 1");
    out.push_back(static_cast<int>(w));
  }
  if (out.empty()) throw ConfigError("empty window size list");
  return out;
}

// ---------------------------------------------------------------------------
// Instance encoding.

namespace {

struct Encoded {
  std::vector<int> word_rows;
  std::vector<int> pos1_rows, pos2_rows;
  corpus::Span e1, e2;
  int gold_label = -1;   // index into schema.labels
  int gold_scored = -1;  // score row, -1 when the gold class is unscored
  const features::ContextualFeatures* ctx = nullptr;
};

const features::ContextualFeatures* find_ctx(const FeatureProvider& provider,
                                             const corpus::RelationInstance& inst) {
  if (provider.contextual == nullptr) {
    throw ConfigError("contextual features requested but no feature file was loaded");
  }
  const auto it = provider.contextual->find(inst.id);
  if (it == provider.contextual->end()) {
    throw DataError("no contextual features for instance '" + inst.id + "'");
  }
  return &it->second;
}

Encoded encode(const corpus::RelationInstance& inst, const ModelParams& params,
               const corpus::RelationSchema& schema, const LabelMap& map,
               const ModelConfig& mc, const FeatureProvider& provider) {
  Encoded enc;
  enc.e1 = inst.e1;
  enc.e2 = inst.e2;
  enc.gold_label = schema.label_index(inst.label);
  enc.gold_scored = map.label_to_scored[static_cast<std::size_t>(enc.gold_label)];
  const int n = static_cast<int>(inst.tokens.size());
  enc.word_rows.reserve(static_cast<std::size_t>(n));
  for (const auto& tok : inst.tokens) enc.word_rows.push_back(params.words.row_of(tok));
  for (int i = 0; i < n; ++i) {
    enc.pos1_rows.push_back(features::position_row(
        features::relative_position(i, inst.e1, params.max_dist), params.max_dist));
    enc.pos2_rows.push_back(features::position_row(
        features::relative_position(i, inst.e2, params.max_dist), params.max_dist));
  }
  if (mc.ctx_mode == features::ContextMode::kConcatTokens || mc.use_cls) {
    enc.ctx = find_ctx(provider, inst);
    if (mc.ctx_mode == features::ContextMode::kConcatTokens &&
        enc.ctx->token_vectors.rows() != n) {
      throw DataError("contextual features for '" + inst.id + "' have " +
                      std::to_string(enc.ctx->token_vectors.rows()) + " rows for " +
                      std::to_string(n) + " tokens");
    }
    if (mc.use_cls && !enc.ctx->sentence_vector) {
      throw ConfigError("sentence-level concatenation requested but instance '" +
                        inst.id + "' has no sentence_vector");
    }
  }
  return enc;
}

// Builds the n x D input from the model's current tables. Semantics match
// features::assemble_input; this path works from pre-resolved row indices.
Matrix assemble(const Encoded& enc, const ModelParams& params, const ModelConfig& mc) {
  const long n = static_cast<long>(enc.word_rows.size());
  const int d_w = params.words.dim();
  const long d_p = params.pos1.cols();
  const long d_c =
      mc.ctx_mode == features::ContextMode::kConcatTokens ? enc.ctx->token_vectors.cols() : 0;
  Matrix input(n, d_w + 2 * d_p + d_c);
  for (long i = 0; i < n; ++i) {
    input.block(i, 0, 1, d_w) =
        params.words.matrix().row(enc.word_rows[static_cast<std::size_t>(i)]);
    input.block(i, d_w, 1, d_p) =
        params.pos1.row(enc.pos1_rows[static_cast<std::size_t>(i)]);
    input.block(i, d_w + d_p, 1, d_p) =
        params.pos2.row(enc.pos2_rows[static_cast<std::size_t>(i)]);
    if (d_c > 0) input.block(i, d_w + 2 * d_p, 1, d_c) = enc.ctx->token_vectors.row(i);
  }
  return input;
}

const Vector* cls_of(const Encoded& enc, const ModelConfig& mc) {
  return mc.use_cls ? &*enc.ctx->sentence_vector : nullptr;
}

// Velocity / accumulator state for SGD with optional momentum.
struct Optimizer {
  double momentum = 0.0;
  bool freeze_words = false;
  // Velocities, allocated lazily when momentum is on.
  Matrix v_words, v_pos1, v_pos2, v_class;
  std::vector<Matrix> v_filters;
  std::vector<Vector> v_biases;

  void init(const ModelParams& p) {
    if (momentum <= 0.0) return;
    v_words = Matrix::Zero(p.words.matrix().rows(), p.words.matrix().cols());
    v_pos1 = Matrix::Zero(p.pos1.rows(), p.pos1.cols());
    v_pos2 = Matrix::Zero(p.pos2.rows(), p.pos2.cols());
    v_class = Matrix::Zero(p.class_weights.rows(), p.class_weights.cols());
    for (std::size_t w = 0; w < p.filters.size(); ++w) {
      v_filters.emplace_back(Matrix::Zero(p.filters[w].rows(), p.filters[w].cols()));
      v_biases.emplace_back(Vector::Zero(p.biases[w].size()));
    }
  }

  // Dense tensors: grad holds the batch-averaged gradient.
  template <class T>
  void apply(T& param, T* velocity, const T& grad, double lr) {
    if (momentum > 0.0) {
      *velocity = momentum * *velocity + grad;
      param -= lr * *velocity;
    } else {
      param -= lr * grad;
    }
  }
};

// Gradient accumulator for the embedding tables: dense buffers plus touched
// row lists so momentum-off updates stay sparse.
struct EmbeddingGrads {
  Matrix words, pos1, pos2;
  std::vector<int> touched_words, touched_pos1, touched_pos2;
  std::vector<char> seen_words, seen_pos1, seen_pos2;

  void init(const ModelParams& p) {
    words = Matrix::Zero(p.words.matrix().rows(), p.words.matrix().cols());
    pos1 = Matrix::Zero(p.pos1.rows(), p.pos1.cols());
    pos2 = Matrix::Zero(p.pos2.rows(), p.pos2.cols());
    seen_words.assign(static_cast<std::size_t>(words.rows()), 0);
    seen_pos1.assign(static_cast<std::size_t>(pos1.rows()), 0);
    seen_pos2.assign(static_cast<std::size_t>(pos2.rows()), 0);
  }

  void clear() {
    for (int r : touched_words) words.row(r).setZero();
    for (int r : touched_pos1) pos1.row(r).setZero();
    for (int r : touched_pos2) pos2.row(r).setZero();
    for (int r : touched_words) seen_words[static_cast<std::size_t>(r)] = 0;
    for (int r : touched_pos1) seen_pos1[static_cast<std::size_t>(r)] = 0;
    for (int r : touched_pos2) seen_pos2[static_cast<std::size_t>(r)] = 0;
    touched_words.clear();
    touched_pos1.clear();
    touched_pos2.clear();
  }

  void touch(std::vector<int>& touched, std::vector<char>& seen, int row) {
    if (!seen[static_cast<std::size_t>(row)]) {
      seen[static_cast<std::size_t>(row)] = 1;
      touched.push_back(row);
    }
  }
};

double official_metric(const metrics::MetricsReport& report,
                       const corpus::RelationSchema& schema) {
  return report.official_f1(schema.averaging);
}

}  // namespace

// ---------------------------------------------------------------------------
// Training loop.

TrainResult train(const corpus::RelationSchema& schema,
                  const std::vector<corpus::RelationInstance>& train_split,
                  const std::vector<corpus::RelationInstance>& dev_split,
                  const HyperParams& hp, const ModelConfig& mc,
                  const FeatureProvider& provider) {
  const auto t_start = std::chrono::steady_clock::now();
  if (train_split.empty()) throw DataError("train: empty training split");
  if (hp.early_stop && dev_split.empty()) {
    throw ConfigError("train: early stopping requires a dev split");
  }
  if (hp.epochs < 1 || hp.batch_size < 1) {
    throw ConfigError("train: epochs and batch_size must be >= 1");
  }

  const LabelMap map = LabelMap::build(schema, hp.loss.score_null);

  // Word table: pre-trained copy or fresh random table, with rows
  // materialized for every corpus token so they can be trained.
  features::WordEmbeddingTable words;
  std::vector<std::string> all_tokens;
  for (const auto* split : {&train_split, &dev_split}) {
    for (const auto& inst : *split) {
      all_tokens.insert(all_tokens.end(), inst.tokens.begin(), inst.tokens.end());
    }
  }
  if (provider.pretrained != nullptr) {
    words = *provider.pretrained;
    words.materialize(all_tokens);
  } else {
    words = features::WordEmbeddingTable::random_init({}, mc.word_dim, hp.seed,
                                                      mc.oov_range);
    words.materialize(all_tokens);
  }

  // Model shape from the hyperparameters plus contextual dimensions.
  long d_c = 0;
  int cls_dim = 0;
  if (mc.ctx_mode == features::ContextMode::kConcatTokens || mc.use_cls) {
    if (provider.contextual == nullptr || provider.contextual->empty()) {
      throw ConfigError("contextual mode requested but no contextual features loaded");
    }
    const auto& first = provider.contextual->begin()->second;
    if (mc.ctx_mode == features::ContextMode::kConcatTokens) {
      d_c = first.token_vectors.cols();
    }
    if (mc.use_cls) {
      if (!first.sentence_vector) {
        throw ConfigError("sentence-level concatenation requested but the feature file "
                          "has no sentence_vector records");
      }
      cls_dim = static_cast<int>(first.sentence_vector->size());
    }
  }

  crcnn::ModelShape shape;
  shape.input_dim = words.dim() + 2 * hp.pos_embed_dim + static_cast<int>(d_c);
  shape.window_sizes = hp.window_sizes;
  shape.filters_per_size = hp.filters_per_size;
  shape.pooling = mc.pooling;
  shape.nonlinearity = mc.nonlinearity;
  shape.cls_dim = cls_dim;
  shape.num_scored = map.num_scored();

  ModelParams params =
      ModelParams::init(shape, std::move(words), hp.max_dist, hp.pos_embed_dim, hp.seed);

  std::vector<Encoded> train_enc, dev_enc;
  train_enc.reserve(train_split.size());
  for (const auto& inst : train_split) {
    train_enc.push_back(encode(inst, params, schema, map, mc, provider));
  }
  dev_enc.reserve(dev_split.size());
  for (const auto& inst : dev_split) {
    dev_enc.push_back(encode(inst, params, schema, map, mc, provider));
  }

  std::vector<std::string> dev_gold;
  dev_gold.reserve(dev_split.size());
  for (const auto& inst : dev_split) dev_gold.push_back(inst.label);

  Optimizer opt;
  opt.momentum = hp.momentum;
  opt.freeze_words = mc.freeze_words;
  opt.init(params);

  EmbeddingGrads egrads;
  egrads.init(params);

  Rng shuffle_rng = derived_rng(hp.seed, RngStream::kShuffle);
  std::vector<std::size_t> order(train_enc.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  TrainResult result;
  result.seed = hp.seed;

  crcnn::ModelParams best;
  bool have_best = false;
  double best_dev = -std::numeric_limits<double>::infinity();
  int best_epoch = 0;
  int epochs_since_best = 0;
  const int patience = hp.early_stop ? hp.effective_patience() : 0;

  const auto dev_metric_now = [&]() {
    std::vector<std::string> pred;
    pred.reserve(dev_enc.size());
    for (const auto& enc : dev_enc) {
      const Matrix input = assemble(enc, params, mc);
      const auto fwd = crcnn::forward(params, input, enc.e1, enc.e2, cls_of(enc, mc));
      pred.push_back(
          schema.labels[static_cast<std::size_t>(crcnn::predict(fwd.scores, hp.loss, map))]);
    }
    return official_metric(
        metrics::evaluate(dev_gold, pred, schema, metrics::Task::kClassification), schema);
  };

  for (int epoch = 1; epoch <= hp.epochs; ++epoch) {
    const double lr = schedule_lr(hp.lr, epoch, hp.epochs);
    shuffle_rng.shuffle(order);

    double epoch_loss = 0.0;
    std::size_t cursor = 0;
    long batch_index = 0;
    while (cursor < order.size()) {
      const std::size_t batch_end =
          std::min(order.size(), cursor + static_cast<std::size_t>(hp.batch_size));
      const double batch_n = static_cast<double>(batch_end - cursor);

      crcnn::Gradients acc = crcnn::zero_gradients(params, 1);
      egrads.clear();
      double batch_loss = 0.0;
      for (std::size_t i = cursor; i < batch_end; ++i) {
        const Encoded& enc = train_enc[order[i]];
        const Matrix input = assemble(enc, params, mc);
        const auto fwd = crcnn::forward(params, input, enc.e1, enc.e2, cls_of(enc, mc));
        const auto loss = crcnn::ranking_loss(fwd.scores, enc.gold_scored, hp.loss);
        batch_loss += loss.loss;
        const auto g = crcnn::backward(params, fwd.cache, loss.dscores);
        acc.add_scaled(g, 1.0);
        // Route input-row gradients to the embedding tables.
        const int d_w = params.words.dim();
        const long d_p = params.pos1.cols();
        for (long r = 0; r < g.input.rows(); ++r) {
          const int wr = enc.word_rows[static_cast<std::size_t>(r)];
          const int p1 = enc.pos1_rows[static_cast<std::size_t>(r)];
          const int p2 = enc.pos2_rows[static_cast<std::size_t>(r)];
          if (!opt.freeze_words) {
            egrads.words.row(wr) += g.input.block(r, 0, 1, d_w);
            egrads.touch(egrads.touched_words, egrads.seen_words, wr);
          }
          egrads.pos1.row(p1) += g.input.block(r, d_w, 1, d_p);
          egrads.touch(egrads.touched_pos1, egrads.seen_pos1, p1);
          egrads.pos2.row(p2) += g.input.block(r, d_w + d_p, 1, d_p);
          egrads.touch(egrads.touched_pos2, egrads.seen_pos2, p2);
        }
      }
      if (!std::isfinite(batch_loss)) {
        throw DataError("train: non-finite loss at epoch " + std::to_string(epoch) +
                        ", batch " + std::to_string(batch_index));
      }
      epoch_loss += batch_loss;

      // Batch-averaged update.
      const double inv = 1.0 / batch_n;
      acc.scale(inv);
      const bool mom = opt.momentum > 0.0;
      for (std::size_t w = 0; w < params.filters.size(); ++w) {
        opt.apply(params.filters[w], mom ? &opt.v_filters[w] : nullptr, acc.filters[w], lr);
        opt.apply(params.biases[w], mom ? &opt.v_biases[w] : nullptr, acc.biases[w], lr);
      }
      opt.apply(params.class_weights, mom ? &opt.v_class : nullptr, acc.class_weights, lr);

      if (opt.momentum > 0.0) {
        // Dense velocity updates keep momentum semantics exact for every row.
        if (!opt.freeze_words) {
          opt.v_words = opt.momentum * opt.v_words + inv * egrads.words;
          params.words.matrix() -= lr * opt.v_words;
        }
        opt.v_pos1 = opt.momentum * opt.v_pos1 + inv * egrads.pos1;
        params.pos1 -= lr * opt.v_pos1;
        opt.v_pos2 = opt.momentum * opt.v_pos2 + inv * egrads.pos2;
        params.pos2 -= lr * opt.v_pos2;
      } else {
        if (!opt.freeze_words) {
          for (int r : egrads.touched_words) {
            params.words.matrix().row(r) -= lr * inv * egrads.words.row(r);
          }
        }
        for (int r : egrads.touched_pos1) params.pos1.row(r) -= lr * inv * egrads.pos1.row(r);
        for (int r : egrads.touched_pos2) params.pos2.row(r) -= lr * inv * egrads.pos2.row(r);
      }

      cursor = batch_end;
      ++batch_index;
    }

    EpochStats stats;
    stats.epoch = epoch;
    stats.lr = lr;
    stats.train_loss = epoch_loss / static_cast<double>(train_enc.size());
    if (!dev_enc.empty()) {
      stats.dev_metric = dev_metric_now();
      // Strict improvement at 1e-12 resolution.
      if (!have_best || stats.dev_metric > best_dev + 1e-12) {
        best_dev = stats.dev_metric;
        best_epoch = epoch;
        best = params;
        have_best = true;
        epochs_since_best = 0;
      } else {
        ++epochs_since_best;
      }
    }
    result.trace.push_back(stats);
    result.stopped_epoch = epoch;

    if (hp.early_stop && epochs_since_best >= patience) break;
  }

  result.best_epoch = best_epoch;
  result.best_dev = have_best ? best_dev : std::numeric_limits<double>::quiet_NaN();
  result.best_params = have_best ? best : params;
  result.params = (hp.early_stop && have_best) ? best : params;
  result.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
  return result;
}

// ---------------------------------------------------------------------------
// Prediction and evaluation.

std::vector<std::string> predict_labels(
    const crcnn::ModelParams& params, const crcnn::LossConfig& loss,
    const corpus::RelationSchema& schema, const ModelConfig& mc,
    const std::vector<corpus::RelationInstance>& instances,
    const FeatureProvider& provider) {
  const LabelMap map = LabelMap::build(schema, loss.score_null);
  if (map.num_scored() != params.shape.num_scored) {
    throw ConfigError("schema/score_null does not match the checkpointed model");
  }
  std::vector<std::string> out;
  out.reserve(instances.size());
  for (const auto& inst : instances) {
    const Encoded enc = encode(inst, params, schema, map, mc, provider);
    const Matrix input = assemble(enc, params, mc);
    const auto fwd = crcnn::forward(params, input, enc.e1, enc.e2, cls_of(enc, mc));
    out.push_back(
        schema.labels[static_cast<std::size_t>(crcnn::predict(fwd.scores, loss, map))]);
  }
  return out;
}

metrics::MetricsReport evaluate_model(
    const crcnn::ModelParams& params, const crcnn::LossConfig& loss,
    const corpus::RelationSchema& schema, const ModelConfig& mc,
    const std::vector<corpus::RelationInstance>& instances,
    const FeatureProvider& provider, metrics::Task task) {
  std::vector<std::string> gold;
  gold.reserve(instances.size());
  for (const auto& inst : instances) gold.push_back(inst.label);
  const auto pred = predict_labels(params, loss, schema, mc, instances, provider);
  return metrics::evaluate(gold, pred, schema, task);
}

// ---------------------------------------------------------------------------
// Artifacts.

std::string trace_to_csv(const std::vector<EpochStats>& trace) {
  std::string out = "epoch,lr,train_loss,dev_metric\n";
  for (const auto& s : trace) {
    out += std::to_string(s.epoch);
    out += ',';
    out += format_double(s.lr);
    out += ',';
    out += format_double(s.train_loss);
    out += ',';
    if (!std::isnan(s.dev_metric)) out += format_double(s.dev_metric);
    out += '\n';
  }
  return out;
}

void write_run_artifacts(const TrainResult& result, const std::string& dir,
                         const std::string& config_snapshot) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw DataError("cannot create run directory: " + dir);

  const auto write_text = [&](const std::string& name, const std::string& text) {
    std::ofstream out(dir + "/" + name, std::ios::binary);
    if (!out) throw DataError("cannot write " + dir + "/" + name);
    out << text;
    if (!out.flush()) throw DataError("write failed: " + dir + "/" + name);
  };
  write_text("config.snapshot", config_snapshot);
  write_text("trace.csv", trace_to_csv(result.trace));
  crcnn::save_checkpoint(result.best_params, dir + "/best.ckpt");
  crcnn::save_checkpoint(result.params, dir + "/final.ckpt");
}

}  // namespace relx::train
