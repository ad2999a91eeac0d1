#include "relx/crcnn.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include <json.hpp>

#include "relx/common.hpp"

namespace relx::crcnn {

Pooling pooling_from_name(const std::string& name) {
  if (name == "max") return Pooling::kMax;
  if (name == "piecewise") return Pooling::kPiecewise;
  throw ConfigError("unknown pooling '" + name + "' (expected max or piecewise)");
}

std::string pooling_name(Pooling pooling) {
  return pooling == Pooling::kMax ? "max" : "piecewise";
}

LabelMap LabelMap::build(const corpus::RelationSchema& schema, bool score_null) {
  LabelMap map;
  map.label_to_scored.assign(schema.labels.size(), -1);
  if (schema.has_null()) map.null_label = schema.label_index(schema.null_label);
  for (int i = 0; i < static_cast<int>(schema.labels.size()); ++i) {
    if (!score_null && i == map.null_label) continue;
    map.label_to_scored[static_cast<std::size_t>(i)] =
        static_cast<int>(map.scored_to_label.size());
    map.scored_to_label.push_back(i);
  }
  if (map.scored_to_label.empty()) {
    throw ConfigError("label map has no scored classes");
  }
  return map;
}

// ---------------------------------------------------------------------------
// Initialization.

namespace {

void fill_uniform(Matrix& m, Rng& rng, double lo, double hi) {
  for (long r = 0; r < m.rows(); ++r) {
    for (long c = 0; c < m.cols(); ++c) m(r, c) = rng.uniform(lo, hi);
  }
}

double fan_limit(long fan_in, long fan_out) {
  return std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
}

}  // namespace

ModelParams ModelParams::init(const ModelShape& shape,
                              features::WordEmbeddingTable words, int max_dist,
                              int pos_dim, std::uint64_t seed) {
  ModelParams p;
  p.shape = shape;
  p.words = std::move(words);
  p.max_dist = max_dist;
  p.seed = seed;

  Rng rng = derived_rng(seed, RngStream::kParamInit);
  const int pos_vocab = features::position_vocab(max_dist);
  p.pos1.resize(pos_vocab, pos_dim);
  p.pos2.resize(pos_vocab, pos_dim);
  fill_uniform(p.pos1, rng, -0.05, 0.05);
  fill_uniform(p.pos2, rng, -0.05, 0.05);

  for (int h : shape.window_sizes) {
    Matrix f(shape.filters_per_size, h * shape.input_dim);
    const double b = fan_limit(f.cols(), f.rows());
    fill_uniform(f, rng, -b, b);
    p.filters.push_back(std::move(f));
    p.biases.emplace_back(Vector::Zero(shape.filters_per_size));
  }
  p.class_weights.resize(shape.num_scored, shape.repr_dim());
  const double b = fan_limit(p.class_weights.cols(), p.class_weights.rows());
  fill_uniform(p.class_weights, rng, -b, b);
  return p;
}

// ---------------------------------------------------------------------------
// Forward.

namespace {

struct SegmentRange {
  long begin = 0;
  long end = 0;  // half-open over window positions
};

// Window positions are split by the two span end boundaries; a window at
// position t covers tokens [t, t+h). Empty segments stay empty.
std::vector<SegmentRange> segment_ranges(const ModelShape& shape, long n,
                                         const corpus::Span& e1,
                                         const corpus::Span& e2) {
  if (shape.pooling == Pooling::kMax) return {{0, n}};
  const long lo = std::min(e1.end, e2.end);
  const long hi = std::max(e1.end, e2.end);
  return {{0, lo + 1}, {lo + 1, hi + 1}, {hi + 1, n}};
}

}  // namespace

ForwardResult forward(const ModelParams& params, const Matrix& input,
                      const corpus::Span& e1, const corpus::Span& e2,
                      const Vector* cls_vec) {
  const ModelShape& shape = params.shape;
  const long n = input.rows();
  const long d = input.cols();
  if (n < 1) throw DataError("forward: empty input");
  if (d != shape.input_dim) {
    throw DataError("forward: input has " + std::to_string(d) + " columns, model expects " +
                    std::to_string(shape.input_dim));
  }
  if ((shape.cls_dim > 0) != (cls_vec != nullptr)) {
    throw DataError("forward: sentence-vector presence does not match the model shape");
  }
  if (cls_vec && cls_vec->size() != shape.cls_dim) {
    throw DataError("forward: sentence vector has wrong dimension");
  }

  ForwardCache cache;
  cache.input = input;
  cache.e1 = e1;
  cache.e2 = e2;
  cache.n = n;
  if (cls_vec) cache.cls = *cls_vec;
  cache.repr = Vector::Zero(shape.repr_dim());

  const auto segments = segment_ranges(shape, n, e1, e2);
  const int n_f = shape.filters_per_size;

  for (std::size_t w = 0; w < shape.window_sizes.size(); ++w) {
    const int h = shape.window_sizes[w];
    // Stack h shifted copies of the input (zero-padded past the end) so the
    // convolution is a single matrix product.
    Matrix windows = Matrix::Zero(static_cast<long>(h) * d, n);
    for (int k = 0; k < h; ++k) {
      const long rows = std::max<long>(0, n - k);
      for (long t = 0; t < rows; ++t) {
        windows.block(static_cast<long>(k) * d, t, d, 1) = input.row(t + k).transpose();
      }
    }
    Matrix act = (params.filters[w] * windows).colwise() + params.biases[w];
    if (shape.nonlinearity == Nonlinearity::kTanh) {
      act = act.array().tanh().matrix();
    }

    std::vector<int> argmax(static_cast<std::size_t>(shape.segments()) * n_f, -1);
    for (int s = 0; s < shape.segments(); ++s) {
      const auto& range = segments[static_cast<std::size_t>(s)];
      for (int f = 0; f < n_f; ++f) {
        double best = 0.0;
        int best_t = -1;
        for (long t = range.begin; t < range.end; ++t) {
          const double v = act(f, t);
          if (best_t < 0 || v > best) {
            best = v;
            best_t = static_cast<int>(t);
          }
        }
        argmax[static_cast<std::size_t>(s) * n_f + f] = best_t;
        cache.repr(shape.repr_offset(static_cast<int>(w), s, f)) = best_t < 0 ? 0.0 : best;
      }
    }
    cache.acts.push_back(std::move(act));
    cache.argmax.push_back(std::move(argmax));
  }

  if (cls_vec) cache.repr.tail(shape.cls_dim) = *cls_vec;

  ForwardResult result;
  result.scores = params.class_weights * cache.repr;
  result.cache = std::move(cache);
  return result;
}

// ---------------------------------------------------------------------------
// Backward.

void Gradients::add_scaled(const Gradients& other, double scale) {
  for (std::size_t w = 0; w < filters.size(); ++w) {
    filters[w] += scale * other.filters[w];
    biases[w] += scale * other.biases[w];
  }
  class_weights += scale * other.class_weights;
  if (cls.size() > 0) cls += scale * other.cls;
  // Input gradients are instance-specific and are not accumulated here.
}

void Gradients::scale(double factor) {
  for (auto& f : filters) f *= factor;
  for (auto& b : biases) b *= factor;
  class_weights *= factor;
  input *= factor;
  if (cls.size() > 0) cls *= factor;
}

Gradients zero_gradients(const ModelParams& params, long n_tokens) {
  Gradients g;
  for (std::size_t w = 0; w < params.filters.size(); ++w) {
    g.filters.emplace_back(Matrix::Zero(params.filters[w].rows(), params.filters[w].cols()));
    g.biases.emplace_back(Vector::Zero(params.biases[w].size()));
  }
  g.class_weights = Matrix::Zero(params.class_weights.rows(), params.class_weights.cols());
  g.input = Matrix::Zero(n_tokens, params.shape.input_dim);
  if (params.shape.cls_dim > 0) g.cls = Vector::Zero(params.shape.cls_dim);
  return g;
}

Gradients backward(const ModelParams& params, const ForwardCache& cache,
                   const Vector& dscores) {
  const ModelShape& shape = params.shape;
  if (dscores.size() != shape.num_scored) throw DataError("backward: bad dscores size");
  if (cache.acts.size() != shape.window_sizes.size()) {
    throw DataError("backward: cache does not match model");
  }

  Gradients g = zero_gradients(params, cache.n);
  g.class_weights = dscores * cache.repr.transpose();
  const Vector drepr = params.class_weights.transpose() * dscores;
  if (shape.cls_dim > 0) g.cls = drepr.tail(shape.cls_dim);

  const long d = shape.input_dim;
  const int n_f = shape.filters_per_size;
  for (std::size_t w = 0; w < shape.window_sizes.size(); ++w) {
    const int h = shape.window_sizes[w];
    for (int s = 0; s < shape.segments(); ++s) {
      for (int f = 0; f < n_f; ++f) {
        const int t = cache.argmax[w][static_cast<std::size_t>(s) * n_f + f];
        if (t < 0) continue;
        const double dpool = drepr(shape.repr_offset(static_cast<int>(w), s, f));
        if (dpool == 0.0) continue;
        const double act = cache.acts[w](f, t);
        const double dpre = shape.nonlinearity == Nonlinearity::kTanh
                                ? dpool * (1.0 - act * act)
                                : dpool;
        g.biases[w](f) += dpre;
        for (int k = 0; k < h; ++k) {
          const long row = t + k;
          if (row >= cache.n) break;  // zero padding carries no gradient
          g.filters[w].row(f).segment(static_cast<long>(k) * d, d) +=
              dpre * cache.input.row(row);
          g.input.row(row) +=
              dpre * params.filters[w].row(f).segment(static_cast<long>(k) * d, d);
        }
      }
    }
  }
  return g;
}

// ---------------------------------------------------------------------------
// Ranking loss.

namespace {

double softplus(double x) { return std::log1p(std::exp(-std::abs(x))) + std::max(x, 0.0); }

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

LossResult ranking_loss(const Vector& scores, int gold_scored, const LossConfig& cfg) {
  const long c = scores.size();
  if (gold_scored >= c) throw DataError("ranking_loss: gold class out of range");
  LossResult out;
  out.dscores = Vector::Zero(c);

  if (gold_scored >= 0) {
    const double sg = scores(gold_scored);
    out.loss += softplus(cfg.gamma * (cfg.margin_pos - sg));
    out.dscores(gold_scored) -= cfg.gamma * sigmoid(cfg.gamma * (cfg.margin_pos - sg));
  }

  // Strongest competitor: every scored class for a null example, every
  // class but the gold one otherwise.
  int worst = -1;
  for (long i = 0; i < c; ++i) {
    if (i == gold_scored) continue;
    if (worst < 0 || scores(i) > scores(worst)) worst = static_cast<int>(i);
  }
  if (worst >= 0) {
    const double sw = scores(worst);
    out.loss += softplus(cfg.gamma * (cfg.margin_neg + sw));
    out.dscores(worst) += cfg.gamma * sigmoid(cfg.gamma * (cfg.margin_neg + sw));
  }
  return out;
}

int predict(const Vector& scores, const LossConfig& cfg, const LabelMap& map) {
  if (scores.size() != map.num_scored()) throw DataError("predict: bad score size");
  int best = 0;
  for (long i = 1; i < scores.size(); ++i) {
    if (scores(i) > scores(best)) best = static_cast<int>(i);
  }
  if (!cfg.score_null && map.null_label >= 0 && scores(best) < cfg.null_threshold) {
    return map.null_label;
  }
  return map.scored_to_label[static_cast<std::size_t>(best)];
}

// ---------------------------------------------------------------------------
// Checkpointing.

namespace {

constexpr char kMagic[8] = {'R', 'E', 'L', 'X', 'C', 'K', 'P', '1'};

void write_u32(std::ostream& out, std::uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  out.write(reinterpret_cast<const char*>(b), 4);
}

void write_u64(std::ostream& out, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  out.write(reinterpret_cast<const char*>(b), 8);
}

std::uint32_t read_u32(std::istream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
  return v;
}

std::uint64_t read_u64(std::istream& in) {
  unsigned char b[8];
  in.read(reinterpret_cast<char*>(b), 8);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

void write_string(std::ostream& out, const std::string& s) {
  write_u32(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string read_string(std::istream& in) {
  const auto len = read_u32(in);
  std::string s(len, '\0');
  in.read(s.data(), len);
  return s;
}

void write_tensor(std::ostream& out, const std::string& name, const Matrix& m) {
  write_string(out, name);
  write_u64(out, static_cast<std::uint64_t>(m.rows()));
  write_u64(out, static_cast<std::uint64_t>(m.cols()));
  for (long r = 0; r < m.rows(); ++r) {
    for (long c = 0; c < m.cols(); ++c) {
      const double v = m(r, c);
      std::uint64_t bits;
      std::memcpy(&bits, &v, 8);
      write_u64(out, bits);
    }
  }
}

Matrix read_tensor(std::istream& in, std::string* name) {
  *name = read_string(in);
  const auto rows = static_cast<long>(read_u64(in));
  const auto cols = static_cast<long>(read_u64(in));
  Matrix m(rows, cols);
  for (long r = 0; r < rows; ++r) {
    for (long c = 0; c < cols; ++c) {
      const std::uint64_t bits = read_u64(in);
      double v;
      std::memcpy(&v, &bits, 8);
      m(r, c) = v;
    }
  }
  return m;
}

}  // namespace

void save_checkpoint(const ModelParams& params, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write checkpoint: " + path);
  out.write(kMagic, sizeof(kMagic));
  write_u64(out, params.seed);

  nlohmann::json meta;
  meta["input_dim"] = params.shape.input_dim;
  meta["window_sizes"] = params.shape.window_sizes;
  meta["filters_per_size"] = params.shape.filters_per_size;
  meta["pooling"] = pooling_name(params.shape.pooling);
  meta["tanh"] = params.shape.nonlinearity == Nonlinearity::kTanh;
  meta["cls_dim"] = params.shape.cls_dim;
  meta["num_scored"] = params.shape.num_scored;
  meta["max_dist"] = params.max_dist;
  meta["word_dim"] = params.words.dim();
  write_string(out, meta.dump());

  const auto& vocab = params.words.vocabulary();
  write_u32(out, static_cast<std::uint32_t>(vocab.size()));
  for (const auto& tok : vocab) write_string(out, tok);

  std::uint32_t tensor_count = 4 + 2 * static_cast<std::uint32_t>(params.filters.size());
  write_u32(out, tensor_count);
  write_tensor(out, "word_embeddings", params.words.matrix());
  write_tensor(out, "pos1", params.pos1);
  write_tensor(out, "pos2", params.pos2);
  for (std::size_t w = 0; w < params.filters.size(); ++w) {
    write_tensor(out, "filters" + std::to_string(w), params.filters[w]);
    write_tensor(out, "biases" + std::to_string(w), params.biases[w]);
  }
  write_tensor(out, "class_weights", params.class_weights);
  if (!out.flush()) throw DataError("write failed: " + path);
}

ModelParams load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint: " + path);
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, kMagic, 8) != 0) {
    throw DataError(path + ": not a checkpoint file");
  }
  ModelParams p;
  p.seed = read_u64(in);
  const auto meta = nlohmann::json::parse(read_string(in));
  p.shape.input_dim = meta.at("input_dim").get<int>();
  p.shape.window_sizes = meta.at("window_sizes").get<std::vector<int>>();
  p.shape.filters_per_size = meta.at("filters_per_size").get<int>();
  p.shape.pooling = pooling_from_name(meta.at("pooling").get<std::string>());
  p.shape.nonlinearity =
      meta.at("tanh").get<bool>() ? Nonlinearity::kTanh : Nonlinearity::kIdentity;
  p.shape.cls_dim = meta.at("cls_dim").get<int>();
  p.shape.num_scored = meta.at("num_scored").get<int>();
  p.max_dist = meta.at("max_dist").get<int>();
  const int word_dim = meta.at("word_dim").get<int>();

  const auto vocab_size = read_u32(in);
  std::vector<std::string> vocab;
  vocab.reserve(vocab_size);
  for (std::uint32_t i = 0; i < vocab_size; ++i) vocab.push_back(read_string(in));

  const auto tensor_count = read_u32(in);
  std::string name;
  Matrix words = read_tensor(in, &name);
  if (name != "word_embeddings") throw DataError(path + ": unexpected tensor order");
  p.words = features::WordEmbeddingTable(std::move(words), std::move(vocab), word_dim,
                                         p.seed, 0.25);
  p.pos1 = read_tensor(in, &name);
  p.pos2 = read_tensor(in, &name);
  for (std::uint32_t i = 4; i < tensor_count; i += 2) {
    p.filters.push_back(read_tensor(in, &name));
    Matrix b = read_tensor(in, &name);
    p.biases.emplace_back(b.col(0));
  }
  p.class_weights = read_tensor(in, &name);
  if (!in) throw DataError(path + ": truncated checkpoint");
  return p;
}

}  // namespace relx::crcnn
