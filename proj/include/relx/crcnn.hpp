#ifndef RELX_CRCNN_HPP
#define RELX_CRCNN_HPP

#include <Eigen/Core>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "relx/corpus.hpp"
#include "relx/features.hpp"

namespace relx::crcnn {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

enum class Pooling { kMax, kPiecewise };
enum class Nonlinearity { kTanh, kIdentity };

Pooling pooling_from_name(const std::string& name);
std::string pooling_name(Pooling pooling);

// Margin-based ranking loss constants.
struct LossConfig {
  double gamma = 2.0;
  double margin_pos = 2.5;
  double margin_neg = 0.5;
  bool score_null = true;       // when false the null class has no score row
  double null_threshold = 0.0;  // used only when score_null == false
};

// Mapping between score rows and schema label indices.
struct LabelMap {
  std::vector<int> scored_to_label;  // score row -> label index
  std::vector<int> label_to_scored;  // label index -> score row, -1 unscored
  int null_label = -1;               // label index, -1 when schema has no null

  int num_scored() const { return static_cast<int>(scored_to_label.size()); }
  static LabelMap build(const corpus::RelationSchema& schema, bool score_null);
};

struct ModelShape {
  int input_dim = 0;  // D = d_w + 2*d_p (+ d_c)
  std::vector<int> window_sizes;
  int filters_per_size = 0;
  Pooling pooling = Pooling::kMax;
  Nonlinearity nonlinearity = Nonlinearity::kTanh;
  int cls_dim = 0;  // sentence-vector width concatenated after pooling
  int num_scored = 0;

  int segments() const { return pooling == Pooling::kPiecewise ? 3 : 1; }
  int pooled_dim() const {
    return filters_per_size * static_cast<int>(window_sizes.size()) * segments();
  }
  int repr_dim() const { return pooled_dim() + cls_dim; }
  // Offset of the pooled block for (window index, segment, filter).
  int repr_offset(int w, int segment, int filter) const {
    return (w * segments() + segment) * filters_per_size + filter;
  }
};

// Every trainable tensor: the feature embedding tables plus convolution
// filters, biases and the class score matrix.
struct ModelParams {
  ModelShape shape;
  features::WordEmbeddingTable words;
  Matrix pos1;  // (2*max_dist+1) x d_p
  Matrix pos2;
  int max_dist = 50;
  std::vector<Matrix> filters;  // per window size: n_f x (h*D)
  std::vector<Vector> biases;   // per window size: n_f
  Matrix class_weights;         // num_scored x repr_dim
  std::uint64_t seed = 0;

  // Filters and class weights get uniform fan-scaled init, position tables
  // uniform [-0.05, 0.05], all drawn from the run seed.
  static ModelParams init(const ModelShape& shape, features::WordEmbeddingTable words,
                          int max_dist, int pos_dim, std::uint64_t seed);
};

struct ForwardCache {
  Matrix input;               // n x D
  std::vector<Matrix> acts;   // per window size: n_f x n (post-nonlinearity)
  std::vector<std::vector<int>> argmax;  // per window size: segments*n_f, -1 = empty
  Vector repr;
  corpus::Span e1, e2;
  std::optional<Vector> cls;
  long n = 0;
};

struct ForwardResult {
  Vector scores;  // num_scored
  ForwardCache cache;
};

// Convolution over zero-padded windows (one window per token position), tanh,
// pooling (global or piecewise around the two spans), optional sentence-vector
// concatenation, then linear class scoring.
ForwardResult forward(const ModelParams& params, const Matrix& input,
                      const corpus::Span& e1, const corpus::Span& e2,
                      const Vector* cls_vec = nullptr);

struct Gradients {
  std::vector<Matrix> filters;
  std::vector<Vector> biases;
  Matrix class_weights;
  Matrix input;  // n x D, routed back to embedding rows by the trainer
  Vector cls;    // empty unless the forward consumed a sentence vector

  void add_scaled(const Gradients& other, double scale);
  void scale(double factor);
};

Gradients backward(const ModelParams& params, const ForwardCache& cache,
                   const Vector& dscores);
Gradients zero_gradients(const ModelParams& params, long n_tokens);

// Pairwise ranking loss. `gold_scored` is the score row of the gold class,
// or -1 for a null-labeled example whose class is unscored.
struct LossResult {
  double loss = 0.0;
  Vector dscores;
};
LossResult ranking_loss(const Vector& scores, int gold_scored, const LossConfig& cfg);

// Argmax over scored classes with lowest-index tie-break; falls back to the
// null label when it is unscored and every score is below the threshold.
int predict(const Vector& scores, const LossConfig& cfg, const LabelMap& map);

// Versioned binary checkpoint of all tensors, byte-stable for identical runs.
void save_checkpoint(const ModelParams& params, const std::string& path);
ModelParams load_checkpoint(const std::string& path);

}  // namespace relx::crcnn

#endif  // RELX_CRCNN_HPP
