#ifndef RELX_FEATURES_HPP
#define RELX_FEATURES_HPP

#include <Eigen/Core>
#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "relx/corpus.hpp"

namespace relx::features {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// Pre-trained (or randomly initialized) word vectors with deterministic
// seeded handling of out-of-vocabulary tokens.
class WordEmbeddingTable {
 public:
  WordEmbeddingTable() = default;
  WordEmbeddingTable(Matrix rows, std::vector<std::string> vocab, int dim,
                     std::uint64_t seed, double oov_range);

  // Text format: one `token v1 ... vd` per line, space-separated decimal
  // floats, optional first header line `|V| d`. Lookup is case-normalized to
  // match the tokenizer's lowercasing; on duplicate tokens the first entry
  // wins (with a warning on stderr).
  static WordEmbeddingTable load(const std::string& path, int expected_dim,
                                 std::uint64_t seed, double oov_range = 0.25);

  // Fresh table over `vocab` with uniform random rows in [-range, range].
  static WordEmbeddingTable random_init(const std::vector<std::string>& vocab, int dim,
                                        std::uint64_t seed, double range = 0.25);

  int dim() const { return dim_; }
  long size() const { return matrix_.rows(); }
  const Matrix& matrix() const { return matrix_; }
  Matrix& matrix() { return matrix_; }
  const std::vector<std::string>& vocabulary() const { return vocab_; }

  bool contains(const std::string& token) const;
  // Row index for a known token; -1 when absent.
  int row_of(const std::string& token) const;

  // Deterministic seeded-random vector for a token outside the vocabulary;
  // the same token always yields the same vector for a given table seed.
  Vector oov_vector(const std::string& token) const;

  // Ensures every token of `tokens` has a row, materializing deterministic
  // OOV rows so they can be trained. Returns the number of rows added.
  long materialize(const std::vector<std::string>& tokens);

  // Row lookup used at assembly time: known row or the OOV vector.
  Vector lookup(const std::string& token) const;

 private:
  Matrix matrix_;  // |V| x d
  std::vector<std::string> vocab_;
  std::unordered_map<std::string, int> index_;
  int dim_ = 0;
  std::uint64_t seed_ = 0;
  double oov_range_ = 0.25;
};

// Signed distance of token i to a span: 0 inside, negative before, positive
// after, clipped to [-max_dist, max_dist].
int relative_position(int i, const corpus::Span& span, int max_dist);

// Embedding-table row for a clipped distance (table has 2*max_dist+1 rows).
inline int position_row(int distance, int max_dist) { return distance + max_dist; }
inline int position_vocab(int max_dist) { return 2 * max_dist + 1; }

// Precomputed contextual vectors aligned to an instance's post-preprocessing
// token sequence.
struct ContextualFeatures {
  std::string id;
  Matrix token_vectors;                  // n x d_c
  std::optional<Vector> sentence_vector; // d_s
};

// JSON-lines: {"id": "...", "token_vectors": [[...],...], "sentence_vector": [...]}
std::unordered_map<std::string, ContextualFeatures> load_contextual(const std::string& path);
void write_contextual(const std::vector<ContextualFeatures>& records,
                      const std::string& path);

enum class ContextMode { kNone, kConcatTokens };

// Everything needed to turn an instance into the model's input matrix.
struct AssemblySpec {
  const WordEmbeddingTable* words = nullptr;
  const Matrix* pos1 = nullptr;  // (2*max_dist+1) x d_p
  const Matrix* pos2 = nullptr;
  int max_dist = 50;
  ContextMode mode = ContextMode::kNone;
};

// Row i = word(token_i) + pos1(d1_i) + pos2(d2_i) (+ contextual token i).
// Throws DataError when contextual rows do not align with the token count.
Matrix assemble_input(const corpus::RelationInstance& inst, const AssemblySpec& spec,
                      const ContextualFeatures* ctx = nullptr);

}  // namespace relx::features

#endif  // RELX_FEATURES_HPP
