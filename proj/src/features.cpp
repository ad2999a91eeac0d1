#include "relx/features.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <sstream>
#include <unordered_set>

#include <json.hpp>

#include "relx/common.hpp"

namespace relx::features {

WordEmbeddingTable::WordEmbeddingTable(Matrix rows, std::vector<std::string> vocab,
                                       int dim, std::uint64_t seed, double oov_range)
    : matrix_(std::move(rows)),
      vocab_(std::move(vocab)),
      dim_(dim),
      seed_(seed),
      oov_range_(oov_range) {
  for (std::size_t i = 0; i < vocab_.size(); ++i) {
    index_.emplace(vocab_[i], static_cast<int>(i));
  }
}

WordEmbeddingTable WordEmbeddingTable::load(const std::string& path, int expected_dim,
                                            std::uint64_t seed, double oov_range) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open word vector file: " + path);

  std::vector<std::string> vocab;
  std::unordered_set<std::string> seen;
  std::vector<double> values;
  std::string line;
  long line_no = 0;
  bool first = true;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string token;
    ls >> token;
    std::vector<double> row;
    double v;
    while (ls >> v) row.push_back(v);

    if (first) {
      first = false;
      // Optional header `|V| d`: a line of exactly two integers.
      if (row.size() == 1 && token.find_first_not_of("0123456789") == std::string::npos) {
        continue;
      }
    }
    if (static_cast<int>(row.size()) != expected_dim) {
      throw DataError(path + ", line " + std::to_string(line_no) + ": expected " +
                      std::to_string(expected_dim) + " values, got " +
                      std::to_string(row.size()));
    }
    const std::string key = lowercase_ascii(token);
    if (!seen.insert(key).second) {
      std::cerr << "warning: " << path << ", line " << line_no << ": duplicate token '"
                << key << "', first entry wins\n";
      continue;
    }
    vocab.push_back(key);
    values.insert(values.end(), row.begin(), row.end());
  }

  const long n = static_cast<long>(vocab.size());
  Matrix m(n, expected_dim);
  for (long r = 0; r < n; ++r) {
    for (int c = 0; c < expected_dim; ++c) {
      m(r, c) = values[static_cast<std::size_t>(r) * expected_dim + c];
    }
  }
  WordEmbeddingTable table(std::move(m), std::move(vocab), expected_dim, seed, oov_range);
  if (!table.matrix_.allFinite()) throw DataError(path + ": non-finite vector values");
  return table;
}

WordEmbeddingTable WordEmbeddingTable::random_init(const std::vector<std::string>& vocab,
                                                   int dim, std::uint64_t seed,
                                                   double range) {
  WordEmbeddingTable table(Matrix(0, dim), {}, dim, seed, range);
  table.materialize(vocab);
  return table;
}

bool WordEmbeddingTable::contains(const std::string& token) const {
  return index_.count(token) != 0;
}

int WordEmbeddingTable::row_of(const std::string& token) const {
  const auto it = index_.find(token);
  return it == index_.end() ? -1 : it->second;
}

Vector WordEmbeddingTable::oov_vector(const std::string& token) const {
  Rng rng(mix64(mix64(seed_ ^ static_cast<std::uint64_t>(RngStream::kOov)) ^ fnv1a(token)));
  Vector v(dim_);
  for (int i = 0; i < dim_; ++i) v(i) = rng.uniform(-oov_range_, oov_range_);
  return v;
}

long WordEmbeddingTable::materialize(const std::vector<std::string>& tokens) {
  std::vector<std::string> missing;
  std::unordered_set<std::string> missing_set;
  for (const auto& tok : tokens) {
    if (!contains(tok) && missing_set.insert(tok).second) missing.push_back(tok);
  }
  if (missing.empty()) return 0;
  const long old_rows = matrix_.rows();
  matrix_.conservativeResize(old_rows + static_cast<long>(missing.size()), dim_);
  for (std::size_t k = 0; k < missing.size(); ++k) {
    matrix_.row(old_rows + static_cast<long>(k)) = oov_vector(missing[k]).transpose();
    index_.emplace(missing[k], static_cast<int>(old_rows + static_cast<long>(k)));
    vocab_.push_back(missing[k]);
  }
  return static_cast<long>(missing.size());
}

Vector WordEmbeddingTable::lookup(const std::string& token) const {
  const int row = row_of(token);
  if (row >= 0) return matrix_.row(row).transpose();
  return oov_vector(token);
}

int relative_position(int i, const corpus::Span& span, int max_dist) {
  int d = 0;
  if (i < span.start) {
    d = i - span.start;
  } else if (i > span.end) {
    d = i - span.end;
  }
  return std::clamp(d, -max_dist, max_dist);
}

// ---------------------------------------------------------------------------
// Contextual features.

std::unordered_map<std::string, ContextualFeatures> load_contextual(
    const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open contextual feature file: " + path);
  std::unordered_map<std::string, ContextualFeatures> out;
  std::string line;
  long line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = path + ", line " + std::to_string(line_no);
    nlohmann::json rec;
    try {
      rec = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw DataError(where + ": malformed JSON: " + e.what());
    }
    if (!rec.contains("id") || !rec["id"].is_string()) {
      throw DataError(where + ": missing id");
    }
    if (!rec.contains("token_vectors") || !rec["token_vectors"].is_array()) {
      throw DataError(where + ": missing token_vectors");
    }
    ContextualFeatures feat;
    feat.id = rec["id"].get<std::string>();
    const auto& tv = rec["token_vectors"];
    const long n = static_cast<long>(tv.size());
    long d = 0;
    for (long i = 0; i < n; ++i) {
      if (!tv[static_cast<std::size_t>(i)].is_array()) {
        throw DataError(where + ": token vector is not an array");
      }
      const long row_d = static_cast<long>(tv[static_cast<std::size_t>(i)].size());
      if (i == 0) {
        d = row_d;
      } else if (row_d != d) {
        throw DataError(where + ": ragged token vectors");
      }
    }
    feat.token_vectors.resize(n, d);
    for (long i = 0; i < n; ++i) {
      for (long j = 0; j < d; ++j) {
        feat.token_vectors(i, j) =
            tv[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)].get<double>();
      }
    }
    if (rec.contains("sentence_vector") && !rec["sentence_vector"].is_null()) {
      const auto& sv = rec["sentence_vector"];
      Vector v(static_cast<long>(sv.size()));
      for (long j = 0; j < v.size(); ++j) {
        v(j) = sv[static_cast<std::size_t>(j)].get<double>();
      }
      feat.sentence_vector = std::move(v);
    }
    if (!feat.token_vectors.allFinite() ||
        (feat.sentence_vector && !feat.sentence_vector->allFinite())) {
      throw DataError(where + ": non-finite values");
    }
    if (!out.emplace(feat.id, std::move(feat)).second) {
      throw DataError(where + ": duplicate id");
    }
  }
  return out;
}

void write_contextual(const std::vector<ContextualFeatures>& records,
                      const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write contextual feature file: " + path);
  for (const auto& feat : records) {
    nlohmann::json rec;
    rec["id"] = feat.id;
    auto rows = nlohmann::json::array();
    for (long i = 0; i < feat.token_vectors.rows(); ++i) {
      auto row = nlohmann::json::array();
      for (long j = 0; j < feat.token_vectors.cols(); ++j) {
        row.push_back(feat.token_vectors(i, j));
      }
      rows.push_back(std::move(row));
    }
    rec["token_vectors"] = std::move(rows);
    if (feat.sentence_vector) {
      auto sv = nlohmann::json::array();
      for (long j = 0; j < feat.sentence_vector->size(); ++j) {
        sv.push_back((*feat.sentence_vector)(j));
      }
      rec["sentence_vector"] = std::move(sv);
    }
    out << rec.dump() << '\n';
  }
  if (!out.flush()) throw DataError("write failed: " + path);
}

Matrix assemble_input(const corpus::RelationInstance& inst, const AssemblySpec& spec,
                      const ContextualFeatures* ctx) {
  const long n = static_cast<long>(inst.tokens.size());
  if (n == 0) throw DataError("assemble_input: instance '" + inst.id + "' has no tokens");
  const int d_w = spec.words->dim();
  const long d_p = spec.pos1->cols();
  long d_c = 0;
  if (spec.mode == ContextMode::kConcatTokens) {
    if (ctx == nullptr) {
      throw DataError("assemble_input: contextual features requested but missing for '" +
                      inst.id + "'");
    }
    if (ctx->token_vectors.rows() != n) {
      throw DataError("contextual features for '" + inst.id + "' have " +
                      std::to_string(ctx->token_vectors.rows()) + " rows for " +
                      std::to_string(n) + " tokens");
    }
    d_c = ctx->token_vectors.cols();
  }

  Matrix input(n, d_w + 2 * d_p + d_c);
  for (long i = 0; i < n; ++i) {
    input.block(i, 0, 1, d_w) =
        spec.words->lookup(inst.tokens[static_cast<std::size_t>(i)]).transpose();
    const int r1 = position_row(
        relative_position(static_cast<int>(i), inst.e1, spec.max_dist), spec.max_dist);
    const int r2 = position_row(
        relative_position(static_cast<int>(i), inst.e2, spec.max_dist), spec.max_dist);
    input.block(i, d_w, 1, d_p) = spec.pos1->row(r1);
    input.block(i, d_w + d_p, 1, d_p) = spec.pos2->row(r2);
    if (d_c > 0) {
      input.block(i, d_w + 2 * d_p, 1, d_c) = ctx->token_vectors.row(i);
    }
  }
  return input;
}

}  // namespace relx::features
