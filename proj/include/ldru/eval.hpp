#pragma once

#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

#include "ldru/model.hpp"
#include "ldru/monoid.hpp"

namespace ldru {

struct EvalResult {
  double loss = 0.0;  // mean cross-entropy
  double accuracy = 0.0;
  std::vector<std::uint32_t> predictions;
};

/// Eval-mode forward over `b` in fixed row chunks. Because every kernel is
/// row-local the result does not depend on the chunk size or thread count.
EvalResult evaluate(const LdruModel<float>& m, const Batch& b, unsigned threads = 1,
                    std::size_t chunk_rows = 64);

/// Final pre-classifier vectors for each row, eval mode.
Tensor<float> final_embeddings(const LdruModel<float>& m, const Batch& b,
                               std::size_t chunk_rows = 64);

struct LengthAccuracy {
  std::size_t length = 0;
  double accuracy = 0.0;
};

struct OodReport {
  std::vector<LengthAccuracy> per_length;
  double mean = 0.0;
};

inline constexpr std::size_t kEvalPerLength = 512;

/// Accuracy on eval_set(task, len, per_len, seed) for each len in
/// [len_from, len_to]; the mean weights lengths equally.
OodReport ood_accuracy(const LdruModel<float>& m, const TaskSpec& task, std::size_t len_from,
                       std::size_t len_to, std::size_t per_len, std::uint64_t seed,
                       unsigned threads = 1);

/// "length,accuracy" rows followed by "mean,<value>".
void write_ood_csv(std::ostream& os, const OodReport& r);

inline constexpr std::uint64_t kEmbedGuard = 1u << 20;

struct EmbeddingTable {
  std::vector<Sequence> sequences;
  std::vector<std::uint32_t> classes;
  Tensor<float> vectors;
};

/// Every sequence of length 1..max_len (or `sample` random ones per length
/// when nonzero), its final vector and its monoid class.
EmbeddingTable export_embeddings(const LdruModel<float>& m, const TaskSpec& task,
                                 std::size_t max_len, const TransitionMonoid& monoid,
                                 std::size_t sample = 0, std::uint64_t seed = 0);

/// Columns: tokens (dash-joined), ec, v0..v{d-1}.
void write_embeddings_csv(std::ostream& os, const EmbeddingTable& t);
EmbeddingTable read_embeddings_csv(std::istream& is);

using Matrix = Eigen::MatrixXd;

/// Lloyd iterations from a seeded k-means++ start. An empty cluster is
/// re-seeded from the point farthest from its centroid.
std::vector<std::uint32_t> kmeans(const Matrix& x, std::size_t k, std::uint64_t seed,
                                  std::size_t iters = 100);

/// Adjusted Rand index (Hubert-Arabie).
double ari(const std::vector<std::uint32_t>& a, const std::vector<std::uint32_t>& b);

/// Mean silhouette with Euclidean distance; singleton clusters score 0.
double silhouette(const Matrix& x, const std::vector<std::uint32_t>& labels);

enum class BenchKind { kLdru, kRnn };

struct BenchRow {
  std::size_t length = 0;
  BenchKind kind = BenchKind::kLdru;
  double fwd_ms = 0.0;
  double fwdbwd_ms = 0.0;
  // Fastest single pass; less sensitive to scheduler noise than the mean.
  double fwd_min_ms = 0.0;
  double fwdbwd_min_ms = 0.0;
  std::uint64_t operator_applications = 0;  // per row, LDRU only
};

struct BenchConfig {
  std::vector<std::size_t> lengths;
  std::size_t batch = 32;
  std::size_t reps = 128;
  std::size_t warmup = 2;
  std::uint32_t vocab = 16;
  std::uint32_t output_size = 2;
  std::uint32_t d = 64;
  std::uint64_t seed = 0;
};

/// Mean wall-clock per pass, excluding model and batch construction.
std::vector<BenchRow> bench(BenchKind kind, const BenchConfig& cfg);

/// Header "length,kind,fwd_ms,fwdbwd_ms".
void write_bench_csv(std::ostream& os, const std::vector<BenchRow>& rows);

}  // namespace ldru
