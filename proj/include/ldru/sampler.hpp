#pragma once

#include <cstdint>
#include <optional>
#include <ostream>
#include <vector>

#include "ldru/automata.hpp"
#include "ldru/rng.hpp"

namespace ldru {

/// Right-padded token matrix. Row r occupies tokens[r * max_len, r * max_len + lengths[r]).
struct Batch {
  std::size_t batch_size = 0;
  std::size_t max_len = 0;
  std::vector<Token> tokens;
  std::vector<std::uint32_t> lengths;
  std::vector<std::uint32_t> labels;
  Token pad_token = 0;

  std::span<const Token> row(std::size_t r) const {
    return {tokens.data() + r * max_len, lengths[r]};
  }
  bool operator==(const Batch&) const = default;
};

/// Packs sequences into a right-padded batch; labels are computed with run().
Batch make_batch(const MooreMachine& m, const std::vector<Sequence>& rows,
                 const std::vector<std::uint32_t>& labels);

struct SamplerConfig {
  TaskSpec task;
  std::size_t min_len = 1;
  std::size_t max_len = 40;
  std::size_t batch_size = 256;
  std::uint64_t seed = 0;
  bool balanced = true;
  bool augment = true;
};

/// Retry base K for rejection sampling; the number of draws is ceil(factor * K).
inline constexpr std::size_t kRejectionRetryBase = 8;

/// Oversampling factors for (positive, negative) draws per task sampler.
struct Oversample {
  double positive = 1.0;
  double negative = 1.0;
};
Oversample oversample_factors(SamplerKind kind);

/// Deterministic in (cfg, ordinal).
Batch sample_batch(const SamplerConfig& cfg, std::uint64_t ordinal);

/// Balanced-bracket string of even `length` with depth <= n that closes at
/// the end. `augment` perturbs the optional-close probability with Gaussian
/// noise (sigma 0.15) minus a depth bias of 0.1 * depth / n.
Sequence sample_dyck_positive(std::uint32_t n, std::size_t length, bool augment, Rng& rng);

/// First of ceil(oversample * K) uniform draws whose label equals `target`.
std::optional<Sequence> sample_by_rejection(const MooreMachine& m, std::size_t length,
                                            std::uint32_t target, double oversample, Rng& rng);

inline std::optional<Sequence> sample_negative_by_rejection(const MooreMachine& m,
                                                            std::size_t length,
                                                            double oversample, Rng& rng) {
  return sample_by_rejection(m, length, 0, oversample, rng);
}

/// Biased walk along the accepting chain of 0*1*0*1*.
Sequence sample_tomita7_positive(std::size_t length, Rng& rng);
double tomita7_self_probability(std::size_t length);

/// Random walk over the Tomita-3 automaton with the 3->4 edge removed,
/// filtered for acceptance.
std::optional<Sequence> sample_tomita3_positive(const MooreMachine& m, std::size_t length,
                                                Rng& rng);

/// Random walk over the Tomita-4 automaton with the 2->3 edge removed.
Sequence sample_tomita4_positive(std::size_t length, Rng& rng);

/// Valid mod-5 expression of odd length.
Sequence sample_mod_arith(std::size_t length, Rng& rng);

/// Draw a row with the requested label (or any label when `target` is empty)
/// at exactly `length`. Returns nullopt when the polarity is infeasible or
/// all retries failed.
std::optional<Sequence> sample_row(const TaskSpec& task, std::size_t length,
                                   std::optional<std::uint32_t> target, bool augment, Rng& rng);

/// Fixed-length evaluation batch with unaugmented samplers, balanced for
/// binary tasks. At lengths where one polarity cannot occur, rows take the
/// other polarity.
Batch eval_set(const TaskSpec& task, std::size_t length, std::size_t count, std::uint64_t seed);

/// One JSON object per row: {"tokens":[...],"label":k}.
void write_jsonl(std::ostream& os, const Batch& b);

}  // namespace ldru
