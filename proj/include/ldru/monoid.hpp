#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "ldru/automata.hpp"
#include "ldru/rng.hpp"

namespace ldru {

/// State mapping e: Q -> Q induced by some sequence.
using StateMapping = std::vector<State>;

struct MappingHash {
  std::size_t operator()(const StateMapping& e) const noexcept {
    std::uint64_t h = e.size();
    for (State s : e) h = hash_combine(h, s);
    return static_cast<std::size_t>(h);
  }
};

enum class Generators { kAllSymbols, kEvenLengthPairs };

/// Transition monoid of a Moore machine's semiautomaton. Elements are ordered
/// by breadth-first discovery with the identity at index 0.
struct TransitionMonoid {
  std::vector<StateMapping> elements;
  std::size_t identity_index = 0;
  /// Row-major |E| x |E|; entry (i, j) is "apply i, then j". Empty when the
  /// monoid is too large to tabulate, in which case compose() falls back to
  /// mapping lookup.
  std::vector<std::uint32_t> compose_table;
  /// Element index per symbol, or per symbol pair (a * q + b) for
  /// even-length monoids.
  std::vector<std::uint32_t> symbol_map;
  Generators generators = Generators::kAllSymbols;
  std::uint32_t alphabet_size = 0;

  std::size_t size() const { return elements.size(); }
  /// Index of a mapping, or size() when it is not an element.
  std::size_t find(const StateMapping& e) const;
  std::unordered_map<StateMapping, std::uint32_t, MappingHash> index;
};

inline constexpr std::size_t kMonoidGuard = 100000;
inline constexpr std::size_t kComposeTableLimit = 4096;

/// Closure of {identity} and the generator mappings under composition.
/// Throws Error(kResource) past kMonoidGuard elements.
TransitionMonoid extract_monoid(const MooreMachine& m, Generators gens,
                                std::size_t guard = kMonoidGuard);

/// Mapping of a sequence, applied left to right.
StateMapping induced_mapping(const MooreMachine& m, std::span<const Token> seq);

/// Element for "apply elements[i] first, then elements[j]".
std::uint32_t compose(const TransitionMonoid& m, std::size_t i, std::size_t j);

/// Left fold of symbol elements. Even-length monoids require even length.
std::uint32_t classify(const TransitionMonoid& m, std::span<const Token> seq);

/// 1 + (n+1)(n+2)(2n+3)/6, the size of the full monoid of bounded Dyck D_n.
std::uint64_t monoid_size_formula(std::uint64_t n);

struct Bucket {
  std::size_t min_len = 0;
  std::size_t max_len = 0;
  std::size_t step = 1;
  std::vector<std::size_t> lengths() const;
};

struct CensusResult {
  Bucket bucket;
  std::size_t num_classes = 0;
  std::vector<std::uint64_t> counts;  // row-major |E| x |E|
  std::uint64_t total = 0;
  std::uint64_t sequences = 0;

  double logprob(std::size_t i, std::size_t j) const;
  std::size_t nonzero_cells() const;
};

/// Draws one positive sequence of the given even length.
using PositiveSampler = std::function<Sequence(std::size_t length, Rng& rng)>;

/// Number of depth >= 2 compositions the balanced reduction performs on a
/// sequence of `length` (length-2 blocks are the leaves).
std::uint64_t census_compositions_per_sequence(std::size_t length);

/// Adds the compositions of one sequence's balanced reduction to `counts`.
/// Padding slots act as the identity and are never counted.
void census_accumulate(const TransitionMonoid& m, std::span<const Token> seq,
                       std::vector<std::uint64_t>& counts, std::uint64_t& total);

/// Reduction-composition census over each bucket. Each length contributes an
/// equal share of `target_compositions`; per-sequence RNG streams are derived
/// from (seed, bucket, length, index) so the result is independent of the
/// worker count.
std::vector<CensusResult> composition_census(const TransitionMonoid& m,
                                             const PositiveSampler& sampler,
                                             const std::vector<Bucket>& buckets,
                                             std::uint64_t target_compositions,
                                             std::uint64_t seed, unsigned threads = 1);

nlohmann::json to_json(const TransitionMonoid& m);
nlohmann::json to_json(const CensusResult& c);
/// CSV of (i, j, k, count) quadruples for nonzero cells.
std::string census_csv(const TransitionMonoid& m, const CensusResult& c);

}  // namespace ldru
