#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace ldru {

using Token = std::uint32_t;
using State = std::uint32_t;
using Sequence = std::vector<Token>;

/// Complete deterministic Moore machine. `transition` is row-major
/// num_states x alphabet_size.
struct MooreMachine {
  std::uint32_t num_states = 0;
  std::uint32_t alphabet_size = 0;
  std::uint32_t output_size = 0;
  State initial = 0;
  std::vector<State> transition;
  std::vector<std::uint32_t> output;

  State step(State s, Token t) const { return transition[s * alphabet_size + t]; }

  bool operator==(const MooreMachine&) const = default;
};

/// Final state reached from `from` after reading `seq`.
State run_state(const MooreMachine& m, std::span<const Token> seq, State from);
inline State run_state(const MooreMachine& m, std::span<const Token> seq) {
  return run_state(m, seq, m.initial);
}

/// Output symbol of the state reached from the initial state.
std::uint32_t run(const MooreMachine& m, std::span<const Token> seq);

/// Invariant violations as human-readable strings; empty means valid.
std::vector<std::string> validate(const MooreMachine& m);

/// Prefix language over q symbols whose label is decided by the first p
/// symbols. Requires p >= 1, q >= 2 and q^p <= 2^20.
MooreMachine build_prefix_language(std::uint32_t p, std::uint32_t q);

/// Dyck-1 with nesting bounded by n: chain states 0..n plus a rejecting sink
/// n+1. Symbol 0 opens, 1 closes.
MooreMachine build_dyck(std::uint32_t n);

enum class SamplerKind {
  kUniform,       // uniform symbols, label by run()
  kModArith,      // alternating operand/operator at odd lengths
  kDyck,          // bounded-depth Dyck positives, rejection negatives
  kTomita3,
  kTomita4,
  kTomita5,
  kTomita6,
  kTomita7,
};

struct TaskSpec {
  std::string name;
  MooreMachine machine;
  SamplerKind sampler_kind = SamplerKind::kUniform;
  std::vector<std::string> alphabet_labels;
  /// Dyck depth bound when sampler_kind == kDyck.
  std::uint32_t dyck_depth = 0;
  /// Binary recognition tasks get polarity-balanced batches.
  bool binary() const { return machine.output_size == 2; }
};

/// All 21 registry names, in the canonical listing order.
const std::vector<std::string>& task_names();

/// Throws Error(kLookup) for unknown names.
TaskSpec build_task(std::string_view name);

/// Tokens for a space-free label string such as "2+3*4" (mod_arith) or "0110".
Sequence parse_tokens(const TaskSpec& task, std::string_view text);

nlohmann::json to_json(const MooreMachine& m);
/// Parses and validates; throws Error(kFormat) on schema or invariant errors.
MooreMachine machine_from_json(const nlohmann::json& j);

}  // namespace ldru
