#include "ldru/sampler.hpp"

#include <algorithm>
#include <cmath>

#include <json.hpp>

#include "ldru/error.hpp"

namespace ldru {

namespace {

constexpr int kLengthRetries = 1000;
constexpr int kFixedLengthRetries = 64;

Sequence uniform_sequence(std::uint32_t q, std::size_t length, Rng& rng) {
  Sequence s(length);
  for (auto& t : s) t = static_cast<Token>(rng.below(q));
  return s;
}

std::size_t retries(double factor) {
  return static_cast<std::size_t>(std::ceil(factor * kRejectionRetryBase));
}

}  // namespace

Batch make_batch(const MooreMachine& m, const std::vector<Sequence>& rows,
                 const std::vector<std::uint32_t>& labels) {
  Batch b;
  b.batch_size = rows.size();
  b.pad_token = m.alphabet_size;
  for (const auto& r : rows) b.max_len = std::max(b.max_len, r.size());
  b.tokens.assign(b.batch_size * b.max_len, b.pad_token);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    std::copy(rows[i].begin(), rows[i].end(), b.tokens.begin() + i * b.max_len);
    b.lengths.push_back(static_cast<std::uint32_t>(rows[i].size()));
  }
  b.labels = labels;
  return b;
}

Oversample oversample_factors(SamplerKind kind) {
  switch (kind) {
    case SamplerKind::kDyck: return {1.0, 1.0};
    case SamplerKind::kTomita3: return {2.0, 2.5};
    case SamplerKind::kTomita4: return {1.0, 3.0};
    case SamplerKind::kTomita5: return {5.0, 2.0};
    case SamplerKind::kTomita6: return {4.0, 2.0};
    case SamplerKind::kTomita7: return {1.0, 5.0};
    default: return {1.0, 1.0};
  }
}

Sequence sample_dyck_positive(std::uint32_t n, std::size_t length, bool augment, Rng& rng) {
  if (length < 2 || length % 2 != 0) {
    fail(ErrorCode::kInputDomain, "Dyck positives need even length >= 2, got " +
                                      std::to_string(length));
  }
  Sequence out;
  out.reserve(length);
  std::uint32_t depth = 0;
  for (std::size_t i = 0; i < length; ++i) {
    const std::size_t remaining = length - i;
    const bool can_close = depth > 0;
    const bool can_open = depth < n && remaining > depth + 1;
    bool close = false;
    if (can_close && can_open) {
      double p = static_cast<double>(depth) / (depth + 1.0);
      if (augment) {
        p += rng.normal(0.0, 0.15) - 0.1 * static_cast<double>(depth) / n;
        p = std::clamp(p, 0.0, 1.0);
      }
      close = rng.bernoulli(p);
    } else {
      close = can_close;
    }
    out.push_back(close ? 1 : 0);
    depth = close ? depth - 1 : depth + 1;
  }
  return out;
}

std::optional<Sequence> sample_by_rejection(const MooreMachine& m, std::size_t length,
                                            std::uint32_t target, double oversample, Rng& rng) {
  const std::size_t tries = retries(oversample);
  for (std::size_t i = 0; i < tries; ++i) {
    Sequence s = uniform_sequence(m.alphabet_size, length, rng);
    if (run(m, s) == target) return s;
  }
  return std::nullopt;
}

double tomita7_self_probability(std::size_t length) {
  return 1.0 - 4.0 / static_cast<double>(std::max<std::size_t>(length, 16));
}

Sequence sample_tomita7_positive(std::size_t length, Rng& rng) {
  // Chain states 0..3 read 0*, 1*, 0*, 1*; the symbol that advances from
  // state s is the one state s+1 loops on.
  static constexpr Token kLoop[] = {0, 1, 0, 1};
  const double self = tomita7_self_probability(length);
  Sequence out;
  out.reserve(length);
  std::size_t state = 0;
  for (std::size_t i = 0; i < length; ++i) {
    if (state < 3 && !rng.bernoulli(self)) ++state;
    out.push_back(kLoop[state]);
  }
  return out;
}

std::optional<Sequence> sample_tomita3_positive(const MooreMachine& m, std::size_t length,
                                                Rng& rng) {
  const std::size_t tries = retries(oversample_factors(SamplerKind::kTomita3).positive);
  for (std::size_t k = 0; k < tries; ++k) {
    Sequence out;
    out.reserve(length);
    State s = m.initial;
    for (std::size_t i = 0; i < length; ++i) {
      // State 3 may only read 0; everything else is uniform.
      const Token t = s == 3 ? 0 : static_cast<Token>(rng.below(2));
      out.push_back(t);
      s = m.step(s, t);
    }
    if (m.output[s] == 1) return out;
  }
  return std::nullopt;
}

Sequence sample_tomita4_positive(std::size_t length, Rng& rng) {
  Sequence out;
  out.reserve(length);
  std::uint32_t zeros = 0;  // trailing run of 0s, i.e. the automaton state
  for (std::size_t i = 0; i < length; ++i) {
    const Token t = zeros == 2 ? 1 : static_cast<Token>(rng.below(2));
    out.push_back(t);
    zeros = t == 0 ? zeros + 1 : 0;
  }
  return out;
}

Sequence sample_mod_arith(std::size_t length, Rng& rng) {
  if (length % 2 == 0) {
    fail(ErrorCode::kInputDomain, "modular arithmetic expressions have odd length");
  }
  Sequence out(length);
  for (std::size_t i = 0; i < length; ++i) {
    out[i] = i % 2 == 0 ? static_cast<Token>(rng.below(5)) : static_cast<Token>(5 + rng.below(3));
  }
  return out;
}

std::optional<Sequence> sample_row(const TaskSpec& task, std::size_t length,
                                   std::optional<std::uint32_t> target, bool augment, Rng& rng) {
  const MooreMachine& m = task.machine;
  const Oversample os = oversample_factors(task.sampler_kind);
  if (length == 0) return std::nullopt;

  auto check = [&](std::optional<Sequence> s) -> std::optional<Sequence> {
    if (s && target && run(m, *s) != *target) return std::nullopt;
    return s;
  };

  switch (task.sampler_kind) {
    case SamplerKind::kModArith:
      if (length % 2 == 0) return std::nullopt;
      return check(sample_mod_arith(length, rng));
    case SamplerKind::kDyck:
      if (!target) return uniform_sequence(m.alphabet_size, length, rng);
      if (*target == 1) {
        if (length % 2 != 0) return std::nullopt;
        return sample_dyck_positive(task.dyck_depth, length, augment, rng);
      }
      return sample_by_rejection(m, length, 0, os.negative, rng);
    case SamplerKind::kTomita3:
      if (target && *target == 1) return sample_tomita3_positive(m, length, rng);
      break;
    case SamplerKind::kTomita4:
      if (target && *target == 1) return sample_tomita4_positive(length, rng);
      break;
    case SamplerKind::kTomita7:
      if (target && *target == 1) return sample_tomita7_positive(length, rng);
      break;
    default:
      break;
  }
  if (!target) return uniform_sequence(m.alphabet_size, length, rng);
  return sample_by_rejection(m, length, *target, *target == 1 ? os.positive : os.negative, rng);
}

Batch sample_batch(const SamplerConfig& cfg, std::uint64_t ordinal) {
  if (cfg.min_len < 1 || cfg.min_len > cfg.max_len) {
    fail(ErrorCode::kConfig, "sampler needs 1 <= min_len <= max_len");
  }
  const TaskSpec& task = cfg.task;
  std::vector<std::size_t> odd_lengths;
  if (task.sampler_kind == SamplerKind::kModArith) {
    for (std::size_t l = cfg.min_len; l <= cfg.max_len; ++l) {
      if (l % 2 == 1) odd_lengths.push_back(l);
    }
    if (odd_lengths.empty()) fail(ErrorCode::kConfig, "no odd length in range for mod_arith");
  }

  std::vector<Sequence> rows;
  std::vector<std::uint32_t> labels;
  rows.reserve(cfg.batch_size);
  for (std::size_t r = 0; r < cfg.batch_size; ++r) {
    Rng rng(cfg.seed, Stream::kData, {ordinal, r});
    std::optional<std::uint32_t> target;
    if (cfg.balanced && task.binary()) target = r % 2 == 0 ? 1u : 0u;
    std::optional<Sequence> seq;
    for (int attempt = 0; attempt < kLengthRetries && !seq; ++attempt) {
      const std::size_t len =
          odd_lengths.empty()
              ? static_cast<std::size_t>(rng.range(static_cast<std::int64_t>(cfg.min_len),
                                                   static_cast<std::int64_t>(cfg.max_len)))
              : odd_lengths[rng.below(odd_lengths.size())];
      seq = sample_row(task, len, target, cfg.augment, rng);
    }
    if (!seq) {
      fail(ErrorCode::kConfig, "no feasible length in [" + std::to_string(cfg.min_len) + ", " +
                                   std::to_string(cfg.max_len) + "] for " + task.name +
                                   " label " + std::to_string(target.value_or(0)));
    }
    labels.push_back(run(task.machine, *seq));
    rows.push_back(std::move(*seq));
  }
  return make_batch(task.machine, rows, labels);
}

Batch eval_set(const TaskSpec& task, std::size_t length, std::size_t count, std::uint64_t seed) {
  std::vector<Sequence> rows;
  std::vector<std::uint32_t> labels;
  rows.reserve(count);
  for (std::size_t r = 0; r < count; ++r) {
    Rng rng(seed, Stream::kEval, {length, r});
    std::optional<std::uint32_t> target;
    if (task.binary()) target = r % 2 == 0 ? 1u : 0u;
    std::optional<Sequence> seq;
    for (int flip = 0; flip < 2 && !seq; ++flip) {
      for (int attempt = 0; attempt < kFixedLengthRetries && !seq; ++attempt) {
        seq = sample_row(task, length, target, false, rng);
      }
      if (target) target = 1 - *target;
    }
    if (!seq) {
      fail(ErrorCode::kConfig, "cannot sample " + task.name + " at length " + std::to_string(length));
    }
    labels.push_back(run(task.machine, *seq));
    rows.push_back(std::move(*seq));
  }
  Batch b = make_batch(task.machine, rows, labels);
  if (count == 0) b.max_len = length;
  return b;
}

void write_jsonl(std::ostream& os, const Batch& b) {
  for (std::size_t r = 0; r < b.batch_size; ++r) {
    auto row = b.row(r);
    nlohmann::json j;
    j["tokens"] = std::vector<Token>(row.begin(), row.end());
    j["label"] = b.labels[r];
    os << j.dump() << '\n';
  }
}

}  // namespace ldru
