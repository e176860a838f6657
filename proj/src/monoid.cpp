#include "ldru/monoid.hpp"

#include <cmath>
#include <deque>
#include <sstream>
#include <thread>

#include "ldru/error.hpp"

namespace ldru {

std::size_t TransitionMonoid::find(const StateMapping& e) const {
  auto it = index.find(e);
  return it == index.end() ? elements.size() : it->second;
}

StateMapping induced_mapping(const MooreMachine& m, std::span<const Token> seq) {
  StateMapping e(m.num_states);
  for (State q = 0; q < m.num_states; ++q) e[q] = run_state(m, seq, q);
  return e;
}

namespace {

StateMapping then(const StateMapping& first, const StateMapping& second) {
  StateMapping out(first.size());
  for (std::size_t q = 0; q < first.size(); ++q) out[q] = second[first[q]];
  return out;
}

}  // namespace

TransitionMonoid extract_monoid(const MooreMachine& m, Generators gens, std::size_t guard) {
  TransitionMonoid mon;
  mon.generators = gens;
  mon.alphabet_size = m.alphabet_size;

  auto intern = [&](StateMapping e) -> std::uint32_t {
    auto [it, inserted] = mon.index.try_emplace(e, static_cast<std::uint32_t>(mon.elements.size()));
    if (inserted) {
      if (mon.elements.size() >= guard) {
        fail(ErrorCode::kResource,
             "monoid exceeds guard of " + std::to_string(guard) + " elements");
      }
      mon.elements.push_back(std::move(e));
    }
    return it->second;
  };

  StateMapping identity(m.num_states);
  for (State q = 0; q < m.num_states; ++q) identity[q] = q;
  mon.identity_index = intern(identity);

  std::vector<StateMapping> generator_maps;
  if (gens == Generators::kAllSymbols) {
    for (Token a = 0; a < m.alphabet_size; ++a) {
      const Token seq[] = {a};
      generator_maps.push_back(induced_mapping(m, seq));
    }
  } else {
    for (Token a = 0; a < m.alphabet_size; ++a) {
      for (Token b = 0; b < m.alphabet_size; ++b) {
        const Token seq[] = {a, b};
        generator_maps.push_back(induced_mapping(m, seq));
      }
    }
  }
  for (const auto& g : generator_maps) mon.symbol_map.push_back(intern(g));

  // Breadth-first closure under right multiplication by generators.
  for (std::size_t head = 0; head < mon.elements.size(); ++head) {
    for (const auto& g : generator_maps) {
      intern(then(mon.elements[head], g));
    }
  }

  const std::size_t n = mon.elements.size();
  if (n <= kComposeTableLimit) {
    mon.compose_table.resize(n * n);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        auto k = mon.find(then(mon.elements[i], mon.elements[j]));
        if (k == n) fail(ErrorCode::kContract, "monoid not closed under composition");
        mon.compose_table[i * n + j] = static_cast<std::uint32_t>(k);
      }
    }
  }
  return mon;
}

std::uint32_t compose(const TransitionMonoid& m, std::size_t i, std::size_t j) {
  const std::size_t n = m.size();
  if (i >= n || j >= n) {
    fail(ErrorCode::kInputDomain, "monoid element index out of range (" + std::to_string(i) +
                                      ", " + std::to_string(j) + ") for size " + std::to_string(n));
  }
  if (!m.compose_table.empty()) return m.compose_table[i * n + j];
  auto k = m.find(then(m.elements[i], m.elements[j]));
  if (k == n) fail(ErrorCode::kContract, "monoid not closed under composition");
  return static_cast<std::uint32_t>(k);
}

std::uint32_t classify(const TransitionMonoid& m, std::span<const Token> seq) {
  auto acc = static_cast<std::uint32_t>(m.identity_index);
  const std::uint32_t q = m.alphabet_size;
  if (m.generators == Generators::kAllSymbols) {
    for (Token t : seq) {
      if (t >= q) fail(ErrorCode::kInputDomain, "token out of range");
      acc = compose(m, acc, m.symbol_map[t]);
    }
    return acc;
  }
  if (seq.size() % 2 != 0) {
    fail(ErrorCode::kInputDomain, "odd-length sequence under an even-length monoid");
  }
  for (std::size_t i = 0; i < seq.size(); i += 2) {
    if (seq[i] >= q || seq[i + 1] >= q) fail(ErrorCode::kInputDomain, "token out of range");
    acc = compose(m, acc, m.symbol_map[seq[i] * q + seq[i + 1]]);
  }
  return acc;
}

std::uint64_t monoid_size_formula(std::uint64_t n) {
  return 1 + (n + 1) * (n + 2) * (2 * n + 3) / 6;
}

std::vector<std::size_t> Bucket::lengths() const {
  std::vector<std::size_t> out;
  if (step == 0) fail(ErrorCode::kConfig, "bucket step must be positive");
  for (std::size_t len = min_len; len <= max_len; len += step) out.push_back(len);
  return out;
}

double CensusResult::logprob(std::size_t i, std::size_t j) const {
  const auto c = counts[i * num_classes + j];
  if (c == 0 || total == 0) return -std::numeric_limits<double>::infinity();
  return std::log(static_cast<double>(c) / static_cast<double>(total));
}

std::size_t CensusResult::nonzero_cells() const {
  std::size_t n = 0;
  for (auto c : counts) n += c != 0;
  return n;
}

std::uint64_t census_compositions_per_sequence(std::size_t length) {
  // Each real-real composition merges two slots, so reducing L/2 blocks to a
  // single one takes L/2 - 1 of them regardless of padding.
  return length >= 4 ? length / 2 - 1 : 0;
}

void census_accumulate(const TransitionMonoid& m, std::span<const Token> seq,
                       std::vector<std::uint64_t>& counts, std::uint64_t& total) {
  if (seq.empty() || seq.size() % 2 != 0) {
    fail(ErrorCode::kInputDomain, "census needs non-empty even-length sequences");
  }
  const std::size_t n = m.size();
  const std::uint32_t q = m.alphabet_size;
  // Depth-1 compositions (symbol x symbol) are the leaves and are not counted.
  std::vector<std::uint32_t> level;
  level.reserve(seq.size() / 2);
  for (std::size_t i = 0; i < seq.size(); i += 2) {
    if (m.generators == Generators::kEvenLengthPairs) {
      level.push_back(m.symbol_map[seq[i] * q + seq[i + 1]]);
    } else {
      level.push_back(compose(m, m.symbol_map[seq[i]], m.symbol_map[seq[i + 1]]));
    }
  }
  std::vector<std::uint32_t> next;
  while (level.size() > 1) {
    next.clear();
    for (std::size_t k = 0; k + 1 < level.size(); k += 2) {
      const auto a = level[k], b = level[k + 1];
      next.push_back(compose(m, a, b));
      ++counts[a * n + b];
      ++total;
    }
    // Odd count: the last slot pairs with right padding and passes through.
    if (level.size() % 2 == 1) next.push_back(level.back());
    level.swap(next);
  }
}

std::vector<CensusResult> composition_census(const TransitionMonoid& m,
                                             const PositiveSampler& sampler,
                                             const std::vector<Bucket>& buckets,
                                             std::uint64_t target_compositions,
                                             std::uint64_t seed, unsigned threads) {
  struct Job {
    std::size_t bucket;
    std::size_t length;
    std::uint64_t index;
  };
  const std::size_t n = m.size();
  std::vector<CensusResult> results(buckets.size());
  std::vector<Job> jobs;
  for (std::size_t b = 0; b < buckets.size(); ++b) {
    results[b].bucket = buckets[b];
    results[b].num_classes = n;
    results[b].counts.assign(n * n, 0);
    std::vector<std::size_t> lengths;
    for (auto len : buckets[b].lengths()) {
      if (len % 2 != 0) {
        fail(ErrorCode::kInputDomain, "census bucket contains odd length " + std::to_string(len));
      }
      if (census_compositions_per_sequence(len) > 0) lengths.push_back(len);
    }
    if (lengths.empty()) continue;
    // Sequence counts are fixed up front so that every length reaches its
    // cumulative share of the target; total overshoot is below one sequence.
    std::uint64_t cumulative = 0;
    for (std::size_t li = 0; li < lengths.size(); ++li) {
      const std::uint64_t goal =
          (target_compositions * (li + 1) + lengths.size() - 1) / lengths.size();
      const std::uint64_t per_seq = census_compositions_per_sequence(lengths[li]);
      std::uint64_t count = 0;
      if (goal > cumulative) count = (goal - cumulative + per_seq - 1) / per_seq;
      cumulative += count * per_seq;
      for (std::uint64_t s = 0; s < count; ++s) jobs.push_back({b, lengths[li], s});
    }
  }

  threads = std::max(1u, threads);
  struct Partial {
    std::vector<std::vector<std::uint64_t>> counts;
    std::vector<std::uint64_t> totals, sequences;
  };
  std::vector<Partial> partials(threads);
  auto worker = [&](unsigned w) {
    Partial& p = partials[w];
    p.counts.assign(buckets.size(), std::vector<std::uint64_t>(n * n, 0));
    p.totals.assign(buckets.size(), 0);
    p.sequences.assign(buckets.size(), 0);
    for (std::size_t i = w; i < jobs.size(); i += threads) {
      const Job& job = jobs[i];
      Rng rng(seed, Stream::kData, {job.bucket, job.length, job.index});
      const Sequence seq = sampler(job.length, rng);
      census_accumulate(m, seq, p.counts[job.bucket], p.totals[job.bucket]);
      ++p.sequences[job.bucket];
    }
  };
  if (threads == 1) {
    worker(0);
  } else {
    std::vector<std::exception_ptr> errors(threads);
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < threads; ++w) {
      pool.emplace_back([&, w] {
        try {
          worker(w);
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
    }
    for (auto& t : pool) t.join();
    for (auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
  }
  for (const auto& p : partials) {
    for (std::size_t b = 0; b < buckets.size(); ++b) {
      for (std::size_t c = 0; c < n * n; ++c) results[b].counts[c] += p.counts[b][c];
      results[b].total += p.totals[b];
      results[b].sequences += p.sequences[b];
    }
  }
  return results;
}

nlohmann::json to_json(const TransitionMonoid& m) {
  nlohmann::json j;
  j["num_elements"] = m.size();
  j["num_states"] = m.elements.empty() ? 0 : m.elements.front().size();
  j["identity_index"] = m.identity_index;
  j["generators"] = m.generators == Generators::kAllSymbols ? "all_symbols" : "even_length_pairs";
  j["elements"] = m.elements;
  j["symbol_map"] = m.symbol_map;
  j["compose_table"] = m.compose_table;
  return j;
}

nlohmann::json to_json(const CensusResult& c) {
  nlohmann::json j;
  j["bucket"] = {c.bucket.min_len, c.bucket.max_len, c.bucket.step};
  j["num_classes"] = c.num_classes;
  j["total"] = c.total;
  j["counts"] = c.counts;
  auto lp = nlohmann::json::array();
  for (std::size_t i = 0; i < c.num_classes; ++i) {
    for (std::size_t j2 = 0; j2 < c.num_classes; ++j2) {
      const double v = c.logprob(i, j2);
      if (std::isfinite(v)) {
        lp.push_back(v);
      } else {
        lp.push_back(nullptr);
      }
    }
  }
  j["logprob"] = std::move(lp);
  return j;
}

std::string census_csv(const TransitionMonoid& m, const CensusResult& c) {
  std::ostringstream os;
  os << "i,j,k,count\n";
  for (std::size_t i = 0; i < c.num_classes; ++i) {
    for (std::size_t j = 0; j < c.num_classes; ++j) {
      const auto cnt = c.counts[i * c.num_classes + j];
      if (cnt != 0) os << i << ',' << j << ',' << compose(m, i, j) << ',' << cnt << '\n';
    }
  }
  return os.str();
}

}  // namespace ldru
