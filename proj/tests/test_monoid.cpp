#include <doctest.h>

#include <set>

#include "ldru/error.hpp"
#include "ldru/monoid.hpp"
#include "ldru/sampler.hpp"
#include "oracles.hpp"

using namespace ldru;

namespace {

// Table of D2 state mappings with representatives, in the published order.
const std::vector<std::pair<StateMapping, std::string>> kD2Table = {
    {{0, 1, 2, 3}, ""},    {{1, 2, 3, 3}, "0"},    {{3, 0, 1, 3}, "1"},   {{2, 3, 3, 3}, "00"},
    {{0, 1, 3, 3}, "01"},  {{3, 1, 2, 3}, "10"},   {{3, 3, 0, 3}, "11"},  {{3, 3, 3, 3}, "000"},
    {{1, 3, 3, 3}, "001"}, {{3, 0, 3, 3}, "011"},  {{3, 2, 3, 3}, "100"}, {{3, 3, 1, 3}, "110"},
    {{0, 3, 3, 3}, "0011"}, {{3, 1, 3, 3}, "0110"}, {{3, 3, 2, 3}, "1100"},
};

Sequence seq(const std::string& bits) {
  Sequence s;
  for (char c : bits) s.push_back(static_cast<Token>(c - '0'));
  return s;
}

// Distinct mappings of all sequences up to max_len, by brute force.
std::size_t enumerate_mappings(const MooreMachine& m, std::size_t max_len, bool even_only) {
  std::set<StateMapping> seen;
  for (std::size_t len = 0; len <= max_len; ++len) {
    if (even_only && len % 2) continue;
    for (std::uint64_t code = 0; code < (1ull << len); ++code) {
      Sequence s(len);
      for (std::size_t i = 0; i < len; ++i) s[i] = (code >> i) & 1;
      seen.insert(induced_mapping(m, s));
    }
  }
  return seen.size();
}

}  // namespace

TEST_SUITE("monoid") {

TEST_CASE("D2 monoid matches the published table element for element") {
  const auto m = extract_monoid(build_dyck(2), Generators::kAllSymbols);
  REQUIRE(m.size() == kD2Table.size());
  for (std::size_t i = 0; i < m.size(); ++i) {
    INFO("element ", i);
    CHECK(m.elements[i] == kD2Table[i].first);
    CHECK(induced_mapping(build_dyck(2), seq(kD2Table[i].second)) == kD2Table[i].first);
  }
  CHECK(m.identity_index == 0);
}

TEST_CASE("D2 compositions") {
  const auto m = extract_monoid(build_dyck(2), Generators::kAllSymbols);
  CHECK(compose(m, 1, 2) == 4);
  for (std::size_t j = 0; j < m.size(); ++j) {
    CHECK(compose(m, 0, j) == j);
    CHECK(compose(m, 7, j) == 7);
  }
  CHECK(classify(m, seq("0011")) == 12);
  CHECK(classify(m, seq("0101")) == 4);
  CHECK(classify(m, Sequence{}) == m.identity_index);
  CHECK_THROWS_AS(compose(m, 15, 0), Error);
}

TEST_CASE("parity monoid is Z2") {
  const auto m = extract_monoid(build_task("parity").machine, Generators::kAllSymbols);
  CHECK(m.size() == 2);
}

TEST_CASE("size formula against extraction and brute force") {
  CHECK(monoid_size_formula(1) == 6);
  CHECK(monoid_size_formula(2) == 15);
  CHECK(monoid_size_formula(6) == 141);
  for (std::uint32_t n = 1; n <= 4; ++n) {
    const auto m = extract_monoid(build_dyck(n), Generators::kAllSymbols);
    CHECK(m.size() == monoid_size_formula(n));
    CHECK(enumerate_mappings(build_dyck(n), 2 * n + 2, false) == m.size());
  }
}

TEST_CASE("D6 full and even-only sizes") {
  CHECK(extract_monoid(build_dyck(6), Generators::kAllSymbols).size() == 141);
  const auto even = extract_monoid(build_dyck(6), Generators::kEvenLengthPairs);
  CHECK(even.size() == 73);
  CHECK(enumerate_mappings(build_dyck(6), 14, true) == 73);
  CHECK_THROWS_AS(classify(even, seq("010")), Error);
}

TEST_CASE("guard raises a resource error") {
  try {
    extract_monoid(build_dyck(6), Generators::kAllSymbols, 50);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kResource);
  }
}

TEST_CASE("monoid laws hold exhaustively") {
  for (const auto& name : task_names()) {
    const auto t = build_task(name);
    const auto m = extract_monoid(t.machine, Generators::kAllSymbols);
    if (m.size() > 200) continue;
    INFO(name);
    const std::size_t n = m.size();
    for (std::size_t i = 0; i < n; ++i) {
      CHECK(compose(m, i, m.identity_index) == i);
      CHECK(compose(m, m.identity_index, i) == i);
    }
    bool assoc = true;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        const auto ij = compose(m, i, j);
        for (std::size_t k = 0; k < n; ++k) {
          assoc = assoc && compose(m, ij, k) == compose(m, i, compose(m, j, k));
        }
      }
    }
    CHECK(assoc);
  }
}

TEST_CASE("classify is a morphism and equals the induced mapping") {
  const auto machine = build_dyck(4);
  const auto m = extract_monoid(machine, Generators::kEvenLengthPairs);
  Rng rng(5, Stream::kData);
  for (int i = 0; i < 1000; ++i) {
    Sequence u(2 * static_cast<std::size_t>(rng.range(0, 8))), v(2 * static_cast<std::size_t>(rng.range(0, 8)));
    for (auto& t : u) t = static_cast<Token>(rng.below(2));
    for (auto& t : v) t = static_cast<Token>(rng.below(2));
    Sequence uv = u;
    uv.insert(uv.end(), v.begin(), v.end());
    REQUIRE(classify(m, uv) == compose(m, classify(m, u), classify(m, v)));
    REQUIRE(m.elements[classify(m, uv)] == induced_mapping(machine, uv));
  }
}

TEST_CASE("balanced bracketing equals the left fold") {
  const auto m = extract_monoid(build_dyck(3), Generators::kAllSymbols);
  Rng rng(8, Stream::kData);
  for (int i = 0; i < 200; ++i) {
    Sequence s(static_cast<std::size_t>(rng.range(1, 40)));
    for (auto& t : s) t = static_cast<Token>(rng.below(2));
    std::vector<std::uint32_t> level;
    for (auto t : s) level.push_back(m.symbol_map[t]);
    while (level.size() > 1) {
      std::vector<std::uint32_t> next;
      for (std::size_t k = 0; k + 1 < level.size(); k += 2) next.push_back(compose(m, level[k], level[k + 1]));
      if (level.size() % 2) next.push_back(level.back());
      level.swap(next);
    }
    CHECK(level[0] == classify(m, s));
  }
}

TEST_CASE("census on 0101 hand simulation") {
  const auto m = extract_monoid(build_dyck(2), Generators::kEvenLengthPairs);
  std::vector<std::uint64_t> counts(m.size() * m.size(), 0);
  std::uint64_t total = 0;
  census_accumulate(m, seq("0101"), counts, total);
  const auto e01 = m.symbol_map[0 * 2 + 1];
  CHECK(total == 1);
  CHECK(counts[e01 * m.size() + e01] == 1);
  // Longer repetitions stay on the subsemigroup generated by "01".
  census_accumulate(m, seq("010101010101"), counts, total);
  CHECK(total == 1 + census_compositions_per_sequence(12));
  CHECK(counts[e01 * m.size() + e01] == total);
  CHECK(compose(m, e01, e01) == e01);
}

TEST_CASE("census totals and sparsity") {
  const auto m = extract_monoid(build_dyck(6), Generators::kEvenLengthPairs);
  PositiveSampler sampler = [](std::size_t len, Rng& rng) { return sample_dyck_positive(6, len, false, rng); };
  const std::uint64_t target = 20000;
  const auto res = composition_census(m, sampler, {{10, 40, 2}, {480, 500, 2}}, target, 1);
  REQUIRE(res.size() == 2);
  for (const auto& r : res) {
    std::uint64_t sum = 0;
    for (auto c : r.counts) sum += c;
    CHECK(sum == r.total);
    CHECK(r.total >= target);
    CHECK(r.total - target <= 2 * r.bucket.max_len);
    for (std::size_t i = 0; i < r.num_classes; ++i) {
      for (std::size_t j = 0; j < r.num_classes; ++j) {
        CHECK(std::isfinite(r.logprob(i, j)) == (r.counts[i * r.num_classes + j] > 0));
      }
    }
  }
  CHECK(res[1].nonzero_cells() > res[0].nonzero_cells());
}

TEST_CASE("census does not depend on the worker count") {
  const auto m = extract_monoid(build_dyck(4), Generators::kEvenLengthPairs);
  PositiveSampler sampler = [](std::size_t len, Rng& rng) { return sample_dyck_positive(4, len, false, rng); };
  const auto a = composition_census(m, sampler, {{10, 40, 2}}, 5000, 3, 1);
  const auto b = composition_census(m, sampler, {{10, 40, 2}}, 5000, 3, 3);
  CHECK(a[0].counts == b[0].counts);
  CHECK(a[0].total == b[0].total);
}

TEST_CASE("two-element monoid census fills every cell") {
  const auto m = extract_monoid(build_task("parity").machine, Generators::kAllSymbols);
  PositiveSampler sampler = [](std::size_t len, Rng& rng) {
    Sequence s(len);
    for (auto& t : s) t = static_cast<Token>(rng.below(2));
    return s;
  };
  const auto res = composition_census(m, sampler, {{8, 16, 2}}, 2000, 0);
  CHECK(res[0].nonzero_cells() == 4);
}

TEST_CASE("census JSON and CSV") {
  const auto m = extract_monoid(build_dyck(2), Generators::kEvenLengthPairs);
  PositiveSampler sampler = [](std::size_t len, Rng& rng) { return sample_dyck_positive(2, len, false, rng); };
  const auto res = composition_census(m, sampler, {{4, 8, 2}}, 100, 0);
  const auto j = to_json(res[0]);
  CHECK(j["bucket"] == nlohmann::json::array({4, 8, 2}));
  CHECK(j["counts"].size() == m.size() * m.size());
  CHECK(j["logprob"].size() == m.size() * m.size());
  const auto csv = census_csv(m, res[0]);
  CHECK(csv.rfind("i,j,k,count\n", 0) == 0);
  CHECK_THROWS_AS(composition_census(m, sampler, {{5, 9, 2}}, 100, 0), Error);
}

}
