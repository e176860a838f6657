#include <doctest.h>

#include <regex>
#include <set>
#include <sstream>

#include "ldru/error.hpp"
#include "ldru/sampler.hpp"
#include "oracles.hpp"

using namespace ldru;

namespace {

SamplerConfig config(const std::string& task, std::size_t batch, std::uint64_t seed) {
  SamplerConfig c;
  c.task = build_task(task);
  c.batch_size = batch;
  c.seed = seed;
  return c;
}

}  // namespace

TEST_SUITE("sampler") {

TEST_CASE("balanced parity batch") {
  const Batch b = sample_batch(config("parity", 4, 0), 0);
  CHECK(b.batch_size == 4);
  std::size_t pos = 0;
  for (std::size_t r = 0; r < 4; ++r) {
    const Sequence s(b.row(r).begin(), b.row(r).end());
    CHECK(b.labels[r] == oracle::parity(s));
    pos += b.labels[r];
  }
  CHECK(pos == 2);
}

TEST_CASE("padding and labels across all tasks") {
  std::size_t rows = 0;
  for (const auto& name : task_names()) {
    auto c = config(name, 256, 17);
    c.max_len = 30;
    for (std::uint64_t ord = 0; ord < 20; ++ord) {
      const Batch b = sample_batch(c, ord);
      CHECK(b.pad_token == c.task.machine.alphabet_size);
      std::size_t pos = 0;
      for (std::size_t r = 0; r < b.batch_size; ++r) {
        const Sequence s(b.row(r).begin(), b.row(r).end());
        REQUIRE(b.labels[r] == oracle::label(name, s));
        CHECK(s.size() >= 1);
        CHECK(s.size() <= 30);
        for (std::size_t k = b.lengths[r]; k < b.max_len; ++k) REQUIRE(b.tokens[r * b.max_len + k] == b.pad_token);
        pos += b.labels[r] == 1;
        ++rows;
      }
      if (c.task.binary()) CHECK(pos == b.batch_size / 2);
    }
  }
  CHECK(rows >= 100000);
}

TEST_CASE("mod_arith rows are odd-length alternating expressions") {
  const Batch b = sample_batch(config("mod_arith", 512, 2), 0);
  for (std::size_t r = 0; r < b.batch_size; ++r) {
    const auto row = b.row(r);
    REQUIRE(row.size() % 2 == 1);
    for (std::size_t i = 0; i < row.size(); ++i) {
      if (i % 2 == 0) {
        CHECK(row[i] < 5);
      } else {
        CHECK(row[i] >= 5);
      }
    }
  }
}

TEST_CASE("Dyck positives respect the depth bound") {
  for (std::uint32_t n : {2u, 3u, 4u, 6u, 8u, 12u}) {
    Rng rng(n, Stream::kData);
    for (int i = 0; i < 10000; ++i) {
      const auto len = 2 * static_cast<std::size_t>(rng.range(1, 30));
      const Sequence s = sample_dyck_positive(n, len, i % 2 == 0, rng);
      REQUIRE(s.size() == len);
      REQUIRE(oracle::dyck(n, s) == 1);
      REQUIRE(oracle::max_depth(s) <= n);
    }
  }
}

TEST_CASE("Dyck positive examples") {
  Rng rng(0, Stream::kData);
  CHECK(sample_dyck_positive(1, 6, false, rng) == Sequence{0, 1, 0, 1, 0, 1});
  std::set<Sequence> seen;
  for (int i = 0; i < 200; ++i) seen.insert(sample_dyck_positive(2, 4, false, rng));
  CHECK(seen == std::set<Sequence>{{0, 0, 1, 1}, {0, 1, 0, 1}});
  CHECK_THROWS_AS(sample_dyck_positive(2, 5, false, rng), Error);
}

TEST_CASE("rejection sampling") {
  Rng rng(1, Stream::kData);
  const auto parity = build_task("parity").machine;
  CHECK(sample_negative_by_rejection(parity, 1, 1.0, rng) == Sequence{1});
  const auto d2 = build_task("d2").machine;
  for (int i = 0; i < 20; ++i) {
    const Rng before = rng;
    const auto s = sample_negative_by_rejection(d2, 5, 1.0, rng);
    REQUIRE(s.has_value());
    CHECK(rng.counter() - before.counter() == 5);
  }
  // Exactly one of the eight length-3 strings is rejected by Tomita 4.
  const auto t4 = build_task("tomita4").machine;
  std::size_t rejected = 0;
  for (unsigned code = 0; code < 8; ++code) {
    rejected += run(t4, Sequence{code & 1u, (code >> 1) & 1u, (code >> 2) & 1u}) == 0;
  }
  CHECK(rejected == 1);
  std::size_t hits = 0;
  const int trials = 20000;
  for (int i = 0; i < trials; ++i) {
    Sequence s(3);
    for (auto& t : s) t = static_cast<Token>(rng.below(2));
    hits += run(t4, s) == 0;
  }
  CHECK(std::abs(double(hits) / trials - 0.125) < 0.01);
  CHECK(oversample_factors(SamplerKind::kTomita7).negative == 5.0);
  CHECK(oversample_factors(SamplerKind::kTomita5).positive == 5.0);
}

TEST_CASE("Tomita 7 walk") {
  CHECK(tomita7_self_probability(4) == doctest::Approx(0.75));
  CHECK(tomita7_self_probability(32) == doctest::Approx(0.875));
  Rng rng(4, Stream::kData);
  const std::regex re("^0*1*0*1*$");
  for (int i = 0; i < 2000; ++i) {
    const Sequence s = sample_tomita7_positive(static_cast<std::size_t>(rng.range(1, 60)), rng);
    REQUIRE(std::regex_match(oracle::bits(s), re));
  }
}

TEST_CASE("Tomita 3 and 4 positive walks") {
  const auto t3 = build_task("tomita3").machine;
  Rng rng(6, Stream::kData);
  for (int i = 0; i < 2000; ++i) {
    const auto s = sample_tomita3_positive(t3, static_cast<std::size_t>(rng.range(1, 40)), rng);
    if (s) REQUIRE(oracle::tomita3(*s) == 1);
    if (s) CHECK(*s != Sequence{1, 0});
    const auto s4 = sample_tomita4_positive(static_cast<std::size_t>(rng.range(1, 40)), rng);
    REQUIRE(oracle::tomita4(s4) == 1);
  }
}

TEST_CASE("Tomita negatives are rejected") {
  for (const std::string name : {"tomita3", "tomita4", "tomita5", "tomita6", "tomita7"}) {
    const auto t = build_task(name);
    Rng rng(9, Stream::kData);
    for (int i = 0; i < 500; ++i) {
      const auto s = sample_row(t, static_cast<std::size_t>(rng.range(1, 30)), 0u, true, rng);
      if (s) REQUIRE(oracle::label(name, *s) == 0);
      const auto p = sample_row(t, static_cast<std::size_t>(rng.range(1, 30)), 1u, true, rng);
      if (p) REQUIRE(oracle::label(name, *p) == 1);
    }
  }
}

TEST_CASE("infeasible length range is a configuration error") {
  auto c = config("d2", 4, 0);
  c.min_len = 3;
  c.max_len = 3;
  CHECK_THROWS_AS(sample_batch(c, 0), Error);
  c.min_len = 5;
  c.max_len = 2;
  CHECK_THROWS_AS(sample_batch(c, 0), Error);
}

TEST_CASE("eval sets") {
  const Batch p = eval_set(build_task("parity"), 500, 512, 7);
  CHECK(p.batch_size == 512);
  for (auto l : p.lengths) CHECK(l == 500);
  const Batch d = eval_set(build_task("d6"), 100, 512, 1);
  std::size_t pos = 0;
  for (auto l : d.labels) pos += l;
  CHECK(pos == 256);
  CHECK(eval_set(build_task("d6"), 100, 512, 1) == d);
  // Odd lengths have no Dyck positives; rows fall back to negatives.
  const Batch odd = eval_set(build_task("d2"), 7, 16, 1);
  for (auto l : odd.labels) CHECK(l == 0);
}

TEST_CASE("dumps are byte-identical for identical configs") {
  for (const auto& name : task_names()) {
    std::ostringstream a, b;
    write_jsonl(a, sample_batch(config(name, 64, 5), 3));
    write_jsonl(b, sample_batch(config(name, 64, 5), 3));
    CHECK(a.str() == b.str());
  }
  std::ostringstream empty;
  write_jsonl(empty, sample_batch(config("parity", 0, 0), 0));
  CHECK(empty.str().empty());
}

}
