#include <doctest.h>

#include "ldru/automata.hpp"
#include "ldru/error.hpp"
#include "ldru/rng.hpp"
#include "oracles.hpp"

using namespace ldru;

TEST_SUITE("automata") {

TEST_CASE("parity folds by hand") {
  const auto t = build_task("parity");
  CHECK(run(t.machine, Sequence{1, 0, 1}) == 1);
  CHECK(run(t.machine, Sequence{1}) == 0);
  CHECK(run(t.machine, Sequence{}) == t.machine.output[t.machine.initial]);
}

TEST_CASE("out of range token is an input-domain error") {
  const auto t = build_task("parity");
  try {
    run(t.machine, Sequence{0, 2});
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kInputDomain);
  }
}

TEST_CASE("prefix language P4,2") {
  const auto m = build_prefix_language(4, 2);
  CHECK(m.num_states == 31);
  CHECK(m.output_size == 17);
  CHECK(m.step(0, 0) == 1);
  CHECK(m.step(0, 1) == 2);
  CHECK(m.step(1, 0) == 3);
  CHECK(m.step(1, 1) == 4);
  CHECK(m.output[15] == 1);
  const Sequence s{0, 1, 1, 0, 1, 1, 1};
  CHECK(run_state(m, std::span(s).first(4)) == 21);
  CHECK(run(m, s) == 7);
  CHECK(m.step(21, 0) == 21);
  CHECK(m.step(21, 1) == 21);
}

TEST_CASE("prefix language P2,2 matches the seven-state diagram") {
  const auto m = build_prefix_language(2, 2);
  CHECK(m.num_states == 7);
  CHECK(m.output == std::vector<std::uint32_t>{0, 0, 0, 1, 2, 3, 4});
}

TEST_CASE("prefix language P1,2") {
  const auto m = build_prefix_language(1, 2);
  CHECK(m.num_states == 3);
  CHECK(m.transition == std::vector<State>{1, 2, 1, 1, 2, 2});
  CHECK(m.output == std::vector<std::uint32_t>{0, 1, 2});
}

TEST_CASE("prefix language state count and guard") {
  for (std::uint32_t p = 1; p <= 4; ++p) {
    for (std::uint32_t q = 2; q <= 4; ++q) {
      std::uint32_t total = 0, pw = 1;
      for (std::uint32_t i = 0; i <= p; ++i, pw *= q) total += pw;
      CHECK(build_prefix_language(p, q).num_states == total);
    }
  }
  CHECK_THROWS_AS(build_prefix_language(21, 2), Error);
  CHECK_THROWS_AS(build_prefix_language(0, 2), Error);
  CHECK_THROWS_AS(build_prefix_language(2, 1), Error);
}

TEST_CASE("d6 machine shape") {
  const auto t = build_task("d6");
  CHECK(t.machine.num_states == 8);
  CHECK(t.machine.output[0] == 1);
  for (State s = 1; s < 8; ++s) CHECK(t.machine.output[s] == 0);
  CHECK(validate(t.machine).empty());
}

TEST_CASE("tomita4 and mod_arith examples") {
  const auto t4 = build_task("tomita4");
  CHECK(run(t4.machine, Sequence{0, 0, 0}) == 0);
  CHECK(run(t4.machine, Sequence{0, 0, 1, 0, 0}) == 1);
  const auto ma = build_task("mod_arith");
  const Sequence expr = parse_tokens(ma, "2+3×4");
  CHECK(expr == Sequence{2, 5, 3, 7, 4});
  CHECK(run(ma.machine, expr) == 0);
  CHECK(parse_tokens(ma, "2+3*4") == expr);
  CHECK(run(ma.machine, parse_tokens(ma, "4-4-3")) == 2);
}

TEST_CASE("cycle navigation labels") {
  const auto t = build_task("cycle_nav");
  CHECK(t.alphabet_labels == std::vector<std::string>{"-1", "0", "+1"});
  CHECK(run(t.machine, parse_tokens(t, "-1,-1,0,+1")) == 4);
}

TEST_CASE("unknown task is a lookup error") {
  try {
    build_task("tomita8");
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kLookup);
  }
}

TEST_CASE("validate reports violations") {
  auto m = build_task("parity").machine;
  CHECK(validate(m).empty());
  auto bad = m;
  bad.transition[1] = bad.num_states;
  auto v = validate(bad);
  REQUIRE(v.size() == 1);
  CHECK(v[0].find("transition out of range") != std::string::npos);
  bad = m;
  bad.output[0] = bad.output_size;
  v = validate(bad);
  REQUIRE(v.size() == 1);
  CHECK(v[0].find("output out of range") != std::string::npos);
}

TEST_CASE("every task agrees with its oracle on random sequences") {
  CHECK(task_names().size() == 21);
  for (const auto& name : task_names()) {
    const auto t = build_task(name);
    CHECK(t.name == name);
    CHECK(validate(t.machine).empty());
    Rng rng(11, Stream::kData, {std::hash<std::string>{}(name)});
    for (int i = 0; i < 1000; ++i) {
      const auto len = static_cast<std::size_t>(rng.range(1, 24));
      Sequence s(len);
      if (t.sampler_kind == SamplerKind::kModArith) {
        s.resize(len | 1);
        for (std::size_t k = 0; k < s.size(); ++k) {
          s[k] = k % 2 == 0 ? static_cast<Token>(rng.below(5)) : static_cast<Token>(5 + rng.below(3));
        }
      } else {
        for (auto& tok : s) tok = static_cast<Token>(rng.below(t.machine.alphabet_size));
      }
      INFO(name, " ", oracle::bits(s));
      REQUIRE(run(t.machine, s) == oracle::label(name, s));
    }
  }
}

TEST_CASE("run is prefix-compositional") {
  Rng rng(3, Stream::kData);
  for (const auto& name : task_names()) {
    const auto m = build_task(name).machine;
    for (int i = 0; i < 50; ++i) {
      Sequence s(static_cast<std::size_t>(rng.range(0, 20)));
      for (auto& tok : s) tok = static_cast<Token>(rng.below(m.alphabet_size));
      const auto cut = static_cast<std::size_t>(rng.range(0, static_cast<std::int64_t>(s.size())));
      const std::span<const Token> all(s);
      CHECK(run_state(m, all) == run_state(m, all.subspan(cut), run_state(m, all.first(cut))));
    }
  }
}

TEST_CASE("machine JSON round trip") {
  for (const auto& name : task_names()) {
    const auto m = build_task(name).machine;
    const auto j = to_json(m);
    CHECK(machine_from_json(j) == m);
    CHECK(machine_from_json(nlohmann::json::parse(j.dump())) == m);
  }
  auto j = to_json(build_task("parity").machine);
  j["transition"][0] = 7;
  CHECK_THROWS_AS(machine_from_json(j), Error);
  CHECK_THROWS_AS(machine_from_json(nlohmann::json::object()), Error);
}

}
