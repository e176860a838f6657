#include "ldru/automata.hpp"

#include <algorithm>
#include <map>

#include "ldru/error.hpp"

namespace ldru {

State run_state(const MooreMachine& m, std::span<const Token> seq, State from) {
  State s = from;
  for (Token t : seq) {
    if (t >= m.alphabet_size) {
      fail(ErrorCode::kInputDomain, "token " + std::to_string(t) +
                                        " out of range for alphabet of size " +
                                        std::to_string(m.alphabet_size));
    }
    s = m.step(s, t);
  }
  return s;
}

std::uint32_t run(const MooreMachine& m, std::span<const Token> seq) {
  return m.output[run_state(m, seq)];
}

std::vector<std::string> validate(const MooreMachine& m) {
  std::vector<std::string> v;
  if (m.num_states == 0) v.emplace_back("num_states must be positive");
  if (m.alphabet_size == 0) v.emplace_back("alphabet_size must be positive");
  if (m.output_size == 0) v.emplace_back("output_size must be positive");
  if (m.transition.size() != static_cast<std::size_t>(m.num_states) * m.alphabet_size) {
    v.emplace_back("transition table has " + std::to_string(m.transition.size()) +
                   " entries, expected num_states*alphabet_size");
  }
  if (m.output.size() != m.num_states) {
    v.emplace_back("output table has " + std::to_string(m.output.size()) +
                   " entries, expected num_states");
  }
  if (m.initial >= m.num_states) v.emplace_back("initial state out of range");
  for (std::size_t i = 0; i < m.transition.size(); ++i) {
    if (m.transition[i] >= m.num_states) {
      v.emplace_back("transition out of range at entry " + std::to_string(i));
    }
  }
  for (std::size_t i = 0; i < m.output.size(); ++i) {
    if (m.output[i] >= m.output_size) {
      v.emplace_back("output out of range at state " + std::to_string(i));
    }
  }
  return v;
}

MooreMachine build_prefix_language(std::uint32_t p, std::uint32_t q) {
  if (p < 1 || q < 2) fail(ErrorCode::kConfig, "prefix language needs p >= 1 and q >= 2");
  std::uint64_t qp = 1;
  for (std::uint32_t i = 0; i < p; ++i) {
    qp *= q;
    if (qp > (1u << 20)) fail(ErrorCode::kConfig, "prefix language q^p exceeds 2^20");
  }
  // Internal states form a complete q-ary tree of depth p-1; leaves absorb.
  const std::uint64_t internal = (qp - 1) / (q - 1);
  const std::uint64_t total = (qp * q - 1) / (q - 1);
  MooreMachine m;
  m.num_states = static_cast<std::uint32_t>(total);
  m.alphabet_size = q;
  m.output_size = static_cast<std::uint32_t>(qp + 1);
  m.initial = 0;
  m.transition.resize(total * q);
  m.output.resize(total);
  for (std::uint64_t i = 0; i < total; ++i) {
    for (std::uint32_t j = 0; j < q; ++j) {
      m.transition[i * q + j] = static_cast<State>(i < internal ? i * q + 1 + j : i);
    }
    m.output[i] = static_cast<std::uint32_t>(i < internal ? 0 : i - (internal - 1));
  }
  return m;
}

MooreMachine build_dyck(std::uint32_t n) {
  if (n < 1) fail(ErrorCode::kConfig, "Dyck depth must be >= 1");
  const std::uint32_t sink = n + 1;
  MooreMachine m;
  m.num_states = n + 2;
  m.alphabet_size = 2;
  m.output_size = 2;
  m.transition.resize(m.num_states * 2);
  m.output.assign(m.num_states, 0);
  m.output[0] = 1;
  for (std::uint32_t s = 0; s <= n; ++s) {
    m.transition[s * 2 + 0] = s < n ? s + 1 : sink;
    m.transition[s * 2 + 1] = s > 0 ? s - 1 : sink;
  }
  m.transition[sink * 2 + 0] = sink;
  m.transition[sink * 2 + 1] = sink;
  return m;
}

namespace {

// rows: per state, next state for symbols 0 and 1.
MooreMachine binary_table(std::initializer_list<std::pair<State, State>> rows,
                          std::initializer_list<std::uint32_t> outputs) {
  MooreMachine m;
  m.num_states = static_cast<std::uint32_t>(rows.size());
  m.alphabet_size = 2;
  m.output_size = 2;
  for (auto [a, b] : rows) {
    m.transition.push_back(a);
    m.transition.push_back(b);
  }
  m.output.assign(outputs.begin(), outputs.end());
  return m;
}

MooreMachine even_pairs() {
  // State 0 is only the empty sequence: zero pairs, labelled like the other
  // even-pair states (output 0).
  return binary_table({{1, 3}, {1, 2}, {1, 2}, {4, 3}, {4, 3}}, {0, 0, 1, 0, 1});
}

MooreMachine parity() { return binary_table({{0, 1}, {1, 0}}, {1, 0}); }

MooreMachine cycle_nav() {
  // Tokens: 0 = -1, 1 = 0, 2 = +1.
  MooreMachine m;
  m.num_states = 5;
  m.alphabet_size = 3;
  m.output_size = 5;
  for (State s = 0; s < 5; ++s) {
    m.transition.push_back((s + 4) % 5);
    m.transition.push_back(s);
    m.transition.push_back((s + 1) % 5);
    m.output.push_back(s);
  }
  return m;
}

constexpr Token kModPlus = 5, kModMinus = 6, kModTimes = 7;

MooreMachine mod_arith() {
  // State = accumulator * 3 + pending operator (0 '+', 1 '-', 2 '*'). An
  // operand applies the pending operator and resets it to '+'; an operator
  // replaces the pending one. Initial state is (0, '+').
  MooreMachine m;
  m.num_states = 15;
  m.alphabet_size = 8;
  m.output_size = 5;
  m.transition.resize(15 * 8);
  m.output.resize(15);
  for (std::uint32_t acc = 0; acc < 5; ++acc) {
    for (std::uint32_t op = 0; op < 3; ++op) {
      const std::uint32_t s = acc * 3 + op;
      m.output[s] = acc;
      for (std::uint32_t v = 0; v < 5; ++v) {
        std::uint32_t r = 0;
        switch (op) {
          case 0: r = (acc + v) % 5; break;
          case 1: r = (acc + 5 - v) % 5; break;
          default: r = (acc * v) % 5; break;
        }
        m.transition[s * 8 + v] = r * 3;
      }
      m.transition[s * 8 + kModPlus] = acc * 3 + 0;
      m.transition[s * 8 + kModMinus] = acc * 3 + 1;
      m.transition[s * 8 + kModTimes] = acc * 3 + 2;
    }
  }
  return m;
}

MooreMachine tomita3() {
  return binary_table({{0, 1}, {3, 0}, {3, 1}, {2, 4}, {4, 4}}, {1, 1, 1, 0, 0});
}
MooreMachine tomita4() {
  return binary_table({{1, 0}, {2, 0}, {3, 0}, {3, 3}}, {1, 1, 1, 0});
}
MooreMachine tomita5() {
  return binary_table({{3, 1}, {2, 0}, {1, 3}, {0, 2}}, {1, 0, 0, 0});
}
MooreMachine tomita6() {
  return binary_table({{2, 1}, {0, 2}, {1, 0}}, {1, 0, 0});
}
MooreMachine tomita7() {
  return binary_table({{0, 1}, {2, 1}, {2, 3}, {4, 3}, {4, 4}}, {1, 1, 1, 1, 0});
}

std::vector<std::string> digit_labels(std::uint32_t q) {
  std::vector<std::string> out;
  for (std::uint32_t i = 0; i < q; ++i) out.push_back(std::to_string(i));
  return out;
}

}  // namespace

const std::vector<std::string>& task_names() {
  static const std::vector<std::string> names = {
      "even_pairs", "mod_arith", "parity",  "cycle_nav", "d2",      "d3",      "d4",
      "d6",         "d8",        "d12",     "tomita3",   "tomita4", "tomita5", "tomita6",
      "tomita7",    "p1_2",      "p2_2",    "p4_2",      "p1_4",    "p2_4",    "p4_4"};
  return names;
}

TaskSpec build_task(std::string_view name) {
  TaskSpec t;
  t.name = std::string(name);
  t.alphabet_labels = digit_labels(2);
  if (name == "even_pairs") {
    t.machine = even_pairs();
  } else if (name == "parity") {
    t.machine = parity();
  } else if (name == "cycle_nav") {
    t.machine = cycle_nav();
    t.alphabet_labels = {"-1", "0", "+1"};
  } else if (name == "mod_arith") {
    t.machine = mod_arith();
    t.sampler_kind = SamplerKind::kModArith;
    t.alphabet_labels = {"0", "1", "2", "3", "4", "+", "-", "×"};
  } else if (name.size() >= 2 && name[0] == 'd' &&
             std::all_of(name.begin() + 1, name.end(), [](char c) { return c >= '0' && c <= '9'; })) {
    const auto n = static_cast<std::uint32_t>(std::stoul(std::string(name.substr(1))));
    static constexpr std::uint32_t kAllowed[] = {2, 3, 4, 6, 8, 12};
    if (std::find(std::begin(kAllowed), std::end(kAllowed), n) == std::end(kAllowed)) {
      fail(ErrorCode::kLookup, "unknown task '" + std::string(name) + "'");
    }
    t.machine = build_dyck(n);
    t.sampler_kind = SamplerKind::kDyck;
    t.dyck_depth = n;
  } else if (name == "tomita3") {
    t.machine = tomita3();
    t.sampler_kind = SamplerKind::kTomita3;
  } else if (name == "tomita4") {
    t.machine = tomita4();
    t.sampler_kind = SamplerKind::kTomita4;
  } else if (name == "tomita5") {
    t.machine = tomita5();
    t.sampler_kind = SamplerKind::kTomita5;
  } else if (name == "tomita6") {
    t.machine = tomita6();
    t.sampler_kind = SamplerKind::kTomita6;
  } else if (name == "tomita7") {
    t.machine = tomita7();
    t.sampler_kind = SamplerKind::kTomita7;
  } else if (name.size() == 4 && name[0] == 'p' && name[2] == '_') {
    static const std::map<std::string, std::pair<std::uint32_t, std::uint32_t>> kPrefix = {
        {"p1_2", {1, 2}}, {"p2_2", {2, 2}}, {"p4_2", {4, 2}},
        {"p1_4", {1, 4}}, {"p2_4", {2, 4}}, {"p4_4", {4, 4}}};
    auto it = kPrefix.find(std::string(name));
    if (it == kPrefix.end()) fail(ErrorCode::kLookup, "unknown task '" + std::string(name) + "'");
    t.machine = build_prefix_language(it->second.first, it->second.second);
    t.alphabet_labels = digit_labels(it->second.second);
  } else {
    fail(ErrorCode::kLookup, "unknown task '" + std::string(name) + "'");
  }
  return t;
}

Sequence parse_tokens(const TaskSpec& task, std::string_view text) {
  std::vector<std::pair<std::string, Token>> labels;
  for (Token i = 0; i < task.alphabet_labels.size(); ++i) {
    labels.emplace_back(task.alphabet_labels[i], i);
    if (task.alphabet_labels[i] == "×") {
      labels.emplace_back("*", i);
      labels.emplace_back("x", i);
    }
  }
  std::sort(labels.begin(), labels.end(),
            [](const auto& a, const auto& b) { return a.first.size() > b.first.size(); });
  Sequence out;
  std::size_t pos = 0;
  while (pos < text.size()) {
    if (text[pos] == ' ' || text[pos] == ',') {
      ++pos;
      continue;
    }
    bool matched = false;
    for (const auto& [label, tok] : labels) {
      if (text.substr(pos, label.size()) == label) {
        out.push_back(tok);
        pos += label.size();
        matched = true;
        break;
      }
    }
    if (!matched) {
      fail(ErrorCode::kInputDomain,
           "cannot parse '" + std::string(text.substr(pos)) + "' as " + task.name + " tokens");
    }
  }
  return out;
}

nlohmann::json to_json(const MooreMachine& m) {
  return nlohmann::json{{"num_states", m.num_states},   {"alphabet_size", m.alphabet_size},
                        {"output_size", m.output_size}, {"initial", m.initial},
                        {"transition", m.transition},   {"output", m.output}};
}

MooreMachine machine_from_json(const nlohmann::json& j) {
  MooreMachine m;
  try {
    m.num_states = j.at("num_states").get<std::uint32_t>();
    m.alphabet_size = j.at("alphabet_size").get<std::uint32_t>();
    m.output_size = j.at("output_size").get<std::uint32_t>();
    m.initial = j.at("initial").get<State>();
    m.transition = j.at("transition").get<std::vector<State>>();
    m.output = j.at("output").get<std::vector<std::uint32_t>>();
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kFormat, std::string("machine JSON: ") + e.what());
  }
  auto violations = validate(m);
  if (!violations.empty()) fail(ErrorCode::kFormat, "machine JSON: " + violations.front());
  return m;
}

}  // namespace ldru
