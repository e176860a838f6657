#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "ldru/autodiff.hpp"
#include "ldru/sampler.hpp"

namespace ldru {

enum class OperatorKind { kMlp, kElemSum, kLinear, kGatedSum };
enum class Activation { kRelu, kSilu };

std::string to_string(OperatorKind k);
std::string to_string(Activation a);
OperatorKind parse_operator_kind(const std::string& s);
Activation parse_activation(const std::string& s);

struct ModelConfig {
  std::uint32_t vocab = 2;
  std::uint32_t output_size = 2;
  std::uint32_t d = 64;
  double dropout_p = 0.1;
  OperatorKind operator_kind = OperatorKind::kMlp;
  Activation activation = Activation::kRelu;
  bool operator==(const ModelConfig&) const = default;
};

nlohmann::json to_json(const ModelConfig& c);
/// Missing keys keep their defaults; unknown enum names throw Error(kConfig).
ModelConfig model_config_from_json(const nlohmann::json& j);

inline constexpr std::uint32_t kRnnHidden = 256;

template <typename T>
struct LdruModel {
  ModelConfig config;
  Parameter<T> embedding;
  // Gate MLP 2d -> 2d -> 4d -> 2d and the gated projections.
  Parameter<T> mlp_w1, mlp_b1, mlp_w2, mlp_b2, mlp_w3, mlp_b3;
  Parameter<T> v_i, b_i, v_j, b_j, w_out, b_out;
  // Weights of the linear and gated-sum variants.
  Parameter<T> op_w, op_b;
  Parameter<T> ffn_w1, ffn_b1, ffn_w2, ffn_b2;
  Parameter<T> norm_scale, norm_shift;
  Parameter<T> cls_w, cls_b;

  /// Parameters in use for the configured operator kind, in a fixed order.
  std::vector<Parameter<T>*> parameters() {
    std::vector<Parameter<T>*> out{&embedding};
    switch (config.operator_kind) {
      case OperatorKind::kMlp:
        for (auto* p : {&mlp_w1, &mlp_b1, &mlp_w2, &mlp_b2, &mlp_w3, &mlp_b3, &v_i, &b_i, &v_j,
                        &b_j, &w_out, &b_out}) {
          out.push_back(p);
        }
        break;
      case OperatorKind::kLinear:
      case OperatorKind::kGatedSum:
        out.push_back(&op_w);
        out.push_back(&op_b);
        break;
      case OperatorKind::kElemSum:
        break;
    }
    for (auto* p : {&ffn_w1, &ffn_b1, &ffn_w2, &ffn_b2, &norm_scale, &norm_shift, &cls_w, &cls_b}) {
      out.push_back(p);
    }
    return out;
  }
  std::vector<const Parameter<T>*> parameters() const {
    auto ps = const_cast<LdruModel*>(this)->parameters();
    return {ps.begin(), ps.end()};
  }
};

template <typename T>
struct RnnModel {
  std::uint32_t vocab = 2;
  std::uint32_t output_size = 2;
  std::uint32_t hidden = kRnnHidden;
  Parameter<T> w_xh, w_hh, b_h, cls_w, cls_b;

  std::vector<Parameter<T>*> parameters() { return {&w_xh, &w_hh, &b_h, &cls_w, &cls_b}; }
};

template <typename T>
std::size_t parameter_count(const std::vector<const Parameter<T>*>& ps) {
  std::size_t n = 0;
  for (const auto* p : ps) n += static_cast<std::size_t>(p->value.size());
  return n;
}

namespace detail {

template <typename T>
Parameter<T> zeros(std::string name, Index r, Index c, int rank) {
  return {std::move(name), Tensor<T>::Zero(r, c), rank};
}

template <typename T>
Parameter<T> identity(std::string name, Index d) {
  return {std::move(name), Tensor<T>::Identity(d, d), 2};
}

template <typename T>
Parameter<T> normal(std::string name, Index r, Index c, double sd, Rng rng) {
  Parameter<T> p{std::move(name), Tensor<T>(r, c), 2};
  for (Index i = 0; i < p.value.size(); ++i) p.value.data()[i] = static_cast<T>(rng.normal(0.0, sd));
  return p;
}

/// Glorot normal for an in x out weight: sd = sqrt(2 / (in + out)).
template <typename T>
Parameter<T> glorot(std::string name, Index in, Index out, Rng rng) {
  return normal<T>(std::move(name), in, out, std::sqrt(2.0 / static_cast<double>(in + out)), rng);
}

}  // namespace detail

inline constexpr double kEmbeddingInitSd = 0.02;

/// Deterministic in (config, seed). Every parameter draws from its own
/// stream, so adding a parameter never shifts the others.
template <typename T>
LdruModel<T> init_model(const ModelConfig& cfg, std::uint64_t seed) {
  if (cfg.d == 0 || cfg.vocab == 0 || cfg.output_size == 0) {
    fail(ErrorCode::kConfig, "model dimensions must be positive");
  }
  const Index d = cfg.d;
  auto stream = [&](std::uint64_t k) { return Rng(seed, Stream::kInit, {k}); };
  LdruModel<T> m;
  m.config = cfg;
  m.embedding = detail::normal<T>("embedding", cfg.vocab, d, kEmbeddingInitSd, stream(0));
  m.mlp_w1 = detail::glorot<T>("op.mlp.w1", 2 * d, 2 * d, stream(1));
  m.mlp_b1 = detail::zeros<T>("op.mlp.b1", 1, 2 * d, 1);
  m.mlp_w2 = detail::glorot<T>("op.mlp.w2", 2 * d, 4 * d, stream(2));
  m.mlp_b2 = detail::zeros<T>("op.mlp.b2", 1, 4 * d, 1);
  m.mlp_w3 = detail::glorot<T>("op.mlp.w3", 4 * d, 2 * d, stream(3));
  m.mlp_b3 = detail::zeros<T>("op.mlp.b3", 1, 2 * d, 1);
  m.v_i = detail::identity<T>("op.v_i", d);
  m.b_i = detail::zeros<T>("op.b_i", 1, d, 1);
  m.v_j = detail::identity<T>("op.v_j", d);
  m.b_j = detail::zeros<T>("op.b_j", 1, d, 1);
  m.w_out = detail::identity<T>("op.w_out", d);
  m.b_out = detail::zeros<T>("op.b_out", 1, d, 1);
  m.op_w = detail::glorot<T>("op.w", 2 * d, d, stream(4));
  m.op_b = detail::zeros<T>("op.b", 1, d, 1);
  m.ffn_w1 = detail::glorot<T>("ffn.w1", d, 4 * d, stream(5));
  m.ffn_b1 = detail::zeros<T>("ffn.b1", 1, 4 * d, 1);
  m.ffn_w2 = detail::glorot<T>("ffn.w2", 4 * d, d, stream(6));
  m.ffn_b2 = detail::zeros<T>("ffn.b2", 1, d, 1);
  m.norm_scale = {"norm.scale", Tensor<T>::Ones(1, d), 1};
  m.norm_shift = detail::zeros<T>("norm.shift", 1, d, 1);
  m.cls_w = detail::glorot<T>("classifier.w", d, cfg.output_size, stream(7));
  m.cls_b = detail::zeros<T>("classifier.b", 1, cfg.output_size, 1);
  return m;
}

template <typename T>
RnnModel<T> init_rnn(std::uint32_t vocab, std::uint32_t output_size, std::uint64_t seed,
                     std::uint32_t hidden = kRnnHidden) {
  auto stream = [&](std::uint64_t k) { return Rng(seed, Stream::kInit, {100 + k}); };
  RnnModel<T> m;
  m.vocab = vocab;
  m.output_size = output_size;
  m.hidden = hidden;
  m.w_xh = detail::glorot<T>("rnn.w_xh", vocab, hidden, stream(0));
  m.w_hh = detail::glorot<T>("rnn.w_hh", hidden, hidden, stream(1));
  m.b_h = detail::zeros<T>("rnn.b_h", 1, hidden, 1);
  m.cls_w = detail::glorot<T>("classifier.w", hidden, output_size, stream(2));
  m.cls_b = detail::zeros<T>("classifier.b", 1, output_size, 1);
  return m;
}

template <typename T>
Var<T> activate(Activation a, Var<T> x) {
  return a == Activation::kRelu ? relu(x) : silu(x);
}

template <typename T>
Var<T> linear(Tape<T>& t, Var<T> x, const Parameter<T>& w, const Parameter<T>& b) {
  return add_row(matmul(x, t.param(w)), t.param(b));
}

/// The operator on row-aligned pairs (both inputs real).
template <typename T>
Var<T> operator_forward(const LdruModel<T>& m, Tape<T>& t, Var<T> hl, Var<T> hr) {
  const Index d = m.config.d;
  switch (m.config.operator_kind) {
    case OperatorKind::kElemSum:
      return add(hl, hr);
    case OperatorKind::kLinear:
      return linear(t, concat_cols(hl, hr), m.op_w, m.op_b);
    case OperatorKind::kGatedSum: {
      Var<T> g = sigmoid(linear(t, concat_cols(hl, hr), m.op_w, m.op_b));
      return add(mul(g, hl), mul(affine(g, T(-1), T(1)), hr));
    }
    case OperatorKind::kMlp:
      break;
  }
  const Activation act = m.config.activation;
  Var<T> z = activate(act, linear(t, concat_cols(hl, hr), m.mlp_w1, m.mlp_b1));
  z = activate(act, linear(t, z, m.mlp_w2, m.mlp_b2));
  Var<T> g = linear(t, z, m.mlp_w3, m.mlp_b3);
  auto [g_i, g_j] = split_cols(g, d);
  Var<T> f_i = linear(t, mul(g_i, hl), m.v_i, m.b_i);
  Var<T> f_j = linear(t, mul(g_j, hr), m.v_j, m.b_j);
  return linear(t, add(f_i, f_j), m.w_out, m.b_out);
}

/// Single application with padding flags. Exactly one real input passes
/// through unchanged.
template <typename T>
Tensor<T> apply_operator(const LdruModel<T>& m, const Tensor<T>& h_i, const Tensor<T>& h_j,
                         bool real_i, bool real_j) {
  if (!real_i && !real_j) fail(ErrorCode::kContract, "operator applied to two padding slots");
  if (!real_j) return h_i;
  if (!real_i) return h_j;
  Tape<T> t(false);
  return operator_forward(m, t, t.constant(h_i), t.constant(h_j)).value();
}

/// Per-step record of the reduction, kept for the associativity loss.
template <typename T>
struct ReductionStep {
  Var<T> input;
  /// [first slot, slot count) of each active row within `input`.
  std::vector<std::pair<std::uint32_t, std::uint32_t>> row_slots;
  RowIndex left, right;  // operator pairs, slots of `input`
  RowIndex pass;         // slots paired with padding
  std::size_t outputs = 0;
};

template <typename T>
struct EncodeResult {
  Var<T> logits;
  Var<T> embeddings;  // final pre-classifier vector per row
  std::vector<std::uint32_t> steps;  // reduction steps per row
  std::uint64_t operator_applications = 0;
  std::vector<ReductionStep<T>> trace;
};

namespace detail {

inline std::vector<std::uint32_t> real_tokens(const Batch& b, std::uint32_t vocab) {
  std::vector<std::uint32_t> ids;
  for (std::size_t r = 0; r < b.batch_size; ++r) {
    if (b.lengths[r] == 0) fail(ErrorCode::kInputDomain, "empty sequence in row " + std::to_string(r));
    for (Token t : b.row(r)) {
      if (t >= vocab) fail(ErrorCode::kInputDomain, "token " + std::to_string(t) + " out of vocabulary");
      ids.push_back(t);
    }
  }
  return ids;
}

}  // namespace detail

/// Balanced reduction of every row. `dropout_rng` selects train mode; null
/// means eval mode.
template <typename T>
EncodeResult<T> encode(const LdruModel<T>& m, Tape<T>& t, const Batch& b, Rng* dropout_rng = nullptr,
                       bool keep_trace = false) {
  EncodeResult<T> res;
  if (b.batch_size == 0) fail(ErrorCode::kInputDomain, "empty batch");
  const auto ids = detail::real_tokens(b, m.config.vocab);
  Var<T> h = embedding_lookup(t.param(m.embedding), ids);

  res.steps.assign(b.batch_size, 0);
  // Slot layout of `h`: row r occupies [start[r], start[r] + count[r]).
  std::vector<std::uint32_t> start(b.batch_size), count(b.batch_size);
  std::uint32_t offset = 0;
  std::vector<std::size_t> active;
  struct Final {
    Var<T> source;
    RowIndex slots;
    std::vector<std::size_t> rows;
  };
  std::vector<Final> finals;
  Final first{h, {}, {}};
  for (std::size_t r = 0; r < b.batch_size; ++r) {
    start[r] = offset;
    count[r] = b.lengths[r];
    offset += count[r];
    if (count[r] == 1) {
      first.slots.push_back(start[r]);
      first.rows.push_back(r);
    } else {
      active.push_back(r);
    }
  }
  if (!first.rows.empty()) finals.push_back(std::move(first));

  while (!active.empty()) {
    ReductionStep<T> step;
    step.input = h;
    RowIndex order;
    std::vector<std::uint32_t> next_count(active.size());
    for (std::size_t a = 0; a < active.size(); ++a) {
      const std::size_t r = active[a];
      step.row_slots.emplace_back(start[r], count[r]);
      const std::uint32_t pairs = count[r] / 2;
      for (std::uint32_t k = 0; k < pairs; ++k) {
        step.left.push_back(start[r] + 2 * k);
        step.right.push_back(start[r] + 2 * k + 1);
      }
      next_count[a] = (count[r] + 1) / 2;
    }
    // New layout: each row's pair outputs followed by its pass-through slot.
    std::uint32_t pair_cursor = 0;
    const auto num_pairs = static_cast<std::uint32_t>(step.left.size());
    for (std::size_t a = 0; a < active.size(); ++a) {
      const std::size_t r = active[a];
      const std::uint32_t pairs = count[r] / 2;
      const std::uint32_t row_start = static_cast<std::uint32_t>(order.size());
      for (std::uint32_t k = 0; k < pairs; ++k) order.push_back(pair_cursor++);
      if (count[r] % 2 == 1) {
        order.push_back(num_pairs + static_cast<std::uint32_t>(step.pass.size()));
        step.pass.push_back(start[r] + count[r] - 1);
      }
      start[r] = row_start;
      count[r] = next_count[a];
      ++res.steps[r];
    }
    res.operator_applications += num_pairs;
    Var<T> out = operator_forward(m, t, gather_rows(h, step.left), gather_rows(h, step.right));
    if (!step.pass.empty()) {
      out = gather_rows(concat_rows(out, gather_rows(h, step.pass)), order);
    }
    const Activation act = m.config.activation;
    Var<T> ffn = linear(t, activate(act, linear(t, out, m.ffn_w1, m.ffn_b1)), m.ffn_w2, m.ffn_b2);
    h = layer_norm(add(out, ffn), t.param(m.norm_scale), t.param(m.norm_shift));
    h = dropout(h, m.config.dropout_p, dropout_rng);
    step.outputs = order.size();
    if (keep_trace) res.trace.push_back(std::move(step));

    Final done{h, {}, {}};
    std::vector<std::size_t> still;
    for (std::size_t r : active) {
      if (count[r] == 1) {
        done.slots.push_back(start[r]);
        done.rows.push_back(r);
      } else {
        still.push_back(r);
      }
    }
    if (!done.rows.empty()) finals.push_back(std::move(done));
    active.swap(still);
  }

  // Assemble final vectors in batch order.
  Var<T> stacked = gather_rows(finals[0].source, finals[0].slots);
  RowIndex position(b.batch_size);
  std::uint32_t cursor = 0;
  for (std::size_t f = 0; f < finals.size(); ++f) {
    if (f > 0) stacked = concat_rows(stacked, gather_rows(finals[f].source, finals[f].slots));
    for (std::size_t r : finals[f].rows) position[r] = cursor++;
  }
  res.embeddings = gather_rows(stacked, std::move(position));
  res.logits = linear(t, res.embeddings, m.cls_w, m.cls_b);
  return res;
}

/// Elman recurrence over one-hot inputs; logits from each row's state after
/// its last real token.
template <typename T>
Var<T> rnn_encode(const RnnModel<T>& m, Tape<T>& t, const Batch& b) {
  if (b.batch_size == 0) fail(ErrorCode::kInputDomain, "empty batch");
  for (std::size_t r = 0; r < b.batch_size; ++r) {
    if (b.lengths[r] == 0) fail(ErrorCode::kInputDomain, "empty sequence in row " + std::to_string(r));
  }
  Var<T> h = t.constant(Tensor<T>::Zero(static_cast<Index>(b.batch_size), m.hidden));
  Var<T> w_xh = t.param(m.w_xh), w_hh = t.param(m.w_hh), b_h = t.param(m.b_h);
  for (std::size_t step = 0; step < b.max_len; ++step) {
    RowIndex active, order(b.batch_size);
    std::vector<std::uint32_t> ids;
    for (std::size_t r = 0; r < b.batch_size; ++r) {
      if (step < b.lengths[r]) {
        const Token tok = b.tokens[r * b.max_len + step];
        if (tok >= m.vocab) fail(ErrorCode::kInputDomain, "token out of vocabulary");
        order[r] = static_cast<std::uint32_t>(active.size());
        active.push_back(static_cast<std::uint32_t>(r));
        ids.push_back(tok);
      }
    }
    if (active.empty()) break;
    const bool all = active.size() == b.batch_size;
    Var<T> prev = all ? h : gather_rows(h, active);
    Var<T> next = tanh(add_row(add(embedding_lookup(w_xh, ids), matmul(prev, w_hh)), b_h));
    if (all) {
      h = next;
    } else {
      const auto n = static_cast<std::uint32_t>(active.size());
      for (std::size_t r = 0; r < b.batch_size; ++r) {
        if (step >= b.lengths[r]) order[r] = n + static_cast<std::uint32_t>(r);
      }
      h = gather_rows(concat_rows(next, h), std::move(order));
    }
  }
  return add_row(matmul(h, t.param(m.cls_w)), t.param(m.cls_b));
}

/// Checkpoint layout: an 8-byte little-endian header length N, then N bytes
/// of JSON {"__metadata__": config, name: {"shape": [r, c], "byte_offset": k}}
/// ending in '\n', then the little-endian float32 payload with offsets
/// relative to its start.
void save_checkpoint(const LdruModel<float>& m, const std::string& path);
LdruModel<float> load_checkpoint(const std::string& path);
std::string checkpoint_bytes(const LdruModel<float>& m);
LdruModel<float> checkpoint_from_bytes(const std::string& bytes);

/// Same model in another scalar type.
template <typename To, typename From>
LdruModel<To> cast_model(const LdruModel<From>& src) {
  LdruModel<To> dst = init_model<To>(src.config, 0);
  auto sp = src.parameters();
  auto dp = dst.parameters();
  for (std::size_t i = 0; i < sp.size(); ++i) dp[i]->value = sp[i]->value.template cast<To>();
  return dst;
}

}  // namespace ldru
