#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "ldru/model.hpp"

namespace ldru {

enum class OptimizerKind { kAmsgrad, kAdam };

struct TrainConfig {
  std::uint64_t steps = 1000;
  double base_lr = 1e-3;
  double init_lr = 1e-8;
  double warmup_frac = 0.2;
  OptimizerKind optimizer = OptimizerKind::kAmsgrad;
  std::array<double, 2> betas{0.9, 0.999};
  double adam_eps = 1e-8;
  double l2 = 5e-4;
  double clip_norm = 1.0;
  bool centralize = true;
  std::size_t batch_size = 256;
  double dropout_p = 0.1;
  double assoc_lambda = 0.0;
  std::uint64_t seed = 0;
  std::size_t max_train_len = 40;
  std::uint64_t eval_every = 1000;
  std::size_t val_len = 500;
  std::size_t val_batch = 1024;
  /// Architecture; vocab and output_size are taken from the task.
  ModelConfig model;
};

nlohmann::json to_json(const TrainConfig& c);
/// Missing keys keep defaults; unknown keys or bad values throw Error(kConfig).
TrainConfig train_config_from_json(const nlohmann::json& j);

/// Linear warmup from init_lr to base_lr over warmup_frac * steps updates,
/// then constant. `step` counts completed updates.
double learning_rate(const TrainConfig& c, std::uint64_t step);

template <typename T>
struct OptState {
  std::vector<Tensor<T>> m, v, v_max;
  std::uint64_t t = 0;
};

template <typename T>
OptState<T> init_opt_state(const std::vector<Parameter<T>*>& params) {
  OptState<T> s;
  for (const auto* p : params) {
    s.m.push_back(Tensor<T>::Zero(p->value.rows(), p->value.cols()));
    s.v.push_back(s.m.back());
    s.v_max.push_back(s.m.back());
  }
  return s;
}

struct StepStats {
  double lr = 0.0;
  double grad_norm = 0.0;  // before clipping
  double clipped_norm = 0.0;
};

/// Weight matrices and embeddings take L2 and centralization; biases and
/// norm parameters (rank 1) do not.
template <typename T>
bool is_matrix_parameter(const Parameter<T>& p) {
  return p.rank >= 2;
}

/// One update: L2 term, centralization, global-norm clip, warmup schedule,
/// then Adam or AMSGrad with bias correction. `grads` is modified in place
/// and holds the clipped gradients afterwards.
template <typename T>
StepStats optimizer_step(OptState<T>& s, const std::vector<Parameter<T>*>& params,
                         std::vector<Tensor<T>>& grads, const TrainConfig& c) {
  if (grads.size() != params.size() || s.m.size() != params.size()) {
    fail(ErrorCode::kShape, "optimizer_step: parameter/gradient count mismatch");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Parameter<T>& p = *params[i];
    Tensor<T>& g = grads[i];
    if (g.rows() != p.value.rows() || g.cols() != p.value.cols()) {
      fail(ErrorCode::kShape, "optimizer_step: gradient shape mismatch for " + p.name);
    }
    if (!g.allFinite()) fail(ErrorCode::kDivergence, "non-finite gradient in parameter " + p.name);
    if (!is_matrix_parameter(p)) continue;
    if (c.l2 != 0.0) g += T(c.l2) * p.value;
    if (c.centralize) {
      for (Index r = 0; r < g.rows(); ++r) {
        g.row(r).array() -= g.row(r).sum() / T(g.cols());
      }
    }
  }

  double sq = 0.0;
  for (const auto& g : grads) sq += g.template cast<double>().squaredNorm();
  StepStats st;
  st.grad_norm = std::sqrt(sq);
  const double scale = st.grad_norm > c.clip_norm ? c.clip_norm / st.grad_norm : 1.0;
  st.clipped_norm = st.grad_norm * scale;
  if (scale != 1.0) {
    for (auto& g : grads) g *= T(scale);
  }

  st.lr = learning_rate(c, s.t);
  ++s.t;
  const T b1 = T(c.betas[0]), b2 = T(c.betas[1]);
  const T bc1 = T(1.0 - std::pow(c.betas[0], double(s.t)));
  const T bc2 = T(1.0 - std::pow(c.betas[1], double(s.t)));
  const T lr = T(st.lr), eps = T(c.adam_eps);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Tensor<T>& g = grads[i];
    s.m[i] = b1 * s.m[i] + (T(1) - b1) * g;
    s.v[i] = b2 * s.v[i] + (T(1) - b2) * g.cwiseProduct(g);
    Tensor<T> v_hat = s.v[i] / bc2;
    if (c.optimizer == OptimizerKind::kAmsgrad) {
      s.v_max[i] = s.v_max[i].cwiseMax(v_hat);
      v_hat = s.v_max[i];
    }
    params[i]->value.array() -=
        lr * (s.m[i].array() / bc1) / (v_hat.array().sqrt() + eps);
  }
  return st;
}

/// Mean over reduction steps (with at least one triple) of the mean over
/// triples of (1 - cos(((a b) c), (a (b c))))^2. Triples are consecutive
/// disjoint runs of each row's real slots.
template <typename T>
Var<T> assoc_loss(const LdruModel<T>& m, Tape<T>& t, const std::vector<ReductionStep<T>>& trace) {
  std::vector<Var<T>> as, bs, cs;
  std::vector<T> weights;
  std::size_t steps_with_triples = 0;
  std::vector<std::size_t> per_step;
  for (const auto& step : trace) {
    RowIndex a, b, c;
    for (auto [begin, count] : step.row_slots) {
      for (std::uint32_t k = 0; k + 3 <= count; k += 3) {
        a.push_back(begin + k);
        b.push_back(begin + k + 1);
        c.push_back(begin + k + 2);
      }
    }
    per_step.push_back(a.size());
    if (a.empty()) continue;
    ++steps_with_triples;
    as.push_back(gather_rows(step.input, std::move(a)));
    bs.push_back(gather_rows(step.input, std::move(b)));
    cs.push_back(gather_rows(step.input, std::move(c)));
  }
  if (steps_with_triples == 0) return t.constant(Tensor<T>::Zero(1, 1));
  for (std::size_t n : per_step) {
    for (std::size_t i = 0; i < n; ++i) weights.push_back(T(1) / T(steps_with_triples * n));
  }
  auto stack = [](const std::vector<Var<T>>& vs) {
    Var<T> out = vs[0];
    for (std::size_t i = 1; i < vs.size(); ++i) out = concat_rows(out, vs[i]);
    return out;
  };
  Var<T> a = stack(as), b = stack(bs), c = stack(cs);
  Var<T> x = operator_forward(m, t, operator_forward(m, t, a, b), c);
  Var<T> y = operator_forward(m, t, a, operator_forward(m, t, b, c));
  Var<T> gap = affine(cosine_similarity(x, y), T(-1), T(1));
  Tensor<T> w = Eigen::Map<Tensor<T>>(weights.data(), static_cast<Index>(weights.size()), 1);
  return reduce_sum(mul(mul(gap, gap), t.constant(std::move(w))));
}

struct TrainResult {
  LdruModel<float> model;
  std::string metrics_csv;
  double final_train_loss = 0.0;
};

struct TrainOptions {
  unsigned threads = 1;
  /// Written if training diverges; empty disables it.
  std::string crash_checkpoint;
};

/// Full training run; deterministic in (task, config). Throws
/// Error(kDivergence) when the loss becomes non-finite, after writing the
/// crash checkpoint.
TrainResult train(const TaskSpec& task, const TrainConfig& c, const TrainOptions& opts = {});

}  // namespace ldru
