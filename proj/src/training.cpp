#include "ldru/training.hpp"

#include <set>
#include <sstream>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "ldru/eval.hpp"

namespace ldru {

namespace {

const std::set<std::string>& known_keys() {
  static const std::set<std::string> keys{
      "steps",      "base_lr",       "init_lr",  "warmup_frac", "optimizer",  "betas",
      "adam_eps",   "l2",            "clip_norm", "centralize", "batch_size", "dropout_p",
      "assoc_lambda", "seed",        "max_train_len", "eval_every", "val_len", "val_batch",
      "model"};
  return keys;
}

}  // namespace

nlohmann::json to_json(const TrainConfig& c) {
  nlohmann::json model = to_json(c.model);
  model.erase("vocab");
  model.erase("output_size");
  model.erase("dropout_p");
  return {{"steps", c.steps},
          {"base_lr", c.base_lr},
          {"init_lr", c.init_lr},
          {"warmup_frac", c.warmup_frac},
          {"optimizer", c.optimizer == OptimizerKind::kAmsgrad ? "amsgrad" : "adam"},
          {"betas", c.betas},
          {"adam_eps", c.adam_eps},
          {"l2", c.l2},
          {"clip_norm", c.clip_norm},
          {"centralize", c.centralize},
          {"batch_size", c.batch_size},
          {"dropout_p", c.dropout_p},
          {"assoc_lambda", c.assoc_lambda},
          {"seed", c.seed},
          {"max_train_len", c.max_train_len},
          {"eval_every", c.eval_every},
          {"val_len", c.val_len},
          {"val_batch", c.val_batch},
          {"model", model}};
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) fail(ErrorCode::kConfig, "train config must be a JSON object");
  for (const auto& [key, _] : j.items()) {
    if (!known_keys().count(key)) fail(ErrorCode::kConfig, "unknown train config key '" + key + "'");
  }
  TrainConfig c;
  try {
    c.steps = j.value("steps", c.steps);
    c.base_lr = j.value("base_lr", c.base_lr);
    c.init_lr = j.value("init_lr", c.init_lr);
    c.warmup_frac = j.value("warmup_frac", c.warmup_frac);
    const std::string opt = j.value("optimizer", std::string("amsgrad"));
    if (opt == "amsgrad") {
      c.optimizer = OptimizerKind::kAmsgrad;
    } else if (opt == "adam") {
      c.optimizer = OptimizerKind::kAdam;
    } else {
      fail(ErrorCode::kConfig, "unknown optimizer '" + opt + "'");
    }
    c.betas = j.value("betas", c.betas);
    c.adam_eps = j.value("adam_eps", c.adam_eps);
    c.l2 = j.value("l2", c.l2);
    c.clip_norm = j.value("clip_norm", c.clip_norm);
    c.centralize = j.value("centralize", c.centralize);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.dropout_p = j.value("dropout_p", c.dropout_p);
    c.assoc_lambda = j.value("assoc_lambda", c.assoc_lambda);
    c.seed = j.value("seed", c.seed);
    c.max_train_len = j.value("max_train_len", c.max_train_len);
    c.eval_every = j.value("eval_every", c.eval_every);
    c.val_len = j.value("val_len", c.val_len);
    c.val_batch = j.value("val_batch", c.val_batch);
    if (j.contains("model")) c.model = model_config_from_json(j["model"]);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kConfig, std::string("train config: ") + e.what());
  }
  if (c.warmup_frac < 0.0 || c.warmup_frac > 1.0) fail(ErrorCode::kConfig, "warmup_frac must be in [0, 1]");
  if (c.base_lr <= 0.0 || c.init_lr <= 0.0 || c.adam_eps <= 0.0 || c.clip_norm <= 0.0) {
    fail(ErrorCode::kConfig, "rates must be positive");
  }
  if (c.batch_size == 0 || c.max_train_len == 0) fail(ErrorCode::kConfig, "batch_size and max_train_len must be positive");
  if (c.dropout_p < 0.0 || c.dropout_p >= 1.0) fail(ErrorCode::kConfig, "dropout_p must be in [0, 1)");
  if (c.model.d == 0) fail(ErrorCode::kConfig, "model.d must be positive");
  return c;
}

double learning_rate(const TrainConfig& c, std::uint64_t step) {
  const double warmup = c.warmup_frac * static_cast<double>(c.steps);
  if (static_cast<double>(step) >= warmup) return c.base_lr;
  return c.init_lr + (c.base_lr - c.init_lr) * static_cast<double>(step) / warmup;
}

TrainResult train(const TaskSpec& task, const TrainConfig& c, const TrainOptions& opts) {
  ModelConfig mc = c.model;
  mc.vocab = task.machine.alphabet_size;
  mc.output_size = task.machine.output_size;
  mc.dropout_p = c.dropout_p;
  TrainResult res{init_model<float>(mc, c.seed), {}, 0.0};
  LdruModel<float>& model = res.model;
  const auto params = model.parameters();
  OptState<float> opt = init_opt_state(params);

  SamplerConfig sc;
  sc.task = task;
  sc.min_len = 1;
  sc.max_len = c.max_train_len;
  sc.batch_size = c.batch_size;
  sc.seed = c.seed;

  std::ostringstream log;
  log << "# threads=" << opts.threads << '\n';
  log << "step,train_loss,val_loss,val_acc,lr,grad_norm\n";
  const Batch val = c.eval_every > 0 ? eval_set(task, c.val_len, c.val_batch, c.seed) : Batch{};

  std::vector<Tensor<float>> grads(params.size());
  for (std::uint64_t step = 0; step < c.steps; ++step) {
    const Batch batch = sample_batch(sc, step);
    Rng drop(c.seed, Stream::kDropout, {step});
    Tape<float> tape;
    auto enc = encode(model, tape, batch, &drop, c.assoc_lambda > 0.0);
    Var<float> xent = softmax_cross_entropy(enc.logits, batch.labels);
    Var<float> loss = xent;
    if (c.assoc_lambda > 0.0) {
      loss = add(loss, affine(assoc_loss(model, tape, enc.trace), float(c.assoc_lambda), 0.0f));
    }
    const double loss_value = loss.value()(0, 0);
    if (!std::isfinite(loss_value)) {
      if (!opts.crash_checkpoint.empty()) save_checkpoint(model, opts.crash_checkpoint);
      fail(ErrorCode::kDivergence, "loss became non-finite at step " + std::to_string(step));
    }
    tape.backward(loss);
    for (std::size_t i = 0; i < params.size(); ++i) grads[i] = tape.grad(*params[i]);
    StepStats st;
    try {
      st = optimizer_step(opt, params, grads, c);
    } catch (const Error& e) {
      if (e.code() == ErrorCode::kDivergence && !opts.crash_checkpoint.empty()) {
        save_checkpoint(model, opts.crash_checkpoint);
      }
      throw;
    }
    res.final_train_loss = xent.value()(0, 0);

    const std::uint64_t done = step + 1;
    if (c.eval_every > 0 && (done % c.eval_every == 0 || done == c.steps)) {
      const EvalResult v = evaluate(model, val, opts.threads);
      log << fmt::format("{},{:.6f},{:.6f},{:.6f},{:.6g},{:.6f}\n", done, res.final_train_loss, v.loss,
                         v.accuracy, st.lr, st.grad_norm);
      spdlog::info("{} step {} train_loss {:.4f} val_loss {:.4f} val_acc {:.4f}", task.name, done,
                   res.final_train_loss, v.loss, v.accuracy);
    }
  }
  res.metrics_csv = log.str();
  return res;
}

}  // namespace ldru
