#include "ldru/eval.hpp"

#include <chrono>
#include <cmath>
#include <exception>
#include <istream>
#include <limits>
#include <map>
#include <sstream>
#include <thread>

#include <fmt/format.h>

namespace ldru {

namespace {

Batch slice_batch(const Batch& b, std::size_t r0, std::size_t r1) {
  Batch s;
  s.batch_size = r1 - r0;
  s.max_len = b.max_len;
  s.pad_token = b.pad_token;
  s.tokens.assign(b.tokens.begin() + static_cast<std::ptrdiff_t>(r0 * b.max_len),
                  b.tokens.begin() + static_cast<std::ptrdiff_t>(r1 * b.max_len));
  s.lengths.assign(b.lengths.begin() + static_cast<std::ptrdiff_t>(r0),
                   b.lengths.begin() + static_cast<std::ptrdiff_t>(r1));
  if (!b.labels.empty()) {
    s.labels.assign(b.labels.begin() + static_cast<std::ptrdiff_t>(r0),
                    b.labels.begin() + static_cast<std::ptrdiff_t>(r1));
  }
  return s;
}

/// Runs fn(chunk_index) for every chunk on up to `threads` workers.
template <typename Fn>
void for_each_chunk(std::size_t chunks, unsigned threads, Fn fn) {
  threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(std::max<std::size_t>(chunks, 1))));
  if (threads == 1) {
    for (std::size_t c = 0; c < chunks; ++c) fn(c);
    return;
  }
  std::vector<std::exception_ptr> errors(threads);
  std::vector<std::thread> pool;
  for (unsigned w = 0; w < threads; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (std::size_t c = w; c < chunks; c += threads) fn(c);
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

}  // namespace

EvalResult evaluate(const LdruModel<float>& m, const Batch& b, unsigned threads,
                    std::size_t chunk_rows) {
  EvalResult res;
  if (b.batch_size == 0) return res;
  const std::size_t chunks = (b.batch_size + chunk_rows - 1) / chunk_rows;
  std::vector<double> row_loss(b.batch_size, 0.0);
  res.predictions.assign(b.batch_size, 0);
  for_each_chunk(chunks, threads, [&](std::size_t c) {
    const std::size_t r0 = c * chunk_rows, r1 = std::min(b.batch_size, r0 + chunk_rows);
    const Batch part = slice_batch(b, r0, r1);
    Tape<float> tape(false);
    const Tensor<float>& z = encode(m, tape, part).logits.value();
    for (Index i = 0; i < z.rows(); ++i) {
      Index arg = 0;
      z.row(i).maxCoeff(&arg);
      res.predictions[r0 + static_cast<std::size_t>(i)] = static_cast<std::uint32_t>(arg);
      if (!part.labels.empty()) {
        const double mx = z.row(i).maxCoeff();
        double sum = 0.0;
        for (Index j = 0; j < z.cols(); ++j) sum += std::exp(double(z(i, j)) - mx);
        row_loss[r0 + static_cast<std::size_t>(i)] = std::log(sum) + mx - z(i, part.labels[i]);
      }
    }
  });
  if (!b.labels.empty()) {
    std::size_t correct = 0;
    double loss = 0.0;
    for (std::size_t r = 0; r < b.batch_size; ++r) {
      correct += res.predictions[r] == b.labels[r];
      loss += row_loss[r];
    }
    res.accuracy = static_cast<double>(correct) / static_cast<double>(b.batch_size);
    res.loss = loss / static_cast<double>(b.batch_size);
  }
  return res;
}

Tensor<float> final_embeddings(const LdruModel<float>& m, const Batch& b, std::size_t chunk_rows) {
  Tensor<float> out(static_cast<Index>(b.batch_size), m.config.d);
  for (std::size_t r0 = 0; r0 < b.batch_size; r0 += chunk_rows) {
    const std::size_t r1 = std::min(b.batch_size, r0 + chunk_rows);
    Tape<float> tape(false);
    out.middleRows(static_cast<Index>(r0), static_cast<Index>(r1 - r0)) =
        encode(m, tape, slice_batch(b, r0, r1)).embeddings.value();
  }
  return out;
}

OodReport ood_accuracy(const LdruModel<float>& m, const TaskSpec& task, std::size_t len_from,
                       std::size_t len_to, std::size_t per_len, std::uint64_t seed,
                       unsigned threads) {
  if (len_from < 1 || len_from > len_to) fail(ErrorCode::kConfig, "need 1 <= from <= to");
  OodReport r;
  for (std::size_t len = len_from; len <= len_to; ++len) {
    if (task.sampler_kind == SamplerKind::kModArith && len % 2 == 0) continue;
    const Batch b = eval_set(task, len, per_len, seed);
    r.per_length.push_back({len, evaluate(m, b, threads).accuracy});
  }
  double sum = 0.0;
  for (const auto& x : r.per_length) sum += x.accuracy;
  if (!r.per_length.empty()) r.mean = sum / static_cast<double>(r.per_length.size());
  return r;
}

void write_ood_csv(std::ostream& os, const OodReport& r) {
  os << "length,accuracy\n";
  for (const auto& x : r.per_length) os << fmt::format("{},{:.6f}\n", x.length, x.accuracy);
  os << fmt::format("mean,{:.6f}\n", r.mean);
}

EmbeddingTable export_embeddings(const LdruModel<float>& m, const TaskSpec& task,
                                 std::size_t max_len, const TransitionMonoid& monoid,
                                 std::size_t sample, std::uint64_t seed) {
  const std::uint32_t q = task.machine.alphabet_size;
  EmbeddingTable t;
  if (sample == 0) {
    std::uint64_t total = 0, per = 1;
    for (std::size_t len = 1; len <= max_len; ++len) {
      per *= q;
      total += per;
      if (total > kEmbedGuard) {
        fail(ErrorCode::kResource, "enumeration exceeds " + std::to_string(kEmbedGuard) +
                                       " sequences; pass a sample size");
      }
    }
    for (std::size_t len = 1; len <= max_len; ++len) {
      Sequence s(len, 0);
      for (;;) {
        t.sequences.push_back(s);
        std::size_t i = len;
        while (i > 0 && s[i - 1] == q - 1) s[--i] = 0;
        if (i == 0) break;
        ++s[i - 1];
      }
    }
  } else {
    for (std::size_t len = 1; len <= max_len; ++len) {
      for (std::size_t i = 0; i < sample; ++i) {
        Rng rng(seed, Stream::kEval, {len, i, 0xE3BEDull});
        Sequence s(len);
        for (auto& tok : s) tok = static_cast<Token>(rng.below(q));
        t.sequences.push_back(std::move(s));
      }
    }
  }
  for (const auto& s : t.sequences) t.classes.push_back(classify(monoid, s));
  t.vectors = final_embeddings(m, make_batch(task.machine, t.sequences, {}));
  return t;
}

void write_embeddings_csv(std::ostream& os, const EmbeddingTable& t) {
  os << "tokens,ec";
  for (Index j = 0; j < t.vectors.cols(); ++j) os << ",v" << j;
  os << '\n';
  for (std::size_t r = 0; r < t.sequences.size(); ++r) {
    std::string line;
    for (std::size_t i = 0; i < t.sequences[r].size(); ++i) {
      if (i) line += '-';
      line += std::to_string(t.sequences[r][i]);
    }
    line += ',' + std::to_string(t.classes[r]);
    for (Index j = 0; j < t.vectors.cols(); ++j) {
      line += fmt::format(",{:.9g}", t.vectors(static_cast<Index>(r), j));
    }
    os << line << '\n';
  }
}

EmbeddingTable read_embeddings_csv(std::istream& is) {
  EmbeddingTable t;
  std::string line;
  if (!std::getline(is, line) || line.rfind("tokens,ec", 0) != 0) {
    fail(ErrorCode::kFormat, "embeddings CSV: missing 'tokens,ec' header at line 1");
  }
  std::vector<std::vector<float>> rows;
  std::size_t lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::vector<std::string> cells;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() < 3) fail(ErrorCode::kFormat, "embeddings CSV: short row at line " + std::to_string(lineno));
    try {
      Sequence s;
      std::stringstream ts(cells[0]);
      std::string tok;
      while (std::getline(ts, tok, '-')) s.push_back(static_cast<Token>(std::stoul(tok)));
      t.sequences.push_back(std::move(s));
      t.classes.push_back(static_cast<std::uint32_t>(std::stoul(cells[1])));
      std::vector<float> v;
      for (std::size_t i = 2; i < cells.size(); ++i) v.push_back(std::stof(cells[i]));
      if (!rows.empty() && v.size() != rows.front().size()) throw std::invalid_argument("width");
      rows.push_back(std::move(v));
    } catch (const std::exception&) {
      fail(ErrorCode::kFormat, "embeddings CSV: bad value at line " + std::to_string(lineno));
    }
  }
  const Index d = rows.empty() ? 0 : static_cast<Index>(rows.front().size());
  t.vectors.resize(static_cast<Index>(rows.size()), d);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (Index j = 0; j < d; ++j) t.vectors(static_cast<Index>(r), j) = rows[r][static_cast<std::size_t>(j)];
  }
  return t;
}

std::vector<std::uint32_t> kmeans(const Matrix& x, std::size_t k, std::uint64_t seed,
                                  std::size_t iters) {
  const Index n = x.rows();
  if (k < 2) fail(ErrorCode::kInputDomain, "kmeans needs k >= 2");
  if (static_cast<std::size_t>(n) < k) {
    fail(ErrorCode::kInputDomain, "kmeans needs at least k points");
  }
  Rng rng(seed, Stream::kCluster);
  Matrix centers(static_cast<Index>(k), x.cols());
  centers.row(0) = x.row(static_cast<Index>(rng.below(static_cast<std::uint64_t>(n))));
  Eigen::VectorXd d2 = (x.rowwise() - centers.row(0)).rowwise().squaredNorm();
  for (std::size_t c = 1; c < k; ++c) {
    const double total = d2.sum();
    Index pick = 0;
    if (total > 0.0) {
      double u = rng.uniform() * total;
      for (pick = 0; pick < n - 1; ++pick) {
        u -= d2(pick);
        if (u < 0.0) break;
      }
    } else {
      pick = static_cast<Index>(rng.below(static_cast<std::uint64_t>(n)));
    }
    centers.row(static_cast<Index>(c)) = x.row(pick);
    d2 = d2.cwiseMin((x.rowwise() - centers.row(static_cast<Index>(c))).rowwise().squaredNorm());
  }

  std::vector<std::uint32_t> labels(static_cast<std::size_t>(n), 0);
  Eigen::VectorXd dist(n);
  for (std::size_t it = 0; it < iters; ++it) {
    bool changed = it == 0;
    for (Index i = 0; i < n; ++i) {
      Index best = 0;
      dist(i) = (centers.rowwise() - x.row(i)).rowwise().squaredNorm().minCoeff(&best);
      if (labels[static_cast<std::size_t>(i)] != static_cast<std::uint32_t>(best)) changed = true;
      labels[static_cast<std::size_t>(i)] = static_cast<std::uint32_t>(best);
    }
    if (!changed) break;
    Matrix sums = Matrix::Zero(static_cast<Index>(k), x.cols());
    std::vector<std::size_t> sizes(k, 0);
    for (Index i = 0; i < n; ++i) {
      sums.row(labels[static_cast<std::size_t>(i)]) += x.row(i);
      ++sizes[labels[static_cast<std::size_t>(i)]];
    }
    for (std::size_t c = 0; c < k; ++c) {
      if (sizes[c] > 0) {
        centers.row(static_cast<Index>(c)) = sums.row(static_cast<Index>(c)) / static_cast<double>(sizes[c]);
      } else {
        Index far = 0;
        dist.maxCoeff(&far);
        centers.row(static_cast<Index>(c)) = x.row(far);
        dist(far) = 0.0;
      }
    }
  }
  return labels;
}

double ari(const std::vector<std::uint32_t>& a, const std::vector<std::uint32_t>& b) {
  if (a.size() != b.size()) fail(ErrorCode::kShape, "ari: label vectors differ in length");
  auto choose2 = [](double v) { return v * (v - 1.0) / 2.0; };
  std::map<std::pair<std::uint32_t, std::uint32_t>, double> cells;
  std::map<std::uint32_t, double> rows, cols;
  for (std::size_t i = 0; i < a.size(); ++i) {
    cells[{a[i], b[i]}] += 1.0;
    rows[a[i]] += 1.0;
    cols[b[i]] += 1.0;
  }
  double index = 0.0, sum_a = 0.0, sum_b = 0.0;
  for (const auto& [_, v] : cells) index += choose2(v);
  for (const auto& [_, v] : rows) sum_a += choose2(v);
  for (const auto& [_, v] : cols) sum_b += choose2(v);
  const double expected = sum_a * sum_b / choose2(static_cast<double>(a.size()));
  const double max_index = 0.5 * (sum_a + sum_b);
  if (max_index == expected) return 1.0;
  return (index - expected) / (max_index - expected);
}

double silhouette(const Matrix& x, const std::vector<std::uint32_t>& labels) {
  const Index n = x.rows();
  if (static_cast<std::size_t>(n) != labels.size()) fail(ErrorCode::kShape, "silhouette: label count");
  std::map<std::uint32_t, std::size_t> ids;
  for (auto l : labels) ids.try_emplace(l, ids.size());
  const std::size_t k = ids.size();
  if (k < 2) fail(ErrorCode::kInputDomain, "silhouette needs at least two clusters");
  std::vector<std::size_t> cluster(static_cast<std::size_t>(n)), size(k, 0);
  for (Index i = 0; i < n; ++i) {
    cluster[static_cast<std::size_t>(i)] = ids[labels[static_cast<std::size_t>(i)]];
    ++size[cluster[static_cast<std::size_t>(i)]];
  }
  double total = 0.0;
  std::vector<double> sum(k);
  for (Index i = 0; i < n; ++i) {
    std::fill(sum.begin(), sum.end(), 0.0);
    for (Index j = 0; j < n; ++j) {
      if (j != i) sum[cluster[static_cast<std::size_t>(j)]] += (x.row(i) - x.row(j)).norm();
    }
    const std::size_t own = cluster[static_cast<std::size_t>(i)];
    if (size[own] <= 1) continue;
    const double a = sum[own] / static_cast<double>(size[own] - 1);
    double b = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < k; ++c) {
      if (c != own) b = std::min(b, sum[c] / static_cast<double>(size[c]));
    }
    const double den = std::max(a, b);
    if (den > 0.0) total += (b - a) / den;
  }
  return total / static_cast<double>(n);
}

std::vector<BenchRow> bench(BenchKind kind, const BenchConfig& cfg) {
  using Clock = std::chrono::steady_clock;
  auto ms_since = [](Clock::time_point t0) {
    return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
  };
  ModelConfig mc;
  mc.vocab = cfg.vocab;
  mc.output_size = cfg.output_size;
  mc.d = cfg.d;
  mc.dropout_p = 0.0;
  const auto ldru = init_model<float>(mc, cfg.seed);
  const auto rnn = init_rnn<float>(cfg.vocab, cfg.output_size, cfg.seed);

  struct Case {
    Batch batch;
    BenchRow row;
  };
  std::vector<Case> cases;
  for (std::size_t len : cfg.lengths) {
    std::vector<Sequence> seqs;
    std::vector<std::uint32_t> labels;
    for (std::size_t r = 0; r < cfg.batch; ++r) {
      Rng rng(cfg.seed, Stream::kData, {len, r, 0xBE7Cull});
      Sequence s(len);
      for (auto& t : s) t = static_cast<Token>(rng.below(cfg.vocab));
      seqs.push_back(std::move(s));
      labels.push_back(static_cast<std::uint32_t>(rng.below(cfg.output_size)));
    }
    MooreMachine shape;
    shape.alphabet_size = cfg.vocab;
    Case c{make_batch(shape, seqs, labels), {}};
    c.row.length = len;
    c.row.kind = kind;
    c.row.fwd_min_ms = c.row.fwdbwd_min_ms = std::numeric_limits<double>::infinity();
    cases.push_back(std::move(c));
  }

  auto forward = [&](Tape<float>& t, Case& c) {
    if (kind == BenchKind::kRnn) return rnn_encode(rnn, t, c.batch);
    auto res = encode(ldru, t, c.batch);
    c.row.operator_applications = res.operator_applications / cfg.batch;
    return res.logits;
  };
  auto fwd = [&](Case& c) {
    Tape<float> t(false);
    forward(t, c);
  };
  auto fwdbwd = [&](Case& c) {
    Tape<float> t(true);
    t.backward(softmax_cross_entropy(forward(t, c), c.batch.labels));
  };
  auto timed = [&](auto&& pass, Case& c, double& total, double& best) {
    const auto t0 = Clock::now();
    pass(c);
    const double ms = ms_since(t0);
    total += ms;
    best = std::min(best, ms);
  };

  for (auto& c : cases) {
    for (std::size_t w = 0; w < cfg.warmup; ++w) {
      fwd(c);
      fwdbwd(c);
    }
  }
  // Reps rotate over lengths so slow drift in machine speed hits every
  // length alike instead of whichever one happened to run during it.
  const std::size_t reps = std::max<std::size_t>(cfg.reps, 1);
  for (std::size_t i = 0; i < reps; ++i) {
    for (auto& c : cases) {
      timed(fwd, c, c.row.fwd_ms, c.row.fwd_min_ms);
      timed(fwdbwd, c, c.row.fwdbwd_ms, c.row.fwdbwd_min_ms);
    }
  }
  std::vector<BenchRow> rows;
  for (auto& c : cases) {
    c.row.fwd_ms /= static_cast<double>(reps);
    c.row.fwdbwd_ms /= static_cast<double>(reps);
    rows.push_back(c.row);
  }
  return rows;
}

void write_bench_csv(std::ostream& os, const std::vector<BenchRow>& rows) {
  os << "length,kind,fwd_ms,fwdbwd_ms\n";
  for (const auto& r : rows) {
    os << fmt::format("{},{},{:.4f},{:.4f}\n", r.length, r.kind == BenchKind::kLdru ? "ldru" : "rnn",
                      r.fwd_ms, r.fwdbwd_ms);
  }
}

}  // namespace ldru
