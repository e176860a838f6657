#include <doctest.h>

#include <algorithm>
#include <sstream>

#include "ldru/error.hpp"
#include "ldru/eval.hpp"

using namespace ldru;

namespace {

LdruModel<float> parity_model(std::uint64_t seed, std::uint32_t d = 16) {
  ModelConfig c;
  c.d = d;
  return init_model<float>(c, seed);
}

Matrix blobs(std::size_t per, std::uint64_t seed, std::vector<std::uint32_t>* truth = nullptr) {
  Rng rng(seed, Stream::kData);
  Matrix x(2 * per, 3);
  for (std::size_t i = 0; i < 2 * per; ++i) {
    const double centre = i < per ? -5.0 : 5.0;
    for (Index j = 0; j < 3; ++j) x(static_cast<Index>(i), j) = centre + rng.normal();
    if (truth) truth->push_back(i < per ? 0 : 1);
  }
  return x;
}

}  // namespace

TEST_SUITE("eval") {

TEST_CASE("evaluate matches a direct forward pass") {
  const auto m = parity_model(1);
  const Batch b = eval_set(build_task("parity"), 23, 100, 4);
  Tape<float> t(false);
  const Tensor<float> logits = encode(m, t, b).logits.value();
  const EvalResult r = evaluate(m, b);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < b.batch_size; ++i) {
    Index arg;
    logits.row(static_cast<Index>(i)).maxCoeff(&arg);
    CHECK(r.predictions[i] == static_cast<std::uint32_t>(arg));
    correct += r.predictions[i] == b.labels[i];
  }
  CHECK(r.accuracy == doctest::Approx(double(correct) / 100));
  CHECK(r.loss > 0.0);
}

TEST_CASE("chunking and threads do not change results") {
  const auto m = parity_model(2);
  const Batch b = eval_set(build_task("parity"), 31, 203, 5);
  const EvalResult a = evaluate(m, b, 1, 64);
  for (auto [threads, chunk] : {std::pair<unsigned, std::size_t>{1, 7}, {3, 64}, {4, 1}}) {
    const EvalResult c = evaluate(m, b, threads, chunk);
    CHECK(c.predictions == a.predictions);
    CHECK(c.loss == a.loss);
  }
}

TEST_CASE("labels equal to the model's own predictions score 1") {
  const auto m = parity_model(3);
  Batch b = eval_set(build_task("parity"), 40, 64, 1);
  b.labels = evaluate(m, b).predictions;
  CHECK(evaluate(m, b).accuracy == 1.0);
}

TEST_CASE("untrained model is at chance on parity") {
  const auto m = parity_model(4);
  const auto rep = ood_accuracy(m, build_task("parity"), 21, 30, 128, 0);
  CHECK(rep.per_length.size() == 10);
  CHECK(std::abs(rep.mean - 0.5) <= 0.05);
  const auto again = ood_accuracy(m, build_task("parity"), 21, 30, 128, 0);
  CHECK(again.mean == rep.mean);
  std::ostringstream os;
  write_ood_csv(os, rep);
  CHECK(os.str().rfind("length,accuracy\n21,", 0) == 0);
  CHECK(os.str().find("\nmean,") != std::string::npos);
}

TEST_CASE("mod_arith OOD skips even lengths") {
  ModelConfig c;
  c.d = 8;
  c.vocab = 8;
  c.output_size = 5;
  const auto m = init_model<float>(c, 0);
  const auto rep = ood_accuracy(m, build_task("mod_arith"), 4, 9, 16, 0);
  REQUIRE(rep.per_length.size() == 3);
  for (const auto& la : rep.per_length) CHECK(la.length % 2 == 1);
}

TEST_CASE("embedding export enumerates every sequence") {
  const auto task = build_task("d2");
  ModelConfig c;
  c.d = 8;
  const auto m = init_model<float>(c, 0);
  const auto monoid = extract_monoid(task.machine, Generators::kAllSymbols);
  const auto table = export_embeddings(m, task, 4, monoid);
  CHECK(table.sequences.size() == 30);
  CHECK(table.vectors.rows() == 30);
  CHECK(table.vectors.cols() == 8);
  for (std::size_t i = 0; i < 30; ++i) {
    CHECK(table.classes[i] < 15);
    CHECK(table.classes[i] == classify(monoid, table.sequences[i]));
  }
  // "0101" and "01" share a class but are distinct rows; identical sequences
  // would give identical vectors.
  const auto again = export_embeddings(m, task, 4, monoid);
  CHECK(again.vectors == table.vectors);

  std::stringstream ss;
  write_embeddings_csv(ss, table);
  CHECK(ss.str().rfind("tokens,ec,v0,", 0) == 0);
  const auto back = read_embeddings_csv(ss);
  CHECK(back.sequences == table.sequences);
  CHECK(back.classes == table.classes);
  CHECK((back.vectors - table.vectors).cwiseAbs().maxCoeff() < 1e-6f);
}

TEST_CASE("embedding guard") {
  const auto task = build_task("parity");
  const auto m = parity_model(0, 4);
  const auto monoid = extract_monoid(task.machine, Generators::kAllSymbols);
  try {
    export_embeddings(m, task, 21, monoid);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kResource);
  }
  const auto sampled = export_embeddings(m, task, 21, monoid, 3, 1);
  CHECK(sampled.sequences.size() == 21 * 3);
}

TEST_CASE("adjusted Rand index") {
  const std::vector<std::uint32_t> a{0, 0, 1, 1, 2, 2, 2};
  CHECK(ari(a, a) == 1.0);
  std::vector<std::uint32_t> permuted;
  for (auto x : a) permuted.push_back((x + 1) % 3 + 5);
  CHECK(ari(a, permuted) == doctest::Approx(1.0));
  const std::vector<std::uint32_t> b{0, 1, 0, 1, 0, 1, 0};
  const double v = ari(a, b);
  CHECK(v >= -1.0);
  CHECK(v < 0.5);
  // Hand value for a 2x2 contingency table [[1,1],[0,2]]: ARI = 0.
  CHECK(ari({0, 0, 1, 1}, {0, 1, 1, 1}) == doctest::Approx(0.0));
}

TEST_CASE("k-means and silhouette on separated blobs") {
  std::vector<std::uint32_t> truth;
  const Matrix x = blobs(50, 1, &truth);
  const auto labels = kmeans(x, 2, 0);
  CHECK(ari(labels, truth) == 1.0);
  CHECK(silhouette(x, labels) > 0.6);
  CHECK(kmeans(x, 2, 0) == labels);
  std::vector<std::uint32_t> alternating(100);
  for (std::size_t i = 0; i < 100; ++i) alternating[i] = i % 2;
  const double s = silhouette(x, alternating);
  CHECK(s >= -1.0);
  CHECK(s < 0.1);
}

TEST_CASE("k-means recovers from empty clusters") {
  Matrix x(6, 1);
  x << 0, 0, 0, 0, 10, 10;
  const auto labels = kmeans(x, 3, 2);
  std::vector<std::uint32_t> sorted = labels;
  std::sort(sorted.begin(), sorted.end());
  CHECK(std::unique(sorted.begin(), sorted.end()) - sorted.begin() >= 2);
  CHECK(labels[4] == labels[5]);
  CHECK(labels[0] != labels[4]);
}

TEST_CASE("bench shape and application counts") {
  BenchConfig cfg;
  cfg.lengths = {4, 5, 8};
  cfg.batch = 2;
  cfg.reps = 1;
  cfg.warmup = 0;
  cfg.d = 8;
  const auto rows = bench(BenchKind::kLdru, cfg);
  REQUIRE(rows.size() == 3);
  for (const auto& r : rows) {
    CHECK(r.operator_applications == r.length - 1);
    CHECK(r.fwd_ms > 0.0);
    CHECK(r.fwdbwd_ms > 0.0);
  }
  const auto rnn = bench(BenchKind::kRnn, cfg);
  CHECK(rnn.size() == 3);
  std::ostringstream os;
  write_bench_csv(os, rows);
  CHECK(os.str().rfind("length,kind,fwd_ms,fwdbwd_ms\n4,ldru,", 0) == 0);
}

}
