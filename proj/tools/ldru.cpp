#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <malloc.h>
#include <sstream>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <spdlog/sinks/stdout_sinks.h>
#include <spdlog/spdlog.h>

#include "ldru/automata.hpp"
#include "ldru/error.hpp"
#include "ldru/eval.hpp"
#include "ldru/model.hpp"
#include "ldru/monoid.hpp"
#include "ldru/sampler.hpp"
#include "ldru/training.hpp"

namespace fs = std::filesystem;
using namespace ldru;

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitData = 3;
constexpr int kExitDivergence = 4;

void setup_logging() {
  auto logger = spdlog::stderr_logger_mt("ldru");
  spdlog::set_default_logger(logger);
  spdlog::set_pattern("[%l] %v");
  const char* env = std::getenv("LDRU_LOG");
  const std::string level = env ? env : "info";
  if (level == "error") {
    spdlog::set_level(spdlog::level::err);
  } else if (level == "debug") {
    spdlog::set_level(spdlog::level::debug);
  } else {
    spdlog::set_level(spdlog::level::info);
  }
}

std::string read_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) fail(ErrorCode::kIo, "cannot read " + path);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) fail(ErrorCode::kIo, "cannot write " + path.string());
  os << text;
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) fail(ErrorCode::kIo, "cannot create directory " + dir.string());
}

std::vector<Bucket> parse_buckets(const std::string& text) {
  std::vector<Bucket> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    Bucket b;
    char c1 = 0, c2 = 0;
    std::stringstream is(item);
    if (!(is >> b.min_len >> c1 >> b.max_len >> c2 >> b.step) || c1 != ':' || c2 != ':' ||
        b.min_len > b.max_len || b.step == 0) {
      fail(ErrorCode::kConfig, "bad bucket '" + item + "', expected min:max:step");
    }
    out.push_back(b);
  }
  if (out.empty()) fail(ErrorCode::kConfig, "no buckets given");
  return out;
}

/// "a..b" expands to every power of two in [a, b] followed by its successor;
/// otherwise a comma-separated list.
std::vector<std::size_t> parse_lengths(const std::string& text) {
  std::vector<std::size_t> out;
  const auto dots = text.find("..");
  try {
    if (dots != std::string::npos) {
      const std::size_t lo = std::stoul(text.substr(0, dots));
      const std::size_t hi = std::stoul(text.substr(dots + 2));
      for (std::size_t p = 1; p <= hi; p *= 2) {
        if (p < lo) continue;
        out.push_back(p);
        out.push_back(p + 1);
      }
    } else {
      std::stringstream ss(text);
      std::string item;
      while (std::getline(ss, item, ',')) out.push_back(std::stoul(item));
    }
  } catch (const std::exception&) {
    fail(ErrorCode::kConfig, "bad length list '" + text + "'");
  }
  for (auto l : out) {
    if (l == 0) fail(ErrorCode::kConfig, "lengths must be positive");
  }
  return out;
}

std::vector<std::size_t> parse_k_list(const std::string& text) {
  std::vector<std::size_t> out;
  try {
    for (auto l : parse_lengths(text)) out.push_back(l);
  } catch (const Error&) {
    fail(ErrorCode::kConfig, "bad k list '" + text + "'");
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
#ifdef __GLIBC__
  // Tape buffers are freed and reallocated every step; keeping them on the
  // heap instead of fresh mmaps avoids page-fault churn.
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
#endif
  setup_logging();
  CLI::App app{"Log-depth reduction sequence models on regular-language tasks", "ldru"};
  app.require_subcommand(1);
  app.option_defaults()->always_capture_default();
  unsigned threads = 1;
  app.add_option("--threads", threads, "Cap on worker threads (recorded in outputs)")
      ->check(CLI::Range(1u, 256u));

  auto* tasks_cmd = app.add_subcommand("tasks", "List the task registry");

  std::string task;
  std::uint64_t seed = 0;

  auto* sample_cmd = app.add_subcommand("sample", "Emit sampled rows as line-delimited JSON");
  std::size_t min_len = 1, max_len = 40, count = 16;
  std::string dump;
  bool no_augment = false, unbalanced = false;
  sample_cmd->add_option("--task", task, "Task name")->required();
  sample_cmd->add_option("--min-len", min_len, "Minimum length");
  sample_cmd->add_option("--max-len", max_len, "Maximum length");
  sample_cmd->add_option("--count", count, "Number of rows");
  sample_cmd->add_option("--seed", seed, "Random seed");
  sample_cmd->add_option("--dump", dump, "Write rows to this file instead of stdout");
  sample_cmd->add_flag("--no-augment", no_augment, "Disable training-time sampler noise");
  sample_cmd->add_flag("--unbalanced", unbalanced, "Do not balance labels");

  auto* train_cmd = app.add_subcommand("train", "Train an MLP-LDRU model");
  std::string config_path, out_dir;
  std::optional<std::uint64_t> train_seed;
  train_cmd->add_option("--task", task, "Task name")->required();
  train_cmd->add_option("--config", config_path, "Training config JSON")->required();
  train_cmd->add_option("--seed", train_seed, "Override the config seed");
  train_cmd->add_option("--out", out_dir, "Output directory")->required();

  auto* eval_cmd = app.add_subcommand("eval", "Per-length accuracy of a checkpoint");
  std::string checkpoint;
  std::size_t len_from = 41, len_to = 500, per_len = kEvalPerLength;
  std::string eval_out;
  eval_cmd->add_option("--checkpoint", checkpoint, "Model checkpoint")->required();
  eval_cmd->add_option("--task", task, "Task name")->required();
  eval_cmd->add_option("--from", len_from, "First length");
  eval_cmd->add_option("--to", len_to, "Last length");
  eval_cmd->add_option("--per-len", per_len, "Sequences per length");
  eval_cmd->add_option("--seed", seed, "Evaluation seed");
  eval_cmd->add_option("--out", eval_out, "Also write the CSV to this file");

  auto* monoid_cmd = app.add_subcommand("monoid", "Extract the transition monoid");
  bool even_only = false;
  std::string monoid_out;
  monoid_cmd->add_option("--task", task, "Task name")->required();
  monoid_cmd->add_flag("--even-only", even_only, "Only classes reachable by even-length sequences");
  monoid_cmd->add_option("--out", monoid_out, "Write the monoid as JSON");

  auto* census_cmd = app.add_subcommand("census", "Reduction-composition census");
  std::string buckets = "10:40:2,480:500:2";
  std::uint64_t target = 1000000;
  census_cmd->add_option("--task", task, "Dyck task (dN)")->required();
  census_cmd->add_option("--buckets", buckets, "Comma-separated min:max:step buckets");
  census_cmd->add_option("--target", target, "Compositions per bucket");
  census_cmd->add_option("--seed", seed, "Random seed");
  census_cmd->add_option("--out", out_dir, "Output directory")->required();

  auto* embed_cmd = app.add_subcommand("embed", "Export final embeddings with class labels");
  std::size_t embed_max_len = 12, embed_sample = 0;
  std::string embed_out;
  embed_cmd->add_option("--checkpoint", checkpoint, "Model checkpoint")->required();
  embed_cmd->add_option("--task", task, "Task name")->required();
  embed_cmd->add_option("--max-len", embed_max_len, "Longest sequence length");
  embed_cmd->add_option("--sample", embed_sample, "Random sequences per length instead of all");
  embed_cmd->add_option("--seed", seed, "Seed for --sample");
  embed_cmd->add_option("--out", embed_out, "Output CSV")->required();

  auto* cluster_cmd = app.add_subcommand("cluster", "k-means, ARI and silhouette on embeddings");
  std::string embeddings, k_list = "2";
  std::size_t iters = 100;
  cluster_cmd->add_option("--embeddings", embeddings, "CSV from embed")->required();
  cluster_cmd->add_option("--k", k_list, "Comma-separated cluster counts");
  cluster_cmd->add_option("--seed", seed, "k-means++ seed");
  cluster_cmd->add_option("--iters", iters, "Maximum Lloyd iterations");

  auto* bench_cmd = app.add_subcommand("bench", "Wall-clock forward and backward timings");
  std::string kind = "ldru", lengths = "4..2048", bench_out;
  BenchConfig bc;
  bench_cmd->add_option("--kind", kind, "ldru or rnn")->check(CLI::IsMember({"ldru", "rnn"}));
  bench_cmd->add_option("--lengths", lengths, "a..b (powers of two and successors) or a list");
  bench_cmd->add_option("--batch", bc.batch, "Batch size");
  bench_cmd->add_option("--reps", bc.reps, "Timed passes per length");
  bench_cmd->add_option("--warmup", bc.warmup, "Untimed passes per length");
  bench_cmd->add_option("--d", bc.d, "LDRU width");
  bench_cmd->add_option("--seed", bc.seed, "Random seed");
  bench_cmd->add_option("--out", bench_out, "Also write the CSV to this file");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "code=USAGE detail=" << e.what() << '\n';
    return kExitUsage;
  }

  try {
    if (tasks_cmd->parsed()) {
      for (const auto& name : task_names()) {
        const TaskSpec t = build_task(name);
        std::cout << fmt::format("{} alphabet={} outputs={} states={}\n", name, t.machine.alphabet_size,
                                 t.machine.output_size, t.machine.num_states);
      }
    } else if (sample_cmd->parsed()) {
      SamplerConfig sc;
      sc.task = build_task(task);
      sc.min_len = min_len;
      sc.max_len = max_len;
      sc.batch_size = count;
      sc.seed = seed;
      sc.augment = !no_augment;
      sc.balanced = !unbalanced;
      const Batch b = sample_batch(sc, 0);
      std::ostringstream os;
      write_jsonl(os, b);
      if (dump.empty()) {
        std::cout << os.str();
      } else {
        write_file(dump, os.str());
      }
    } else if (train_cmd->parsed()) {
      nlohmann::json j;
      try {
        j = nlohmann::json::parse(read_file(config_path));
      } catch (const nlohmann::json::parse_error& e) {
        fail(ErrorCode::kFormat, config_path + ": " + e.what());
      }
      TrainConfig c = train_config_from_json(j);
      if (train_seed) c.seed = *train_seed;
      const TaskSpec t = build_task(task);
      ensure_dir(out_dir);
      TrainOptions opts;
      opts.threads = threads;
      opts.crash_checkpoint = (fs::path(out_dir) / "crash.ckpt").string();
      write_file(fs::path(out_dir) / "config.json", to_json(c).dump(2) + "\n");
      const TrainResult r = train(t, c, opts);
      save_checkpoint(r.model, (fs::path(out_dir) / "model.ckpt").string());
      write_file(fs::path(out_dir) / "metrics.csv", r.metrics_csv);
      std::cout << fmt::format("trained {} for {} steps, final train loss {:.6f}\n", task, c.steps,
                               r.final_train_loss);
    } else if (eval_cmd->parsed()) {
      const auto m = load_checkpoint(checkpoint);
      const TaskSpec t = build_task(task);
      if (m.config.vocab != t.machine.alphabet_size || m.config.output_size != t.machine.output_size) {
        fail(ErrorCode::kConfig, "checkpoint does not match task " + task);
      }
      const OodReport r = ood_accuracy(m, t, len_from, len_to, per_len, seed, threads);
      std::ostringstream os;
      write_ood_csv(os, r);
      std::cout << os.str();
      if (!eval_out.empty()) write_file(eval_out, os.str());
    } else if (monoid_cmd->parsed()) {
      const TaskSpec t = build_task(task);
      const TransitionMonoid m =
          extract_monoid(t.machine, even_only ? Generators::kEvenLengthPairs : Generators::kAllSymbols);
      std::cout << m.size() << " elements\n";
      if (t.sampler_kind == SamplerKind::kDyck && !even_only) {
        const auto expected = monoid_size_formula(t.dyck_depth);
        std::cout << fmt::format("size formula for n={}: {} ({})\n", t.dyck_depth, expected,
                                 expected == m.size() ? "match" : "MISMATCH");
      }
      if (!monoid_out.empty()) write_file(monoid_out, to_json(m).dump() + "\n");
    } else if (census_cmd->parsed()) {
      const TaskSpec t = build_task(task);
      if (t.sampler_kind != SamplerKind::kDyck) fail(ErrorCode::kConfig, "census needs a Dyck task");
      const TransitionMonoid m = extract_monoid(t.machine, Generators::kEvenLengthPairs);
      const std::uint32_t n = t.dyck_depth;
      PositiveSampler sampler = [n](std::size_t len, Rng& rng) {
        return sample_dyck_positive(n, len, false, rng);
      };
      ensure_dir(out_dir);
      const auto results = composition_census(m, sampler, parse_buckets(buckets), target, seed, threads);
      for (const auto& r : results) {
        const std::string stem =
            fmt::format("census_{}_{}_{}", r.bucket.min_len, r.bucket.max_len, r.bucket.step);
        nlohmann::json j = to_json(r);
        j["threads"] = threads;
        write_file(fs::path(out_dir) / (stem + ".json"), j.dump() + "\n");
        write_file(fs::path(out_dir) / (stem + ".csv"), census_csv(m, r));
        std::cout << fmt::format("bucket {}:{}:{} sequences={} total={} nonzero={}\n", r.bucket.min_len,
                                 r.bucket.max_len, r.bucket.step, r.sequences, r.total, r.nonzero_cells());
      }
    } else if (embed_cmd->parsed()) {
      const auto model = load_checkpoint(checkpoint);
      const TaskSpec t = build_task(task);
      const TransitionMonoid m = extract_monoid(t.machine, Generators::kAllSymbols);
      const EmbeddingTable table = export_embeddings(model, t, embed_max_len, m, embed_sample, seed);
      std::ostringstream os;
      write_embeddings_csv(os, table);
      write_file(embed_out, os.str());
      std::cout << fmt::format("{} rows, {} classes in the monoid\n", table.sequences.size(), m.size());
    } else if (cluster_cmd->parsed()) {
      std::ifstream is(embeddings);
      if (!is) fail(ErrorCode::kIo, "cannot read " + embeddings);
      const EmbeddingTable table = read_embeddings_csv(is);
      const Matrix x = table.vectors.cast<double>();
      std::cout << "k,ari,silhouette\n";
      for (std::size_t k : parse_k_list(k_list)) {
        const auto labels = kmeans(x, k, seed, iters);
        std::cout << fmt::format("{},{:.6f},{:.6f}\n", k, ari(labels, table.classes), silhouette(x, labels));
      }
    } else if (bench_cmd->parsed()) {
      bc.lengths = parse_lengths(lengths);
      const auto rows = bench(kind == "rnn" ? BenchKind::kRnn : BenchKind::kLdru, bc);
      std::ostringstream os;
      os << "# threads=" << threads << '\n';
      write_bench_csv(os, rows);
      std::cout << os.str();
      if (!bench_out.empty()) write_file(bench_out, os.str());
    }
  } catch (const Error& e) {
    std::cerr << "code=" << error_code_name(e.code()) << " detail=" << e.what() << '\n';
    return e.code() == ErrorCode::kDivergence ? kExitDivergence : kExitData;
  }
  return 0;
}
