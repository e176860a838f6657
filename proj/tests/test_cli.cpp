#include <doctest.h>

#include <sys/wait.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace fs = std::filesystem;

namespace {

struct Run {
  int exit_code = -1;
  std::string out;
};

// Runs the CLI with stderr folded into the captured output.
Run cli(const std::string& args) {
  const std::string cmd = std::string(LDRU_CLI) + " " + args + " 2>&1";
  Run r;
  FILE* p = popen(cmd.c_str(), "r");
  REQUIRE(p != nullptr);
  char buf[4096];
  std::size_t n;
  while ((n = fread(buf, 1, sizeof buf, p)) > 0) r.out.append(buf, n);
  const int status = pclose(p);
  r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("ldru_cli_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

void write_file(const fs::path& p, const std::string& text) {
  std::ofstream(p) << text;
}

const char* kTinyConfig =
    R"({"steps": 4, "batch_size": 8, "max_train_len": 10, "eval_every": 2, "val_len": 12, "val_batch": 16, "model": {"d": 8}})";

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("help output matches the golden files") {
  const fs::path golden(LDRU_GOLDEN_DIR);
  CHECK(cli("--help").out == slurp(golden / "help.txt"));
  for (const std::string sub : {"tasks", "sample", "train", "eval", "monoid", "census", "embed", "cluster", "bench"}) {
    INFO(sub);
    const Run r = cli(sub + " --help");
    CHECK(r.exit_code == 0);
    CHECK(r.out == slurp(golden / ("help_" + sub + ".txt")));
  }
}

TEST_CASE("tasks lists the registry") {
  const Run r = cli("tasks");
  CHECK(r.exit_code == 0);
  std::size_t lines = 0;
  for (char c : r.out) lines += c == '\n';
  CHECK(lines == 21);
  CHECK(r.out.find("parity alphabet=2 outputs=2") != std::string::npos);
}

TEST_CASE("monoid sizes") {
  const Run d2 = cli("monoid --task d2");
  CHECK(d2.exit_code == 0);
  CHECK(d2.out.find("15 elements") != std::string::npos);
  const Run d6 = cli("monoid --task d6 --even-only");
  CHECK(d6.exit_code == 0);
  CHECK(d6.out.find("73 elements") != std::string::npos);
  const fs::path dir = scratch("monoid");
  CHECK(cli("monoid --task parity --out " + (dir / "m.json").string()).exit_code == 0);
  CHECK(slurp(dir / "m.json").find("\"elements\"") != std::string::npos);
}

TEST_CASE("sample with count 0 writes an empty dump") {
  const fs::path dir = scratch("sample0");
  const Run r = cli("sample --task parity --count 0 --dump " + (dir / "rows.jsonl").string());
  CHECK(r.exit_code == 0);
  CHECK(fs::exists(dir / "rows.jsonl"));
  CHECK(fs::file_size(dir / "rows.jsonl") == 0);
}

TEST_CASE("sample is reproducible") {
  const Run a = cli("sample --task tomita5 --count 50 --seed 3");
  const Run b = cli("sample --task tomita5 --count 50 --seed 3");
  const Run c = cli("sample --task tomita5 --count 50 --seed 4");
  CHECK(a.exit_code == 0);
  CHECK(a.out == b.out);
  CHECK(a.out != c.out);
}

TEST_CASE("exit codes and error lines") {
  const Run usage = cli("monoid --bogus");
  CHECK(usage.exit_code == 2);
  CHECK(usage.out.rfind("code=USAGE detail=", 0) == 0);
  const Run lookup = cli("monoid --task tomita9");
  CHECK(lookup.exit_code == 3);
  CHECK(lookup.out.find("code=LOOKUP detail=") != std::string::npos);
  const Run missing = cli("eval --checkpoint /nonexistent/model.ckpt --task parity --from 2 --to 3");
  CHECK(missing.exit_code == 3);
  CHECK(missing.out.find("code=") != std::string::npos);

  const fs::path dir = scratch("errors");
  write_file(dir / "bad.json", R"({"stepz": 3})");
  const Run bad = cli("train --task parity --config " + (dir / "bad.json").string() + " --out " + (dir / "o").string());
  CHECK(bad.exit_code == 3);
  CHECK(bad.out.find("code=CONFIG") != std::string::npos);

  write_file(dir / "corrupt.ckpt", "not a checkpoint");
  const Run corrupt = cli("eval --checkpoint " + (dir / "corrupt.ckpt").string() + " --task parity --from 2 --to 3");
  CHECK(corrupt.exit_code == 3);
  CHECK(corrupt.out.find("code=FORMAT") != std::string::npos);
}

TEST_CASE("divergence exits 4 and leaves a crash checkpoint") {
  const fs::path dir = scratch("diverge");
  write_file(dir / "div.json",
             R"({"steps": 5, "base_lr": 1e30, "warmup_frac": 0, "batch_size": 8, "eval_every": 0, "model": {"d": 8}})");
  const Run r = cli("train --task parity --config " + (dir / "div.json").string() + " --out " + (dir / "run").string());
  CHECK(r.exit_code == 4);
  CHECK(r.out.find("code=DIVERGENCE") != std::string::npos);
  CHECK(fs::exists(dir / "run" / "crash.ckpt"));
}

TEST_CASE("train, eval, embed and cluster round trip") {
  const fs::path dir = scratch("pipeline");
  write_file(dir / "cfg.json", kTinyConfig);
  const std::string train = "train --task d2 --config " + (dir / "cfg.json").string() + " --seed 2 --out ";
  REQUIRE(cli(train + (dir / "a").string()).exit_code == 0);
  REQUIRE(cli(train + (dir / "b").string()).exit_code == 0);
  for (const char* f : {"config.json", "model.ckpt", "metrics.csv"}) {
    INFO(f);
    CHECK(slurp(dir / "a" / f) == slurp(dir / "b" / f));
  }
  const std::string eval = "eval --checkpoint " + (dir / "a" / "model.ckpt").string() +
                           " --task d2 --from 4 --to 8 --per-len 16 --seed 1";
  const Run e1 = cli(eval), e2 = cli(eval);
  CHECK(e1.exit_code == 0);
  CHECK(e1.out == e2.out);
  CHECK(e1.out.find("length,accuracy\n4,") != std::string::npos);

  const std::string csv = (dir / "emb.csv").string();
  REQUIRE(cli("embed --checkpoint " + (dir / "a" / "model.ckpt").string() + " --task d2 --max-len 6 --out " + csv)
              .exit_code == 0);
  const Run cl = cli("cluster --embeddings " + csv + " --k 2,4 --seed 0");
  CHECK(cl.exit_code == 0);
  CHECK(cl.out.find("k,ari,silhouette\n2,") != std::string::npos);
}

TEST_CASE("census is reproducible") {
  const fs::path dir = scratch("census");
  const std::string cmd = "census --task d4 --buckets 10:20:2 --target 2000 --seed 1 --out ";
  REQUIRE(cli(cmd + (dir / "a").string()).exit_code == 0);
  REQUIRE(cli(cmd + (dir / "b").string()).exit_code == 0);
  std::size_t files = 0;
  for (const auto& entry : fs::directory_iterator(dir / "a")) {
    ++files;
    CHECK(slurp(entry.path()) == slurp(dir / "b" / entry.path().filename()));
  }
  CHECK(files >= 2);
}

TEST_CASE("bench writes the documented header") {
  const Run r = cli("bench --kind rnn --lengths 4,8 --batch 2 --reps 1 --warmup 0 --d 8");
  CHECK(r.exit_code == 0);
  CHECK(r.out.find("length,kind,fwd_ms,fwdbwd_ms\n4,rnn,") != std::string::npos);
}

}
