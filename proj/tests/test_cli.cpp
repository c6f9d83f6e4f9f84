#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sys/wait.h>

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "hcope/dataset_io.hpp"

namespace fs = std::filesystem;

namespace {

struct Run {
  int code = -1;
  std::string out;
};

Run run(const std::string& args) {
  const std::string cmd = std::string(HCOPE_CLI) + " " + args + " 2>&1";
  Run r;
  FILE* pipe = popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  std::array<char, 4096> buf{};
  while (std::size_t got = std::fread(buf.data(), 1, buf.size(), pipe)) r.out.append(buf.data(), got);
  const int status = pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() / ("hcope_cli_" + std::to_string(::getpid()));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string operator/(const std::string& name) const { return (path / name).string(); }
};

const TempDir& tmp() {
  static TempDir dir;
  return dir;
}

}  // namespace

TEST_CASE("generate writes a dataset file that reads back") {
  const std::string file = tmp() / "gen.tsv";
  const Run r = run("generate --env micro-b -n 25 --seed 4 --out " + file);
  CHECK(r.code == 0);
  const hcope::Dataset ds = hcope::load_dataset(file);
  CHECK(ds.env_id == "micro-b");
  CHECK(ds.size() == 25);

  // Same seed, same bytes.
  const std::string again = tmp() / "gen2.tsv";
  CHECK(run("generate --env micro-b -n 25 --seed 4 --out " + again).code == 0);
  std::ifstream a(file), b(again);
  std::stringstream sa, sb;
  sa << a.rdbuf();
  sb << b.rdbuf();
  CHECK(sa.str() == sb.str());
}

TEST_CASE("evaluate prints a bound report") {
  const std::string file = tmp() / "eval.tsv";
  REQUIRE(run("generate --env micro-b -n 30 --seed 2 --out " + file).code == 0);
  const Run r = run("evaluate --dataset " + file + " --estimator pdwis --bootstrap-b 400");
  CHECK(r.code == 0);
  CHECK(r.out.find("estimator: pdwis") != std::string::npos);
  CHECK(r.out.find("rank: 20") != std::string::npos);
  CHECK(r.out.find("lower_bound: ") != std::string::npos);

  const Run bca = run("evaluate --dataset " + file + " --estimator mb-tabular --bootstrap-b 400 --method bca");
  CHECK(bca.code == 0);
  CHECK(bca.out.find("method: bca") != std::string::npos);
}

TEST_CASE("ground truth is exact on micro MDPs") {
  const Run r = run("ground-truth --env micro-b");
  CHECK(r.code == 0);
  CHECK(r.out.find("1.83641") != std::string::npos);
}

TEST_CASE("sweep writes CSV") {
  const std::string cfg = tmp() / "sweep.cfg";
  std::ofstream(cfg) << "env = micro-a\nestimators = pdis, wdr-tabular\nn_values = 5\ntrials = 3\nbootstrap_b = 100\n";
  const std::string csv = tmp() / "sweep.csv";
  const Run r = run("sweep --config " + cfg + " --out " + csv);
  CHECK(r.code == 0);
  std::ifstream in(csv);
  std::string header;
  std::getline(in, header);
  CHECK(header.rfind("estimator,n,trials,", 0) == 0);
}

TEST_CASE("bias bound on a learned model") {
  const std::string file = tmp() / "bias.tsv";
  REQUIRE(run("generate --env micro-b -n 500 --seed 9 --out " + file).code == 0);
  const Run r = run("bias-bound --dataset " + file);
  CHECK(r.code == 0);
  CHECK(r.out.find("bound") != std::string::npos);
}

TEST_CASE("usage and configuration errors exit with 2") {
  CHECK(run("").code == 2);
  CHECK(run("evaluate").code == 2);
  CHECK(run("frobnicate").code == 2);
  const std::string file = tmp() / "cfg.tsv";
  REQUIRE(run("generate --env micro-b -n 5 --out " + file).code == 0);
  CHECK(run("evaluate --dataset " + file + " --estimator nonsense").code == 2);
  CHECK(run("evaluate --dataset " + file + " --bootstrap-b 5").code == 2);
  CHECK(run("evaluate --dataset " + tmp() / "missing.tsv").code == 2);
  CHECK(run("generate --env no-such-env -n 3").code == 2);

  const std::string junk = tmp() / "junk.tsv";
  std::ofstream(junk) << "garbage\n";
  CHECK(run("evaluate --dataset " + junk).code == 2);
}

TEST_CASE("support violations exit with 3") {
  const std::string file = tmp() / "support.tsv";
  REQUIRE(run("generate --env micro-b -n 20 --seed 3 --out " + file).code == 0);
  const Run r = run("evaluate --dataset " + file + " --estimator pdis --pi-b table:1,0,1,0,1,0");
  CHECK(r.code == 3);
  CHECK(r.out.find("support violation") != std::string::npos);
}

TEST_CASE("numeric failures exit with 4") {
  const std::string file = tmp() / "numeric.tsv";
  REQUIRE(run("generate --env micro-b -n 1 --seed 3 --out " + file).code == 0);
  const Run r = run("bias-bound --dataset " + file + " --variant lemma1");
  CHECK(r.code == 4);
  CHECK(r.out.find("infinite KL") != std::string::npos);
}
