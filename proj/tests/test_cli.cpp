#include "doctest.h"

#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>

#include "cli.hpp"

using namespace tsvan;

namespace {

struct Run {
  int code;
  std::string out, err;
};

Run cli(std::vector<std::string> args) {
  args.insert(args.begin(), "tsvan");
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

std::string temp_dir() {
  const auto p = std::filesystem::temp_directory_path() / "tsvan_cli_test";
  std::filesystem::create_directories(p);
  return p.string();
}

std::string slurp(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

}  // namespace

TEST_CASE("cli usage errors exit 1 with usage text") {
  auto r = cli({"bench", "--no-such-flag"});
  CHECK(r.code == 1);
  CHECK(r.err.find("Usage") != std::string::npos);
  CHECK(cli({}).code == 1);
  CHECK(cli({"frobnicate"}).code == 1);
  CHECK(cli({"--help"}).code == 0);
}

TEST_CASE("cli gen-data writes container and manifest deterministically") {
  const std::string dir = temp_dir();
  const std::string a = dir + "/a.smv", b = dir + "/b.smv";
  for (const auto& p : {a, b}) {
    const auto r = cli({"gen-data", "--classes", "2", "--clips-per-class", "5", "--frames", "4", "--size", "16",
                        "--seed", "7", "--out", p});
    CHECK(r.code == 0);
  }
  CHECK(slurp(a) == slurp(b));
  CHECK(slurp(a + ".json") == slurp(b + ".json"));
  CHECK(cli({"gen-data", "--size", "15", "--out", a}).code == 1);
  CHECK(cli({"gen-data", "--families", "spiral", "--out", a}).code == 1);
  CHECK(cli({"gen-data", "--out", dir + "/missing/dir/x.smv"}).code == 2);
}

TEST_CASE("cli config files fill options not given on the command line") {
  const std::string dir = temp_dir();
  const std::string cfg = dir + "/gen.json", out = dir + "/cfg.smv";
  std::ofstream(cfg) << R"({"classes": 2, "clips-per-class": 5, "frames": 3, "size": 16, "seed": 4})";
  auto r = cli({"gen-data", "--config", cfg, "--frames", "4", "--out", out});
  REQUIRE(r.code == 0);
  CHECK(r.out.find("10 clips") != std::string::npos);
  CHECK(slurp(out).size() == 4 + 7 * 4 + 10 * (2 + 8 + 4 * 16 * 16 * 4));

  std::ofstream(cfg) << R"({"nonsense": 1})";
  CHECK(cli({"gen-data", "--config", cfg, "--out", out}).code == 1);
  std::ofstream(cfg) << "{not json";
  CHECK(cli({"gen-data", "--config", cfg, "--out", out}).code == 1);
  CHECK(cli({"gen-data", "--config", dir + "/absent.json", "--out", out}).code == 2);
}

TEST_CASE("cli gradcheck reports the relative error") {
  const auto r = cli({"gradcheck", "--op", "mask_blend", "--seed", "1"});
  CHECK(r.code == 0);
  CHECK(r.out.find("max_rel_err=") != std::string::npos);
  CHECK(cli({"gradcheck", "--op", "nope"}).code == 1);
}

TEST_CASE("cli bench writes one row per mode and kernel size") {
  const std::string csv = temp_dir() + "/bench.csv";
  const auto r = cli({"bench", "--modes", "dense,separable", "--n", "3,5", "--finest", "16", "--repetitions", "3",
                      "--csv", csv});
  REQUIRE(r.code == 0);
  std::istringstream lines(slurp(csv));
  std::string line;
  std::size_t rows = 0;
  std::getline(lines, line);
  CHECK(line == "case,n,S,mode,params_per_pixel,median_ns,min_ns,residual");
  while (std::getline(lines, line)) ++rows;
  CHECK(rows == 4);
  CHECK(cli({"bench", "--repetitions", "2"}).code == 1);
}

TEST_CASE("cli train, rollout, eval and export work together") {
  const std::string dir = temp_dir();
  const std::string data = dir + "/t.smv", model = dir + "/m.tsvc", clf = dir + "/c.tsvc", gen = dir + "/g.smv";
  REQUIRE(cli({"gen-data", "--classes", "2", "--clips-per-class", "5", "--frames", "4", "--size", "16", "--out", data})
              .code == 0);
  REQUIRE(cli({"train", "--data", data, "--iterations", "3", "--batch", "2", "--ngf", "4", "--content-dim", "8",
               "--out", model})
              .code == 0);
  REQUIRE(cli({"train", "--data", data, "--classifier", "--classifier-iterations", "2", "--width", "4", "--out", clf})
              .code == 0);
  REQUIRE(cli({"rollout", "--model", model, "--label", "1", "--count", "2", "--frames", "4", "--out", gen}).code == 0);
  const auto ev = cli({"eval", "--model", model, "--classifier", clf, "--data", data, "--rollouts", "2"});
  REQUIRE(ev.code == 0);
  CHECK(ev.out.find("\"prediction\"") != std::string::npos);
  CHECK(ev.out.find("\"generated\"") != std::string::npos);
  const std::string frames = dir + "/frames";
  REQUIRE(cli({"export-frames", "--input", gen, "--clip", "1", "--out", frames}).code == 0);
  CHECK(std::filesystem::exists(frames + "/clip0001_003.pgm"));
  CHECK(cli({"export-frames", "--input", gen, "--clip", "5", "--out", frames}).code == 1);
  CHECK(cli({"rollout", "--model", dir + "/none.tsvc", "--out", gen}).code == 2);
  CHECK(cli({"train", "--data", data, "--out", model, "--preset", "huge"}).code == 1);
}
