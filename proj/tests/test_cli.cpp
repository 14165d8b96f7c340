#include <catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "cao/commands.hpp"

namespace fs = std::filesystem;

namespace {

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = cao::run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

struct Scratch {
  fs::path dir;
  explicit Scratch(const std::string& name) : dir(fs::temp_directory_path() / ("cao_test_cli_" + name)) {
    fs::remove_all(dir);
  }
  ~Scratch() { fs::remove_all(dir); }
  std::string operator/(const std::string& sub) const { return (dir / sub).string(); }
};

std::vector<std::string> tiny_train_eval(const std::string& data, const std::string& out) {
  return {"train-eval", "--data", data, "--out", out, "--variant", "1d", "--arm", "preprocessed", "--runs", "2",
          "--seed", "1", "--epochs", "1", "--stem-channels", "4", "--blocks", "4,8", "--fc-hidden", "8",
          "--test-fraction", "0.5"};
}

}  // namespace

TEST_CASE("synth echoes class counts and writes the dataset", "[cli][synth]") {
  Scratch s("synth");
  const Result r = cli({"synth", "--n-lad", "3", "--n-lcx", "2", "--n-rca", "2", "--seed", "7", "--out", s / "d"});
  REQUIRE(r.code == 0);
  CHECK(r.out.find("LAD 3") != std::string::npos);
  CHECK(r.out.find("LCX 2") != std::string::npos);
  CHECK(r.out.find("RCA 2") != std::string::npos);
  CHECK(r.out.find("7 records written") != std::string::npos);
  CHECK(fs::exists(s.dir / "d" / "manifest.jsonl"));
  CHECK(fs::exists(s.dir / "d" / "ground_truth.jsonl"));
  CHECK(fs::exists(s.dir / "d" / "rec00006.csv"));

  const nlohmann::json meta = nlohmann::json::parse(slurp(s.dir / "d" / "synth.json"));
  CHECK(meta.at("seed") == 7);
}

TEST_CASE("synth refuses a non-empty directory unless forced, and is deterministic", "[cli][synth]") {
  Scratch s("force");
  const std::vector<std::string> args{"synth", "--n-lad", "2", "--n-lcx", "2", "--n-rca", "2",
                                      "--seed", "11", "--out", s / "d"};
  REQUIRE(cli(args).code == 0);
  const std::string first = slurp(s.dir / "d" / "rec00003.csv");

  const Result again = cli(args);
  CHECK(again.code != 0);
  CHECK(again.err.find("--force") != std::string::npos);
  CHECK(nlohmann::json::parse(again.err).at("command") == "synth");

  std::vector<std::string> forced = args;
  forced.push_back("--force");
  REQUIRE(cli(forced).code == 0);
  CHECK(slurp(s.dir / "d" / "rec00003.csv") == first);
  CHECK(slurp(s.dir / "d" / "manifest.jsonl").size() > 0);
}

TEST_CASE("synth with zero counts warns and writes an empty manifest", "[cli][synth]") {
  Scratch s("empty");
  const Result r = cli({"synth", "--n-lad", "0", "--n-lcx", "0", "--n-rca", "0", "--seed", "1", "--out", s / "d"});
  CHECK(r.code == 0);
  CHECK(r.err.find("empty") != std::string::npos);
  CHECK(slurp(s.dir / "d" / "manifest.jsonl").empty());
}

TEST_CASE("synth requires a seed", "[cli][synth]") {
  Scratch s("noseed");
  CHECK(cli({"synth", "--out", s / "d"}).code == 2);
  CHECK(cli({"bogus"}).code == 2);
}

TEST_CASE("preprocess reports pulses per class for both arms", "[cli][preprocess]") {
  Scratch s("pre");
  REQUIRE(cli({"synth", "--n-lad", "2", "--n-lcx", "2", "--n-rca", "2", "--seed", "5", "--out", s / "d"}).code == 0);

  const Result raw = cli({"preprocess", "--data", s / "d", "--raw"});
  REQUIRE(raw.code == 0);
  CHECK(raw.out.find("pulses per record: min 17, mean 17.00, max 17") != std::string::npos);
  CHECK(fs::exists(s.dir / "d" / "pulses-raw" / "pulses.bin"));

  const Result pre = cli({"preprocess", "--data", s / "d", "--preprocessed", "--out", s / "p"});
  REQUIRE(pre.code == 0);
  CHECK(pre.out.find("total        6") != std::string::npos);
  CHECK(fs::exists(s.dir / "p" / "pulses.bin"));
  const nlohmann::json meta = nlohmann::json::parse(slurp(s.dir / "p" / "pulses.meta.json"));
  CHECK(meta.contains("config"));
  const auto& per_record = meta.at("pulses_per_record");
  CHECK(per_record.at("min").get<int>() >= 8);
  CHECK(per_record.at("max").get<int>() <= 15);
  CHECK(per_record.at("mean").get<double>() >= 8.0);
  CHECK(per_record.at("mean").get<double>() <= 14.0);

  CHECK(cli({"preprocess", "--data", s / "d", "--raw", "--preprocessed"}).code == 2);
}

TEST_CASE("preprocess names a missing manifest", "[cli][preprocess]") {
  Scratch s("nomanifest");
  fs::create_directories(s.dir / "d");
  const Result r = cli({"preprocess", "--data", s / "d"});
  CHECK(r.code != 0);
  CHECK(r.err.find("manifest.jsonl") != std::string::npos);
  CHECK(r.err.find((s.dir / "d").string()) != std::string::npos);
}

TEST_CASE("train-eval rejects a single run", "[cli][train-eval]") {
  Scratch s("onerun");
  REQUIRE(cli({"synth", "--n-lad", "2", "--n-lcx", "2", "--n-rca", "2", "--seed", "5", "--out", s / "d"}).code == 0);
  std::vector<std::string> args = tiny_train_eval(s / "d", s / "r");
  args[10] = "1";
  const Result r = cli(args);
  CHECK(r.code == 2);
  CHECK(r.err.find("--runs") != std::string::npos);
  CHECK_FALSE(fs::exists(s.dir / "r" / "report.json"));
}

TEST_CASE("train-eval is reproducible from its arguments", "[cli][train-eval]") {
  Scratch s("repro");
  REQUIRE(cli({"synth", "--n-lad", "3", "--n-lcx", "2", "--n-rca", "2", "--seed", "3", "--out", s / "d"}).code == 0);
  // The report records its own command line, so both runs use the same paths.
  const std::vector<std::string> args = tiny_train_eval(s / "d", s / "r");
  const Result a = cli(args);
  REQUIRE(a.code == 0);
  CHECK(a.out.find("Stage-1 (LAD vs non-LAD)") != std::string::npos);
  CHECK(a.out.find("Stage-2 (LCX vs RCA)") != std::string::npos);
  std::vector<std::string> files{"report.json", "report.csv", "report.txt"};
  for (const char* run : {"run0", "run1"})
    for (const char* stage : {"stage1", "stage2"})
      files.push_back((fs::path("checkpoints") / "1d-preprocessed" / run / stage / "model.bin").string());
  std::vector<std::string> first;
  for (const auto& f : files) {
    REQUIRE(fs::exists(s.dir / "r" / f));
    first.push_back(slurp(s.dir / "r" / f));
  }
  fs::remove_all(s.dir / "r");
  REQUIRE(cli(args).code == 0);
  for (std::size_t i = 0; i < files.size(); ++i) {
    INFO(files[i]);
    CHECK(slurp(s.dir / "r" / files[i]) == first[i]);
  }
  const std::string ja = first[0];

  const nlohmann::json report = nlohmann::json::parse(ja);
  CHECK(report.contains("config"));
  CHECK(report.contains("command"));
  CHECK(report.at("reports").size() == 1);
  CHECK(report.at("reports")[0].at("seed") == 1);

  std::vector<std::string> other = tiny_train_eval(s / "d", s / "c");
  other[12] = "2";
  REQUIRE(cli(other).code == 0);
  CHECK(slurp(s.dir / "c" / "report.json") != ja);
}

TEST_CASE("the installed binary exits nonzero with a JSON error line", "[cli][binary]") {
  const char* bin = std::getenv("CAO_BIN");
  if (!bin) SKIP("CAO_BIN not set");
  Scratch s("binary");
  fs::create_directories(s.dir);
  const std::string err = (s.dir / "err.txt").string();
  const std::string cmd = std::string(bin) + " preprocess --data " + (s.dir / "missing").string() + " 2> " + err;
  CHECK(std::system(cmd.c_str()) != 0);
  const nlohmann::json line = nlohmann::json::parse(slurp(err));
  CHECK(line.at("command") == "preprocess");
  CHECK(line.at("error").get<std::string>().find("missing") != std::string::npos);
  CHECK(std::system((std::string(bin) + " --help > /dev/null").c_str()) == 0);
}
