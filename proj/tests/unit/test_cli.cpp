// Copyright (C) 2026 tersim contributors
// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <sys/wait.h>

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <nlohmann/json.hpp>

namespace fs = std::filesystem;

namespace {

const fs::path kRoot = TERSIM_SOURCE_DIR;
const std::string kExe = TERSIM_CLI_PATH;

struct Run {
  int code = -1;
  std::string out;
};

Run run(const std::string& args) {
  Run r;
  FILE* p = popen((kExe + " " + args + " 2>/dev/null").c_str(), "r");
  REQUIRE(p != nullptr);
  std::array<char, 4096> buf;
  for (std::size_t n; (n = fread(buf.data(), 1, buf.size(), p)) > 0;) r.out.append(buf.data(), n);
  const int st = pclose(p);
  r.code = WIFEXITED(st) ? WEXITSTATUS(st) : -1;
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

}  // namespace

TEST_CASE("usage errors exit 2") {
  CHECK(run("").code == 2);
  CHECK(run("exam").code == 2);
  CHECK(run("stats --records").code == 2);
  CHECK(run("exam --scenario x --format xml").code == 2);
  CHECK(run("--help").code == 0);
}

TEST_CASE("exam writes json and artifacts") {
  TempDir d("tersim_cli_exam");
  const auto r = run("exam --scenario " + (kRoot / "scenarios/aaa_54mm.yaml").string() + " --out-dir " + d.path.string());
  REQUIRE(r.code == 0);
  const auto j = nlohmann::json::parse(r.out);
  CHECK(j["scenario"] == "aaa_54mm");
  CHECK(j["ground_truth"]["aaa"] == true);
  CHECK(fs::exists(d.path / "exam.json"));
  CHECK(fs::exists(d.path / "trace.jsonl"));
  bool pgm = false;
  for (const auto& e : fs::recursive_directory_iterator(d.path)) pgm |= e.path().extension() == ".pgm";
  CHECK(pgm);
  CHECK(run("exam --format table --scenario " + (kRoot / "scenarios/aaa_54mm.yaml").string()).code == 0);
}

TEST_CASE("input errors exit 2, output errors exit 4") {
  CHECK(run("exam --scenario /nonexistent.yaml").code == 2);
  TempDir d("tersim_cli_bad");
  std::ofstream(d.path / "bad.yaml") << "version: 1\nname: x\nphantom: normal_aorta\nsweep: []\nbogus: 1\n";
  CHECK(run("exam --scenario " + (d.path / "bad.yaml").string()).code == 2);
  std::ofstream(d.path / "bad.csv") << "nope\n";
  CHECK(run("stats --records " + (d.path / "bad.csv").string()).code == 2);
  CHECK(run("stats --records /nonexistent.csv").code == 2);
  CHECK(run("exam --scenario " + (kRoot / "scenarios/normal_aorta.yaml").string() + " --out-dir /proc/forbidden").code == 4);
}

TEST_CASE("campaign then stats reproduces the report") {
  TempDir d("tersim_cli_campaign");
  TempDir e("tersim_cli_campaign2");
  const auto c = run("campaign --cohort " + (kRoot / "cohorts/default.yaml").string() + " --out-dir " + d.path.string());
  REQUIRE(c.code == 0);
  const auto out = nlohmann::json::parse(c.out);
  CHECK(out["completed_exams"] == 54);
  CHECK(out["failed_exams"].size() == 4);
  const auto report = out["report"];
  CHECK(report["n_patients"] == 54);
  REQUIRE(fs::exists(d.path / "records.csv"));
  const auto s = run("stats --records " + (d.path / "records.csv").string());
  REQUIRE(s.code == 0);
  CHECK(nlohmann::json::parse(s.out) == report);

  REQUIRE(run("campaign --out-dir " + e.path.string()).code == 0);
  CHECK(slurp(d.path / "records.csv") == slurp(e.path / "records.csv"));
}

TEST_CASE("seed override changes the campaign") {
  TempDir d("tersim_cli_seed");
  TempDir e("tersim_cli_seed2");
  REQUIRE(run("campaign --seed 1 --out-dir " + d.path.string()).code == 0);
  REQUIRE(run("campaign --seed 2 --out-dir " + e.path.string()).code == 0);
  CHECK(slurp(d.path / "records.csv") != slurp(e.path / "records.csv"));
}
