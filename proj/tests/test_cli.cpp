#include "afforda/cli.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <sys/wait.h>

#include "afforda/io.hpp"
#include "check.hpp"
#include "doctest.h"
#include "scene.hpp"

using namespace afforda;
using namespace afforda::testing;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Run {
  int code;
  std::string out, err;
};

Run cli(std::vector<std::string> args) {
  std::ostringstream o, e;
  const int c = run_cli(args, o, e);
  return {c, o.str(), e.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

const fs::path& fixture() {
  static const fs::path dir = [] {
    auto d = temp_dir("cli_fixture");
    write_demo_fixture(d.string());
    return d;
  }();
  return dir;
}

std::string manifest() { return (fixture() / "manifest.jsonl").string(); }

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("usage errors") {
  auto r = cli({"frobnicate"});
  CHECK(r.code == kExitUsage);
  CHECK(r.err.find("annotate") != std::string::npos);
  CHECK(cli({}).code == kExitUsage);
  CHECK(cli({"annotate", "--out", "x"}).code == kExitUsage);
  CHECK(cli({"--help"}).code == kExitOk);
  CHECK(cli({"predict", "--manifest", manifest(), "--out", temp_dir("cli_nobackend").string()}).code == kExitUsage);
}

TEST_CASE("installed binary reports usage") {
  const std::string cmd = std::string(AFFORDA_CLI_PATH) + " frobnicate > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  REQUIRE(WIFEXITED(status));
  CHECK(WEXITSTATUS(status) == 1);
}

TEST_CASE("annotate, direction and eval") {
  const auto out = temp_dir("cli_pipeline");
  auto a = cli({"annotate", "--manifest", manifest(), "--out", out.string(), "--workers", "2"});
  REQUIRE_MESSAGE(a.code == 0, a.err);
  CHECK(a.out.find("annotated s1: stop frame 0") != std::string::npos);
  CHECK(fs::exists(out / "heatmaps/s2.png"));
  CHECK(load_log((out / "annotations.jsonl").string()).records.size() == 3);

  auto d = cli({"direction", "--manifest", manifest(), "--out", out.string()});
  REQUIRE_MESSAGE(d.code == 0, d.err);
  CHECK(d.out.find("direction s1: [backward]") != std::string::npos);
  CHECK(d.out.find("direction s2: [upward]") != std::string::npos);
  CHECK(d.out.find("direction s3: [forward, leftward]") != std::string::npos);

  auto e = cli({"eval", "--manifest", manifest(), "--out", out.string(), "--predictions", out.string()});
  REQUIRE_MESSAGE(e.code == 0, e.err);
  std::istringstream lines(e.out);
  std::string header;
  std::getline(lines, header);
  CHECK(header.find("SIM") < header.find("NSS"));
  CHECK(header.find("NSS") < header.find("AUC-J"));
  CHECK(header.find("AUC-J") < header.find("CS"));
  CHECK(e.out.find("mean") != std::string::npos);
  auto log = load_log((out / "eval.jsonl").string()).records;
  REQUIRE(log.size() == 4);
  CHECK(log.back()["kind"] == "metric_mean");
  CHECK(log.back()["cs"] == 1.0);
}

TEST_CASE("eval against perfect predictions") {
  const auto out = temp_dir("cli_perfect");
  auto e = cli({"eval", "--manifest", manifest(), "--out", out.string(), "--predictions",
                (fixture() / "predictions_gt.jsonl").string()});
  REQUIRE_MESSAGE(e.code == 0, e.err);
  std::string mean_line = e.out.substr(e.out.rfind("mean"));
  CHECK(mean_line.find("1.000") != std::string::npos);
  auto m = load_log((out / "eval.jsonl").string()).records.back();
  CHECK(m["sim"].get<double>() == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("predict replays deterministically") {
  std::string traces[2];
  for (int i = 0; i < 2; ++i) {
    const auto out = temp_dir("cli_predict_" + std::to_string(i));
    auto p = cli({"predict", "--manifest", manifest(), "--out", out.string(), "--replay",
                  (fixture() / "replay").string(), "--workers", "3", "--seed", "7"});
    REQUIRE_MESSAGE(p.code == 0, p.err);
    traces[i] = slurp(out / "traces.jsonl");
  }
  CHECK(traces[0] == traces[1]);

  const auto single = temp_dir("cli_predict_single");
  auto s = cli({"predict", "--manifest", manifest(), "--out", single.string(), "--replay",
                (fixture() / "replay.txt").string(), "--seed", "7"});
  REQUIRE_MESSAGE(s.code == 0, s.err);
  CHECK(slurp(single / "traces.jsonl") == traces[0]);

  auto recs = load_log((single / "traces.jsonl").string()).records;
  REQUIRE(recs.size() == 7);
  CHECK(recs[0]["kind"] == "run");
  CHECK(recs[0]["seed"] == 7);
  // s1 approves at once, s2 after one rejection, s3 exhausts T=3.
  CHECK(recs[1]["proposals"].size() == 1);
  CHECK(recs[3]["proposals"].size() == 2);
  CHECK(recs[4]["proposals"][0]["retried"] == true);
  CHECK(recs[5]["termination"] == "exhausted");
  CHECK(recs[5]["final_index"] == 2);
  CHECK(recs[5]["proposals"][2]["stagnant"] == true);
  CHECK(recs[5]["feedbacks"][2]["degraded"] == true);

  auto preds = load_log((single / "predictions.jsonl").string()).records;
  REQUIRE(preds.size() == 3);
  CHECK(preds[1]["direction"] == "[upward]");
  CHECK(fs::exists(single / "pred_heatmaps/s3.png"));

  const auto scored = temp_dir("cli_predict_eval");
  auto e = cli({"eval", "--manifest", manifest(), "--out", scored.string(), "--predictions",
                (single / "predictions.jsonl").string()});
  CHECK_MESSAGE(e.code == 0, e.err);
}

TEST_CASE("predict with an exhausted script fails the sample") {
  const auto dir = temp_dir("cli_short");
  std::ofstream(dir / "short.txt") << "(84, 50, 98, 70)\n";
  auto p = cli({"predict", "--manifest", manifest(), "--out", (dir / "out").string(), "--replay",
                (dir / "short.txt").string()});
  CHECK(p.code == kExitBackend);
  CHECK(p.err.find("error: sample s1") != std::string::npos);
}

TEST_CASE("export") {
  const auto dir = temp_dir("cli_export");
  append_decisions((dir / "d.jsonl").string(), {{"s3", Verdict::accept, std::nullopt, "r", 1},
                                                 {"s2", Verdict::reject, FailureMode::other, "r", 2},
                                                 {"s1", Verdict::accept, std::nullopt, "r", 3}});
  auto r = cli({"export", "--manifest", manifest(), "--decisions", (dir / "d.jsonl").string(), "--out",
                (dir / "sub/accepted.jsonl").string()});
  REQUIRE_MESSAGE(r.code == 0, r.err);
  auto m = load_manifest((dir / "sub/accepted.jsonl").string());
  REQUIRE(m.samples.size() == 2);
  CHECK(m.samples[0].id == "s1");
  CHECK(m.samples[1].id == "s3");
  CHECK(m.clips.size() == 2);
}

TEST_CASE("config files") {
  auto c = parse_run_config(json::parse(R"({"contact": {"count": 8}, "loop": {"mode": "som", "max_iterations": 1},
                                            "prediction": {"grid_step": 2}})"));
  CHECK(c.contact.count == 8);
  CHECK(c.loop.mode == LoopMode::som);
  CHECK(c.loop.max_iterations == 1);
  CHECK(c.grid_step == 2);
  CHECK_ERRC(parse_run_config(json::parse(R"({"contact": {"cuont": 8}})")), Errc::ParseError);
  CHECK_ERRC(parse_run_config(json::parse(R"({"colour": {}})")), Errc::ParseError);
  CHECK_ERRC(parse_run_config(json::parse(R"({"contact": {"count": "many"}})")), Errc::ParseError);

  const auto dir = temp_dir("cli_config");
  std::ofstream(dir / "bad.json") << R"({"motion": {"max_len": 0}})";
  auto r = cli({"direction", "--manifest", manifest(), "--out", (dir / "o").string(), "--config",
                (dir / "bad.json").string()});
  CHECK(r.code != 0);
}

TEST_CASE("exit codes") {
  CHECK(exit_code_for(Error(Errc::BackendError, "x")) == kExitBackend);
  CHECK(exit_code_for(Error(Errc::InvalidDirectionLabel, "x")) == kExitBackend);
  CHECK(exit_code_for(Error(Errc::MissingFile, "x")) == kExitData);
}

}
