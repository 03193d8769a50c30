#include "afforda/io.hpp"

#include <filesystem>
#include <fstream>
#include <set>
#include <thread>

#include "afforda/image.hpp"
#include "check.hpp"
#include "doctest.h"
#include "generators.hpp"

using namespace afforda;
using namespace afforda::testing;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

void spit(const fs::path& p, const std::string& s) { std::ofstream(p, std::ios::binary) << s; }

// Column-major run lengths computed independently of encode_rle.
std::vector<std::uint32_t> runs_ref(const BinaryMask& m) {
  std::vector<std::uint32_t> out{0};
  bool cur = false;
  for (int x = 0; x < m.width(); ++x)
    for (int y = 0; y < m.height(); ++y) {
      if (m.at(x, y) != cur) {
        out.push_back(0);
        cur = !cur;
      }
      ++out.back();
    }
  return out;
}

}  // namespace

TEST_SUITE("io") {

TEST_CASE("rle closed forms") {
  CHECK(encode_rle(BinaryMask(2, 2)).counts == std::vector<std::uint32_t>{4});
  BinaryMask ones(2, 2, {1, 1, 1, 1});
  CHECK(encode_rle(ones).counts == std::vector<std::uint32_t>{0, 4});
  BinaryMask col(2, 2, {1, 0, 1, 0});
  CHECK(encode_rle(col).counts == std::vector<std::uint32_t>{0, 2, 2});
  CHECK_ERRC(decode_rle(RleMask{2, 2, {3}}), Errc::BadCounts);
  auto j = rle_to_json(encode_rle(col));
  CHECK(j["size"] == nlohmann::json::array({2, 2}));
}

TEST_CASE("rle random round trips") {
  Rng rng(1);
  for (int i = 0; i < 300; ++i) {
    auto m = random_mask(rng);
    auto r = encode_rle(m);
    CHECK(r.counts == runs_ref(m));
    CHECK(decode_rle(rle_from_json(nlohmann::json::parse(rle_to_json(r).dump()))) == m);
  }
}

TEST_CASE("masks and heatmaps on disk") {
  auto dir = temp_dir("io_masks");
  GrayImage g{3, 2, {0, 255, 255, 0, 255, 0}};
  save_png((dir / "m.png").string(), g);
  CHECK(load_grayscale_mask((dir / "m.png").string()).popcount() == 3);

  auto m = BinaryMask::from_box(9, 7, BBox{1, 2, 5, 6});
  save_rle((dir / "m.rle.json").string(), m);
  CHECK(load_mask((dir / "m.rle.json").string()) == m);
  save_grayscale_mask((dir / "n.png").string(), m);
  CHECK(load_mask((dir / "n.png").string()) == m);

  save_png((dir / "rgb.png").string(), RgbImage(3, 3));
  CHECK_ERRC(load_grayscale_mask((dir / "rgb.png").string()), Errc::UnsupportedFormat);

  GrayImage u{4, 4, std::vector<std::uint8_t>(16, 128)};
  save_png((dir / "u.png").string(), u);
  auto h = load_heatmap((dir / "u.png").string());
  auto n = h.normalized();
  for (double v : n.values()) CHECK(v == doctest::Approx(1.0 / 16));
  save_png((dir / "z.png").string(), GrayImage{4, 4, std::vector<std::uint8_t>(16, 0)});
  CHECK_ERRC(load_heatmap((dir / "z.png").string()), Errc::ZeroMass);
  CHECK_ERRC(load_mask((dir / "absent.png").string()), Errc::MissingFile);
}

TEST_CASE("trajectory documents") {
  auto doc = nlohmann::json::parse(R"({"trajectories": [
    {"pixel_id": 1, "points": [[0,0,0],[1,0,0],[2,0,0],[3,0,0],[4,0,0]]},
    {"pixel_id": 2, "points": [[0,1,0],[1,1,0],[2,1,0],[3,1,0],[4,1,0]]}]})");
  auto t = parse_trajectories(doc);
  REQUIRE(t.size() == 2);
  CHECK(t[0].points.size() == 5);
  CHECK(t[1].pixel_id == 2);
  CHECK(parse_trajectories(nlohmann::json::parse(R"({"trajectories": []})")).empty());

  auto bad = doc;
  bad["trajectories"][1]["points"][3][2] = nullptr;
  try {
    parse_trajectories(bad);
    FAIL("expected NonFinite");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::NonFinite);
    CHECK(e.detail().find("pixel 2") != std::string::npos);
    CHECK(e.detail().find("frame 3") != std::string::npos);
  }
  auto ragged = doc;
  ragged["trajectories"][0]["points"].erase(0);
  CHECK_ERRC(parse_trajectories(ragged), Errc::RaggedTrajectory);

  auto dir = temp_dir("io_traj");
  save_trajectories((dir / "t.json").string(), t);
  CHECK(load_trajectories((dir / "t.json").string()) == t);
}

TEST_CASE("manifest round trip and validation") {
  auto dir = temp_dir("io_manifest");
  fs::create_directories(dir / "a");
  spit(dir / "a/img.png", "x");
  const std::string text =
      "{\"kind\":\"manifest\",\"version\":1}\n"
      "{\"gt_direction\":null,\"gt_map\":null,\"id\":\"a\",\"image\":{\"height\":4,\"path\":\"a/img.png\","
      "\"width\":4},\"kind\":\"sample\",\"narration\":\"open the drawer\",\"source\":\"real_world\"}\n";
  spit(dir / "manifest.jsonl", text);
  auto m = load_manifest((dir / "manifest.jsonl").string());
  REQUIRE(m.samples.size() == 1);
  CHECK(manifest_to_string(m) == text);
  auto s = load_sample(m, m.samples[0]);
  CHECK(s.instruction.noun == "drawer");

  Rng rng(4);
  for (int i = 0; i < 100; ++i) {
    auto r = random_manifest(rng);
    const auto str = manifest_to_string(r);
    auto back = parse_manifest(str, "/nowhere", false);
    CHECK(back.samples == r.samples);
    CHECK(back.clips == r.clips);
    CHECK(manifest_to_string(back) == str);
  }

  std::string dup = text + text.substr(text.find('\n') + 1);
  try {
    parse_manifest(dup, dir.string(), false);
    FAIL("expected ParseError");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::ParseError);
    CHECK(std::string(e.what()).find("'a'") != std::string::npos);
  }

  std::string unknown = text;
  unknown.insert(unknown.rfind('}'), ",\"colour\":1");
  CHECK_ERRC(parse_manifest(unknown, dir.string(), false), Errc::ParseError);
}

TEST_CASE("missing files are listed") {
  auto dir = temp_dir("io_missing");
  Manifest m;
  m.base_dir = dir.string();
  m.samples.push_back({"a", {"a/img.png", 8, 8}, "open the drawer", std::nullopt, std::nullopt, SampleSource::laboratory});
  ClipRecord c;
  c.sample_id = "a";
  c.width = c.height = 8;
  c.frames = {"a/img.png"};
  c.hand_masks = {"a/hand_0.png"};
  m.clips.push_back(c);
  fs::create_directories(dir / "a");
  spit(dir / "a/img.png", "x");
  save_manifest(m, (dir / "manifest.jsonl").string());
  try {
    load_manifest((dir / "manifest.jsonl").string());
    FAIL("expected MissingFile");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::MissingFile);
    CHECK(std::string(e.what()).find("hand_0.png") != std::string::npos);
  }
  CHECK(load_manifest((dir / "manifest.jsonl").string(), false).clips.size() == 1);
}

TEST_CASE("log append and torn tails") {
  auto dir = temp_dir("io_log");
  const auto path = (dir / "log.jsonl").string();
  append_results(path, {{{"i", 0}}, {{"i", 1}}, {{"i", 2}}});
  auto l = load_log(path);
  REQUIRE(l.records.size() == 3);
  for (int i = 0; i < 3; ++i) CHECK(l.records[i]["i"] == i);
  CHECK_FALSE(l.warning);

  const auto big = (dir / "big.jsonl").string();
  {
    LogWriter w(big, true);
    std::vector<std::thread> ts;
    for (int t = 0; t < 4; ++t)
      ts.emplace_back([&, t] {
        for (int i = 0; i < 100; ++i) w.append({{"worker", t}, {"seq", i}, {"pad", std::string(50, 'a' + t)}});
      });
    for (auto& th : ts) th.join();
    w.close();
  }
  auto all = load_log(big);
  REQUIRE(all.records.size() == 400);
  std::map<int, int> next;
  for (const auto& r : all.records) {
    const int w = r["worker"], s = r["seq"];
    CHECK(s == next[w]++);
    CHECK(r["pad"] == std::string(50, 'a' + w));
  }

  auto text = slurp(big);
  text.resize(text.size() - 10);
  spit(big, text);
  auto torn = load_log(big);
  CHECK(torn.records.size() == 399);
  CHECK(torn.warning);

  spit(dir / "bad.jsonl", "{\"a\":1}\nnot json\n{\"a\":2}\n");
  CHECK_ERRC(load_log((dir / "bad.jsonl").string()), Errc::ParseError);
  CHECK_ERRC(LogWriter(path).append_line("two\nlines"), Errc::InvalidArgument);
}

TEST_CASE("decisions") {
  ReviewDecision d{"s1", Verdict::accept, FailureMode::other, "ann", 5};
  CHECK_ERRC(d.validate(), Errc::InvalidArgument);
  ReviewDecision ok{"s1", Verdict::reject, FailureMode::homography_drift, "ann", 5};
  CHECK(decision_from_json(decision_to_json(ok)) == ok);
  CHECK_ERRC(decision_from_json(nlohmann::json{{"kind", "decision"}}), Errc::ParseError);

  std::vector<ReviewDecision> log{
      {"a", Verdict::reject, FailureMode::other, "r1", 10},
      {"b", Verdict::accept, std::nullopt, "r1", 11},
      {"a", Verdict::accept, std::nullopt, "r1", 9},
      {"c", Verdict::flag, std::nullopt, "r2", 20},
      {"c", Verdict::accept, std::nullopt, "r1", 15},
      {"b", Verdict::reject, FailureMode::wrong_hand, "r2", 11},
  };
  auto eff = effective_decisions(log);
  std::map<std::string, Verdict> by;
  for (const auto& e : eff) by[e.sample_id] = e.verdict;
  CHECK(by.at("a") == Verdict::accept);
  CHECK(by.at("b") == Verdict::reject);
  CHECK(by.at("c") == Verdict::flag);

  auto dir = temp_dir("io_decisions");
  append_decisions((dir / "d.jsonl").string(), log);
  CHECK(load_decisions((dir / "d.jsonl").string()) == log);
}

TEST_CASE("export keeps accepted samples in manifest order") {
  Manifest m;
  m.base_dir = "/data/set";
  for (const char* id : {"x", "y", "z", "w"}) {
    m.samples.push_back({id, {std::string(id) + ".png", 4, 4}, "open the drawer", std::nullopt, std::nullopt,
                         SampleSource::real_world});
    ClipRecord c;
    c.sample_id = id;
    c.width = c.height = 4;
    c.frames = {std::string(id) + "_0.png"};
    m.clips.push_back(c);
  }
  std::vector<ReviewDecision> log{{"w", Verdict::accept, std::nullopt, "r", 1},
                                  {"y", Verdict::reject, FailureMode::other, "r", 2},
                                  {"x", Verdict::accept, std::nullopt, "r", 3},
                                  {"z", Verdict::flag, std::nullopt, "r", 4}};
  auto e = export_accepted(m, log);
  REQUIRE(e.samples.size() == 2);
  CHECK(e.samples[0].id == "x");
  CHECK(e.samples[1].id == "w");
  CHECK(e.clips.size() == 2);

  auto moved = rebase_manifest(e, "/data/out");
  CHECK(moved.samples[0].image.path == "../set/x.png");
  CHECK(moved.resolve(moved.samples[0].image.path) == "/data/out/../set/x.png");
}

}
