#include "afforda/verifier.hpp"

#include <filesystem>
#include <fstream>

#include "afforda/motion.hpp"
#include "afforda/render.hpp"
#include "check.hpp"
#include "doctest.h"

using namespace afforda;
using namespace afforda::testing;

namespace {

Observation make_obs() {
  RgbImage img(320, 240);
  for (int y = 0; y < 240; ++y)
    for (int x = 0; x < 320; ++x) img.set(x, y, {std::uint8_t(x % 256), std::uint8_t(y), 60});
  return {"obs", img, Instruction{"open", "drawer", "open the drawer"}};
}

const char* kReject = "REJECT grasp the handle; metallic, upper-left; left of the spout";

}  // namespace

TEST_SUITE("verifier") {

TEST_CASE("reply parsers") {
  auto b = parse_bbox_reply("The box is (120, 80, 200, 160).", 320, 240);
  REQUIRE(b);
  CHECK(*b == BBox{120, 80, 200, 160});
  CHECK(*parse_bbox_reply("[200, 160, 120, 80]", 320, 240) == BBox{120, 80, 200, 160});
  CHECK(*parse_bbox_reply("(-10, 5, 400, 300)", 320, 240) == BBox{0, 5, 320, 240});
  CHECK_FALSE(parse_bbox_reply("somewhere near the handle", 320, 240));
  CHECK_FALSE(parse_bbox_reply("(5, 5, 5, 9)", 320, 240));

  CHECK(*parse_som_reply("regions: 3, 7", 12) == std::vector<int>{3, 7});
  CHECK(*parse_som_reply("7 3 3", 12) == std::vector<int>{3, 7});
  CHECK_FALSE(parse_som_reply("regions: 13", 12));
  CHECK_FALSE(parse_som_reply("none of them", 12));

  CHECK(*parse_direction_reply("It moves [backward, upward].") == DiscreteDirection::make(-1, -1, 0));
  CHECK(*parse_direction_reply("[sideways] or rather [forward]") == DiscreteDirection::make(1, 0, 0));
  CHECK_FALSE(parse_direction_reply("[sideways]"));

  CHECK(*parse_index_reply("Proposal 2 is best") == 2);
  CHECK_FALSE(parse_index_reply("the second"));
}

TEST_CASE("feedback parsing") {
  auto a = parse_feedback("APPROVE");
  CHECK(a.approve);
  CHECK_FALSE(a.degraded);

  auto r = parse_feedback(kReject);
  CHECK_FALSE(r.approve);
  CHECK(r.part == "grasp the handle");
  CHECK(r.appearance == "metallic, upper-left");
  CHECK(r.relative_position == "left of the spout");
  CHECK_FALSE(r.degraded);

  auto l = parse_feedback("VERDICT: REJECT\nPART: the knob\nAPPEARANCE: round\nRELATIVE: below the lid");
  CHECK_FALSE(l.approve);
  CHECK(l.part == "the knob");
  CHECK(l.appearance == "round");
  CHECK(l.relative_position == "below the lid");

  auto g = parse_feedback("I am not sure what you mean");
  CHECK_FALSE(g.approve);
  CHECK(g.degraded);
  CHECK(parse_feedback("REJECT").degraded);
}

TEST_CASE("prompt templates") {
  auto p = PromptSet::builtin();
  p.validate();
  CHECK(PromptSet::render("do {instruction} with {x}", {{"instruction", "open the drawer"}}) ==
        "do open the drawer with {x}");
  auto broken = p;
  broken.set("contact_refine_coordinate", "no placeholders");
  CHECK_ERRC(broken.validate(), Errc::InvalidArgument);

  auto dir = temp_dir("prompts");
  std::ofstream(dir / "direction_best.txt") << "pick one of {proposals} for {instruction}";
  auto o = PromptSet::with_overrides(dir.string());
  CHECK(o.get("direction_best") == "pick one of {proposals} for {instruction}");
  CHECK(o.get("direction_initial") == p.get("direction_initial"));
}

TEST_CASE("initial proposals") {
  auto obs = make_obs();
  LoopConfig cfg;
  GridSegmentationStub seg;
  auto ctx = StageContext::contact(obs, cfg, seg);
  IterationTrace tr;

  ReplayBackend ok({"(120, 80, 200, 160)"});
  auto p = run_actor_initial(ctx, ok, tr);
  CHECK(*p.bbox == BBox{120, 80, 200, 160});
  CHECK_FALSE(p.retried);

  ReplayBackend prose({"the handle, probably", "still just prose"});
  CHECK_ERRC(run_actor_initial(ctx, prose, tr), Errc::UnparseableReply);

  ReplayBackend once({"the handle", "(1, 2, 30, 40)"});
  auto q = run_actor_initial(ctx, once, tr);
  CHECK(q.retried);
  CHECK(*q.bbox == BBox{1, 2, 30, 40});

  cfg.mode = LoopMode::som;
  auto sctx = StageContext::contact(obs, cfg, seg);
  CHECK(sctx.partitions.size() == 12);
  ReplayBackend som({"regions: 3, 7"});
  CHECK(run_actor_initial(sctx, som, tr).candidates == std::vector<int>{3, 7});
}

TEST_CASE("refinement") {
  auto obs = make_obs();
  LoopConfig cfg;
  GridSegmentationStub seg;
  auto ctx = StageContext::contact(obs, cfg, seg);
  IterationTrace tr;
  ProposalRecord prev;
  prev.bbox = BBox{10, 10, 50, 50};
  auto fb = parse_feedback(kReject);
  ReplayBackend moved({"(60, 60, 100, 90)"});
  auto n = run_actor_refine(ctx, prev, fb, moved, tr);
  CHECK(*n.bbox == BBox{60, 60, 100, 90});
  CHECK_FALSE(n.stagnant);
  ReplayBackend same({"(10, 10, 50, 50)"});
  CHECK(run_actor_refine(ctx, prev, fb, same, tr).stagnant);

  cfg.mode = LoopMode::som;
  auto sctx = StageContext::contact(obs, cfg, seg);
  ProposalRecord sp;
  sp.candidates = {1, 2};
  ReplayBackend s({"regions: 4, 5"});
  auto sn = run_actor_refine(sctx, sp, fb, s, tr);
  CHECK(sn.candidates == std::vector<int>{4, 5});
}

TEST_CASE("best selection") {
  auto obs = make_obs();
  LoopConfig cfg;
  GridSegmentationStub seg;
  auto ctx = StageContext::contact(obs, cfg, seg);
  std::vector<ProposalRecord> props(4);
  for (int i = 0; i < 4; ++i) {
    props[i].step = i;
    props[i].bbox = BBox{10.0 * i, 10, 10.0 * i + 40, 60};
  }
  IterationTrace t1;
  ReplayBackend none({});
  CHECK(run_verifier_best(ctx, {props[0]}, none, t1) == 0);
  CHECK(t1.best_calls == 0);

  IterationTrace t2;
  ReplayBackend two({"2"});
  CHECK(run_verifier_best(ctx, props, two, t2) == 2);
  CHECK_FALSE(t2.best_clamped);

  IterationTrace t3;
  ReplayBackend nine({"9"});
  CHECK(run_verifier_best(ctx, props, nine, t3) == 3);
  CHECK(t3.best_clamped);
}

TEST_CASE("contact stage state machine") {
  auto obs = make_obs();
  GridSegmentationStub seg;
  LoopConfig cfg;
  cfg.max_iterations = 3;

  SUBCASE("approve first") {
    ReplayBackend r({"(120, 80, 200, 160)", "APPROVE"});
    auto res = run_contact_stage(obs, cfg, {r, seg});
    CHECK(res.trace.proposals.size() == 1);
    CHECK(res.trace.diagnose_calls == 1);
    CHECK(res.trace.refine_calls == 0);
    CHECK(res.trace.best_calls == 0);
    CHECK(res.trace.termination == Termination::approved);
    CHECK(res.trace.final_index == 0);
    CHECK(res.region == BinaryMask::from_box(320, 240, BBox{120, 80, 200, 160}));
  }
  SUBCASE("always reject") {
    ReplayBackend r({"(10, 10, 50, 50)", kReject, "(20, 10, 60, 50)", kReject, "(30, 10, 70, 50)", kReject,
                     "(40, 10, 80, 50)", kReject, "2"});
    RecordingBackend rec(r);
    auto res = run_contact_stage(obs, cfg, {rec, seg});
    CHECK(res.trace.proposals.size() == 4);
    CHECK(res.trace.diagnose_calls == 4);
    CHECK(res.trace.refine_calls == 3);
    CHECK(res.trace.best_calls == 1);
    CHECK(res.trace.total_calls() == 2 * 3 + 3);
    CHECK(res.trace.termination == Termination::exhausted);
    CHECK(res.trace.final_index == 2);
    CHECK(res.region == BinaryMask::from_box(320, 240, BBox{30, 10, 70, 50}));
    const auto calls = rec.calls();
    REQUIRE(calls.size() == 9);
    CHECK(calls.back().role == Role::verifier_best);
    CHECK(calls.back().images == 5);
    CHECK(calls[0].images == 1);
    CHECK(calls[1].images == 2);
    CHECK(calls[2].text.find("left of the spout") != std::string::npos);
    CHECK(r.remaining() == 0);
  }
  SUBCASE("approve at the second diagnose") {
    ReplayBackend r({"(10, 10, 50, 50)", kReject, "(20, 10, 60, 50)", "APPROVE"});
    auto res = run_contact_stage(obs, cfg, {r, seg});
    CHECK(res.trace.proposals.size() == 2);
    CHECK(res.trace.termination == Termination::approved);
    CHECK(res.trace.final_index == 1);
  }
  SUBCASE("zero iterations") {
    cfg.max_iterations = 0;
    ReplayBackend r({"(10, 10, 50, 50)", kReject});
    auto res = run_contact_stage(obs, cfg, {r, seg});
    CHECK(res.trace.proposals.size() == 1);
    CHECK(res.trace.termination == Termination::exhausted);
    CHECK(res.trace.best_calls == 0);
  }
  SUBCASE("som mode") {
    cfg.mode = LoopMode::som;
    ReplayBackend r({"regions: 1, 2", "APPROVE"});
    RecordingBackend rec(r);
    auto res = run_contact_stage(obs, cfg, {rec, seg});
    auto tiles = grid_partition(320, 240, 12);
    CHECK(res.region.popcount() == tiles[0].popcount() + tiles[1].popcount());
    for (const auto& c : rec.calls()) CHECK(c.images == 1);
  }
}

TEST_CASE("direction stage") {
  auto obs = make_obs();
  GridSegmentationStub seg;
  LoopConfig cfg;
  auto region = BinaryMask::from_box(320, 240, BBox{100, 100, 150, 150});

  ReplayBackend fwd({"[forward]", "APPROVE"});
  auto a = run_direction_stage(obs, region, cfg, {fwd, seg});
  CHECK(a.direction == DiscreteDirection::make(1, 0, 0));

  ReplayBackend bad({"[sideways]", "[sideways]"});
  CHECK_ERRC(run_direction_stage(obs, region, cfg, {bad, seg}), Errc::InvalidDirectionLabel);

  ReplayBackend rej({"[forward]", "REJECT too fast; ok; ok", "[upward]", "REJECT no; no; no", "[leftward]",
                     "REJECT x; y; z", "[backward]", "REJECT p; q; r", "1"});
  auto e = run_direction_stage(obs, region, cfg, {rej, seg});
  CHECK(e.trace.proposals.size() == 4);
  CHECK(e.trace.best_calls == 1);
  CHECK(e.direction == parse_direction_label("[upward]"));

  CHECK_ERRC(run_direction_stage(obs, BinaryMask(320, 240), cfg, {fwd, seg}), Errc::EmptyMask);
}

TEST_CASE("traces are reproducible") {
  auto obs = make_obs();
  GridSegmentationStub seg;
  LoopConfig cfg;
  const std::vector<std::string> script{"(10, 10, 50, 50)", kReject, "(20, 10, 60, 50)", "APPROVE",
                                        "[sideways]", "[upward]", "APPROVE"};
  std::string dumps[2];
  for (auto& d : dumps) {
    ReplayBackend r(script);
    auto s = run_sample(obs, cfg, {r, seg});
    d = trace_to_json(s.contact.trace).dump() + "\n" + trace_to_json(s.direction.trace).dump();
  }
  CHECK(dumps[0] == dumps[1]);
  auto j = nlohmann::json::parse(dumps[0].substr(0, dumps[0].find('\n')));
  CHECK(j["termination"] == "approved");
  CHECK(j["calls"]["diagnose"] == 2);
  CHECK(j["proposals"][0]["overlay_digest"].get<std::string>().size() == 16);
}

TEST_CASE("error stages name the step") {
  auto obs = make_obs();
  GridSegmentationStub seg;
  LoopConfig cfg;
  ReplayBackend r({"(10, 10, 50, 50)", kReject, "nothing", "still nothing"});
  try {
    run_contact_stage(obs, cfg, {r, seg});
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::UnparseableReply);
    CHECK(e.stage().find("contact/step 1") != std::string::npos);
  }
}

}
