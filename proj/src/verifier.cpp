#include "afforda/verifier.hpp"

#include <algorithm>
#include <cctype>
#include <filesystem>
#include <fstream>
#include <regex>
#include <sstream>

#include "afforda/error.hpp"
#include "afforda/motion.hpp"
#include "afforda/render.hpp"

namespace afforda {

namespace detail {
const std::map<std::string, std::string>& embedded_prompts();
}

namespace {

struct TemplateSpec {
  const char* name;
  std::vector<std::string> required;
};

const std::vector<TemplateSpec>& template_specs() {
  static const std::vector<TemplateSpec> specs = {
      {"contact_initial_coordinate", {"instruction"}},
      {"contact_initial_som", {"instruction", "marks"}},
      {"contact_diagnose_coordinate", {"instruction", "marks"}},
      {"contact_diagnose_som", {"instruction", "marks", "proposal"}},
      {"contact_refine_coordinate", {"instruction", "previous", "feedback"}},
      {"contact_refine_som", {"instruction", "marks", "previous", "feedback"}},
      {"contact_best_coordinate", {"instruction", "count"}},
      {"contact_best_som", {"instruction", "proposals"}},
      {"direction_initial", {"instruction", "marks"}},
      {"direction_diagnose", {"instruction", "marks", "proposal"}},
      {"direction_refine", {"instruction", "marks", "previous", "feedback"}},
      {"direction_best", {"instruction", "proposals"}},
  };
  return specs;
}

std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::string upper(std::string s) {
  for (auto& c : s) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return s;
}

std::string strip_quotes(std::string s) {
  s = trim(std::move(s));
  while (!s.empty() && (s.front() == '"' || s.front() == '\'')) s.erase(s.begin());
  while (!s.empty() && (s.back() == '"' || s.back() == '\'')) s.pop_back();
  return trim(std::move(s));
}

std::string template_name(const StageContext& ctx, const char* role) {
  if (ctx.stage == Stage::direction) return std::string("direction_") + role;
  return std::string("contact_") + role + "_" + std::string(mode_name(ctx.cfg->mode));
}

std::string marks_text(const StageContext& ctx) {
  if (ctx.stage == Stage::contact && ctx.cfg->mode == LoopMode::som) {
    return "1 to " + std::to_string(ctx.partitions.size());
  }
  return "1";
}

std::string fmt_num(double v) {
  std::ostringstream os;
  os << v;
  return os.str();
}

std::string bbox_text(const BBox& b) {
  return "(" + fmt_num(b.x0) + ", " + fmt_num(b.y0) + ", " + fmt_num(b.x1) + ", " + fmt_num(b.y1) + ")";
}

std::string candidates_text(const std::vector<int>& c) {
  std::string out;
  for (std::size_t i = 0; i < c.size(); ++i) {
    if (i) out += ", ";
    out += std::to_string(c[i]);
  }
  return out;
}

std::string proposal_text(const ProposalRecord& p) {
  if (p.direction) return direction_label(*p.direction);
  if (p.bbox) return bbox_text(*p.bbox);
  return candidates_text(p.candidates);
}

std::string feedback_text(const Feedback& f) {
  if (f.degraded && f.part.empty() && f.appearance.empty() && f.relative_position.empty()) {
    return trim(f.raw).empty() ? "(no details given)" : trim(f.raw);
  }
  return "Part to contact: " + f.part + "\nAppearance and position: " + f.appearance +
         "\nRelative position: " + f.relative_position;
}

std::map<std::string, std::string> base_vars(const StageContext& ctx) {
  return {{"instruction", ctx.obs->instruction.render()}, {"marks", marks_text(ctx)}};
}

const char* format_reminder(const StageContext& ctx) {
  if (ctx.stage == Stage::direction) {
    return "Your previous reply could not be parsed. Reply only with a bracketed direction list such as "
           "[forward, downward].";
  }
  if (ctx.cfg->mode == LoopMode::som) {
    return "Your previous reply could not be parsed. Reply only with a line \"regions: i, j, ...\".";
  }
  return "Your previous reply could not be parsed. Reply only with a bounding box (x0, y0, x1, y1).";
}

// Parses an Actor reply into the proposal payload; false when unusable.
bool fill_proposal(const StageContext& ctx, const std::string& reply, ProposalRecord& p) {
  if (ctx.stage == Stage::direction) {
    p.direction = parse_direction_reply(reply);
    return p.direction.has_value();
  }
  if (ctx.cfg->mode == LoopMode::som) {
    auto c = parse_som_reply(reply, static_cast<int>(ctx.partitions.size()));
    if (!c) return false;
    p.candidates = std::move(*c);
    return true;
  }
  p.bbox = parse_bbox_reply(reply, ctx.obs->image.width(), ctx.obs->image.height());
  return p.bbox.has_value();
}

std::vector<RgbImage> actor_images(const StageContext& ctx) {
  if (ctx.stage == Stage::direction) return {ctx.region_overlay};
  if (ctx.cfg->mode == LoopMode::som) return {ctx.som_overlay};
  return {ctx.obs->image};
}

RgbImage proposal_overlay(const StageContext& ctx, const ProposalRecord& p) {
  return render_region_overlay(ctx.obs->image, proposal_mask(ctx, p)).image;
}

ProposalRecord ask_actor(const StageContext& ctx, Role role, const std::string& text, ModelBackend& model,
                         IterationTrace& trace, int step) {
  ModelRequest req{role, ctx.stage, text, actor_images(ctx)};
  int& counter = role == Role::actor_initial ? trace.initial_calls : trace.refine_calls;
  ProposalRecord p;
  p.step = step;
  p.reply = model.send(req);
  ++counter;
  if (!fill_proposal(ctx, p.reply, p)) {
    req.text = text + "\n\n" + format_reminder(ctx);
    p.reply = model.send(req);
    ++counter;
    ++trace.retries;
    p.retried = true;
    if (!fill_proposal(ctx, p.reply, p)) {
      const Errc code = ctx.stage == Stage::direction ? Errc::InvalidDirectionLabel : Errc::UnparseableReply;
      throw Error(code, "reply unusable after one retry: " + trim(p.reply), std::string(role_name(role)));
    }
  }
  if (ctx.stage == Stage::contact) p.overlay_digest = fnv1a_hex(encode_png(proposal_overlay(ctx, p)));
  return p;
}

bool same_payload(const ProposalRecord& a, const ProposalRecord& b) {
  return a.bbox == b.bbox && a.candidates == b.candidates && a.direction == b.direction;
}

const std::regex& number_re() {
  static const std::regex re(R"(-?\d+(?:\.\d+)?)");
  return re;
}

}  // namespace

std::string_view mode_name(LoopMode m) { return m == LoopMode::coordinate ? "coordinate" : "som"; }

LoopMode parse_mode(std::string_view s) {
  if (s == "coordinate") return LoopMode::coordinate;
  if (s == "som") return LoopMode::som;
  throw Error(Errc::InvalidArgument, "mode must be coordinate or som, got " + std::string(s));
}

PromptSet PromptSet::builtin() {
  PromptSet p;
  for (const auto& [name, text] : detail::embedded_prompts()) p.templates_[name] = text;
  return p;
}

PromptSet PromptSet::with_overrides(const std::string& dir) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) throw Error(Errc::MissingFile, "prompt directory " + dir);
  PromptSet p = builtin();
  for (const auto& spec : template_specs()) {
    const fs::path file = fs::path(dir) / (std::string(spec.name) + ".txt");
    if (!fs::exists(file)) continue;
    std::ifstream in(file);
    std::stringstream ss;
    ss << in.rdbuf();
    p.templates_[spec.name] = ss.str();
  }
  return p;
}

const std::string& PromptSet::get(const std::string& name) const {
  auto it = templates_.find(name);
  if (it == templates_.end()) throw Error(Errc::InvalidArgument, "no prompt template named " + name);
  return it->second;
}

void PromptSet::set(const std::string& name, std::string text) { templates_[name] = std::move(text); }

void PromptSet::validate() const {
  for (const auto& spec : template_specs()) {
    const std::string& t = get(spec.name);
    for (const auto& ph : spec.required) {
      if (t.find("{" + ph + "}") == std::string::npos) {
        throw Error(Errc::InvalidArgument, "template " + std::string(spec.name) + " lacks {" + ph + "}");
      }
    }
  }
}

std::string PromptSet::render(const std::string& tmpl, const std::map<std::string, std::string>& vars) {
  std::string out;
  out.reserve(tmpl.size());
  std::size_t i = 0;
  while (i < tmpl.size()) {
    if (tmpl[i] == '{') {
      const auto close = tmpl.find('}', i + 1);
      if (close != std::string::npos) {
        auto it = vars.find(tmpl.substr(i + 1, close - i - 1));
        if (it != vars.end()) {
          out += it->second;
          i = close + 1;
          continue;
        }
      }
    }
    out += tmpl[i++];
  }
  return out;
}

void LoopConfig::validate() const {
  if (max_iterations < 0) throw Error(Errc::InvalidArgument, "max_iterations must be >= 0");
  if (mode == LoopMode::som && som_candidates < 1) throw Error(Errc::BadK, "som_candidates must be >= 1");
  prompts.validate();
}

std::optional<BBox> parse_bbox_reply(const std::string& reply, int width, int height) {
  static const std::string num = R"(\s*(-?\d+(?:\.\d+)?)\s*)";
  static const std::regex re(R"([\(\[])" + num + "," + num + "," + num + "," + num + R"([\)\]])");
  std::smatch m;
  if (!std::regex_search(reply, m, re)) return std::nullopt;
  double v[4];
  for (int i = 0; i < 4; ++i) v[i] = std::stod(m[i + 1].str());
  BBox b{std::min(v[0], v[2]), std::min(v[1], v[3]), std::max(v[0], v[2]), std::max(v[1], v[3])};
  b.x0 = std::clamp(b.x0, 0.0, double(width));
  b.x1 = std::clamp(b.x1, 0.0, double(width));
  b.y0 = std::clamp(b.y0, 0.0, double(height));
  b.y1 = std::clamp(b.y1, 0.0, double(height));
  if (!b.valid()) return std::nullopt;
  return b;
}

std::optional<std::vector<int>> parse_som_reply(const std::string& reply, int k) {
  static const std::regex keyed(R"(regions?\s*[:=]?\s*([\d,;\s]+))", std::regex::icase);
  static const std::regex bare(R"(^\s*([\d,;\s]+)$)");
  std::smatch m;
  if (!std::regex_search(reply, m, keyed) && !std::regex_search(reply, m, bare)) return std::nullopt;
  const std::string list = m[1].str();
  std::vector<int> out;
  for (std::sregex_iterator it(list.begin(), list.end(), number_re()), end; it != end; ++it) {
    const int v = std::stoi(it->str());
    if (v < 1 || v > k) return std::nullopt;
    out.push_back(v);
  }
  if (out.empty()) return std::nullopt;
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

std::optional<DiscreteDirection> parse_direction_reply(const std::string& reply) {
  static const std::regex bracket(R"(\[[^\]]*\])");
  for (std::sregex_iterator it(reply.begin(), reply.end(), bracket), end; it != end; ++it) {
    try {
      return parse_direction_label(it->str());
    } catch (const Error&) {
    }
  }
  if (reply.find('[') == std::string::npos) {
    try {
      return parse_direction_label(trim(reply));
    } catch (const Error&) {
    }
  }
  return std::nullopt;
}

std::optional<int> parse_index_reply(const std::string& reply) {
  static const std::regex re(R"(-?\d+)");
  std::smatch m;
  if (!std::regex_search(reply, m, re)) return std::nullopt;
  try {
    return std::stoi(m.str());
  } catch (const std::out_of_range&) {
    return std::nullopt;
  }
}

Feedback parse_feedback(const std::string& reply) {
  Feedback f;
  f.raw = reply;
  static const std::regex verdict_re(R"(VERDICT\s*:\s*([A-Za-z]+))", std::regex::icase);
  static const std::regex field_re(R"(^\s*(PART|APPEARANCE|RELATIVE)[A-Za-z_ ]*:\s*(.*?)\s*$)", std::regex::icase);
  std::smatch m;
  bool known = false;
  if (std::regex_search(reply, m, verdict_re)) {
    const std::string v = upper(m[1].str());
    known = v == "APPROVE" || v == "REJECT";
    f.approve = v == "APPROVE";
    std::istringstream lines(reply);
    for (std::string line; std::getline(lines, line);) {
      std::smatch fm;
      if (!std::regex_match(line, fm, field_re)) continue;
      const std::string key = upper(fm[1].str());
      std::string value = strip_quotes(fm[2].str());
      if (key == "PART") f.part = value;
      else if (key == "APPEARANCE") f.appearance = value;
      else f.relative_position = value;
    }
  } else {
    const std::string t = trim(reply);
    std::size_t word_end = 0;
    while (word_end < t.size() && std::isalpha(static_cast<unsigned char>(t[word_end]))) ++word_end;
    const std::string word = upper(t.substr(0, word_end));
    if (word == "APPROVE") {
      known = true;
      f.approve = true;
    } else if (word == "REJECT") {
      known = true;
      std::string rest = t.substr(word_end);
      const auto start = rest.find_first_not_of(" \t+:,-.");
      rest = start == std::string::npos ? std::string() : rest.substr(start);
      rest = strip_quotes(rest);
      std::vector<std::string> parts;
      std::istringstream ss(rest);
      for (std::string piece; std::getline(ss, piece, ';');) parts.push_back(strip_quotes(piece));
      if (parts.size() > 0) f.part = parts[0];
      if (parts.size() > 1) f.appearance = parts[1];
      if (parts.size() > 2) {
        f.relative_position = parts[2];
        for (std::size_t i = 3; i < parts.size(); ++i) f.relative_position += "; " + parts[i];
      }
    }
  }
  if (!known) {
    f.approve = false;
    f.degraded = true;
  } else if (!f.approve && f.part.empty() && f.appearance.empty() && f.relative_position.empty()) {
    f.degraded = true;
  }
  return f;
}

StageContext StageContext::contact(const Observation& obs, const LoopConfig& cfg, SegmentationBackend& seg) {
  StageContext ctx;
  ctx.stage = Stage::contact;
  ctx.obs = &obs;
  ctx.cfg = &cfg;
  ctx.segmentation = &seg;
  if (cfg.mode == LoopMode::som) {
    ctx.partitions = seg.partition(obs.image, cfg.som_candidates);
    ctx.som_overlay = render_som_overlay(obs.image, ctx.partitions).image;
  }
  return ctx;
}

StageContext StageContext::direction(const Observation& obs, const LoopConfig& cfg, const BinaryMask& region) {
  StageContext ctx;
  ctx.stage = Stage::direction;
  ctx.obs = &obs;
  ctx.cfg = &cfg;
  ctx.region_overlay = render_region_overlay(obs.image, region).image;
  return ctx;
}

BinaryMask proposal_mask(const StageContext& ctx, const ProposalRecord& p) {
  if (p.bbox) return ctx.segmentation->segment(ctx.obs->image, *p.bbox);
  BinaryMask out(ctx.obs->image.width(), ctx.obs->image.height());
  for (int c : p.candidates) {
    const auto& part = ctx.partitions.at(static_cast<std::size_t>(c - 1));
    for (int y = 0; y < part.height(); ++y)
      for (int x = 0; x < part.width(); ++x)
        if (part.at(x, y)) out.set(x, y);
  }
  return out;
}

ProposalRecord run_actor_initial(const StageContext& ctx, ModelBackend& model, IterationTrace& trace) {
  const auto text = PromptSet::render(ctx.cfg->prompts.get(template_name(ctx, "initial")), base_vars(ctx));
  return ask_actor(ctx, Role::actor_initial, text, model, trace, 0);
}

Feedback run_verifier_diagnose(const StageContext& ctx, const ProposalRecord& proposal, ModelBackend& model,
                               IterationTrace& trace) {
  auto vars = base_vars(ctx);
  vars["proposal"] = proposal_text(proposal);
  ModelRequest req{Role::verifier_diagnose, ctx.stage,
                   PromptSet::render(ctx.cfg->prompts.get(template_name(ctx, "diagnose")), vars), {}};
  if (ctx.stage == Stage::direction) {
    req.images = {ctx.region_overlay};
  } else if (ctx.cfg->mode == LoopMode::som) {
    req.images = {ctx.som_overlay};
  } else {
    req.images = {ctx.obs->image, proposal_overlay(ctx, proposal)};
  }
  const std::string reply = model.send(req);
  ++trace.diagnose_calls;
  return parse_feedback(reply);
}

ProposalRecord run_actor_refine(const StageContext& ctx, const ProposalRecord& previous, const Feedback& feedback,
                                ModelBackend& model, IterationTrace& trace) {
  auto vars = base_vars(ctx);
  vars["previous"] = proposal_text(previous);
  vars["feedback"] = feedback_text(feedback);
  const auto text = PromptSet::render(ctx.cfg->prompts.get(template_name(ctx, "refine")), vars);
  ProposalRecord p = ask_actor(ctx, Role::actor_refine, text, model, trace, previous.step + 1);
  p.stagnant = same_payload(p, previous);
  return p;
}

int run_verifier_best(const StageContext& ctx, const std::vector<ProposalRecord>& proposals, ModelBackend& model,
                      IterationTrace& trace) {
  if (proposals.empty()) throw Error(Errc::InvalidArgument, "no proposals to choose from", "verifier_best");
  const int n = static_cast<int>(proposals.size());
  if (n == 1) return 0;
  auto vars = base_vars(ctx);
  vars["count"] = std::to_string(n);
  vars["last_index"] = std::to_string(n - 1);
  std::string listing;
  for (int i = 0; i < n; ++i) {
    listing += std::to_string(i) + ": " + proposal_text(proposals[i]);
    if (i + 1 < n) listing += "\n";
  }
  vars["proposals"] = listing;
  ModelRequest req{Role::verifier_best, ctx.stage,
                   PromptSet::render(ctx.cfg->prompts.get(template_name(ctx, "best")), vars), {}};
  if (ctx.stage == Stage::direction) {
    req.images = {ctx.region_overlay};
  } else if (ctx.cfg->mode == LoopMode::som) {
    req.images = {ctx.som_overlay};
  } else {
    req.images.push_back(ctx.obs->image);
    for (const auto& p : proposals) req.images.push_back(proposal_overlay(ctx, p));
  }
  const std::string reply = model.send(req);
  ++trace.best_calls;
  const auto idx = parse_index_reply(reply);
  if (!idx || *idx < 0 || *idx >= n) {
    trace.best_clamped = true;
    return n - 1;
  }
  return *idx;
}

namespace {

// Shared state machine of both stages.
void run_loop(const StageContext& ctx, ModelBackend& model, IterationTrace& trace) {
  const int T = ctx.cfg->max_iterations;
  auto step_stage = [&](int t) { return std::string(stage_name(ctx.stage)) + "/step " + std::to_string(t); };
  try {
    trace.proposals.push_back(run_actor_initial(ctx, model, trace));
  } catch (const Error& e) {
    throw e.with_stage(step_stage(0));
  }
  for (int t = 0;; ++t) {
    Feedback fb;
    try {
      fb = run_verifier_diagnose(ctx, trace.proposals.back(), model, trace);
    } catch (const Error& e) {
      throw e.with_stage(step_stage(t));
    }
    const bool approved = fb.approve;
    trace.feedbacks.push_back(std::move(fb));
    if (approved) {
      trace.termination = Termination::approved;
      trace.final_index = t;
      return;
    }
    if (t == T) break;
    try {
      trace.proposals.push_back(run_actor_refine(ctx, trace.proposals.back(), trace.feedbacks.back(), model, trace));
    } catch (const Error& e) {
      throw e.with_stage(step_stage(t + 1));
    }
  }
  trace.termination = Termination::exhausted;
  try {
    trace.final_index = run_verifier_best(ctx, trace.proposals, model, trace);
  } catch (const Error& e) {
    throw e.with_stage(std::string(stage_name(ctx.stage)) + "/best");
  }
}

IterationTrace new_trace(const Observation& obs, const LoopConfig& cfg, Stage stage) {
  IterationTrace t;
  t.sample_id = obs.sample_id;
  t.stage = stage;
  t.mode = cfg.mode;
  t.max_iterations = cfg.max_iterations;
  return t;
}

}  // namespace

ContactStageResult run_contact_stage(const Observation& obs, const LoopConfig& cfg, Backends backends) {
  cfg.validate();
  ContactStageResult out{BinaryMask(), new_trace(obs, cfg, Stage::contact)};
  const StageContext ctx = StageContext::contact(obs, cfg, backends.segmentation);
  run_loop(ctx, backends.model, out.trace);
  out.region = proposal_mask(ctx, out.trace.proposals[out.trace.final_index]);
  return out;
}

DirectionStageResult run_direction_stage(const Observation& obs, const BinaryMask& region, const LoopConfig& cfg,
                                         Backends backends) {
  cfg.validate();
  if (region.empty()) throw Error(Errc::EmptyMask, "confirmed region is empty", "direction");
  DirectionStageResult out{DiscreteDirection::make(1, 0, 0), new_trace(obs, cfg, Stage::direction)};
  const StageContext ctx = StageContext::direction(obs, cfg, region);
  run_loop(ctx, backends.model, out.trace);
  out.direction = *out.trace.proposals[out.trace.final_index].direction;
  return out;
}

SamplePrediction run_sample(const Observation& obs, const LoopConfig& cfg, Backends backends) {
  SamplePrediction out{run_contact_stage(obs, cfg, backends), {}};
  out.direction = run_direction_stage(obs, out.contact.region, cfg, backends);
  return out;
}

nlohmann::json trace_to_json(const IterationTrace& trace) {
  nlohmann::json proposals = nlohmann::json::array();
  for (const auto& p : trace.proposals) {
    nlohmann::json j;
    j["step"] = p.step;
    j["bbox"] = p.bbox ? nlohmann::json::array({p.bbox->x0, p.bbox->y0, p.bbox->x1, p.bbox->y1}) : nlohmann::json();
    j["candidates"] = p.candidates;
    j["direction"] = p.direction ? nlohmann::json(direction_label(*p.direction)) : nlohmann::json();
    j["reply"] = p.reply;
    j["retried"] = p.retried;
    j["stagnant"] = p.stagnant;
    j["overlay_digest"] = p.overlay_digest;
    proposals.push_back(std::move(j));
  }
  nlohmann::json feedbacks = nlohmann::json::array();
  for (const auto& f : trace.feedbacks) {
    feedbacks.push_back({{"verdict", f.approve ? "approve" : "reject"},
                         {"part", f.part},
                         {"appearance", f.appearance},
                         {"relative_position", f.relative_position},
                         {"raw", f.raw},
                         {"degraded", f.degraded}});
  }
  nlohmann::json j;
  j["kind"] = "trace";
  j["sample_id"] = trace.sample_id;
  j["stage"] = std::string(stage_name(trace.stage));
  j["mode"] = std::string(mode_name(trace.mode));
  j["max_iterations"] = trace.max_iterations;
  j["proposals"] = std::move(proposals);
  j["feedbacks"] = std::move(feedbacks);
  j["final_index"] = trace.final_index;
  j["termination"] = trace.termination == Termination::approved ? "approved" : "exhausted";
  j["best_clamped"] = trace.best_clamped;
  j["calls"] = {{"initial", trace.initial_calls},
                {"diagnose", trace.diagnose_calls},
                {"refine", trace.refine_calls},
                {"best", trace.best_calls},
                {"retries", trace.retries}};
  return j;
}

}  // namespace afforda
