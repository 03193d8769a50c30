#include "afforda/cli.hpp"

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <memory>
#include <set>

#include <CLI11.hpp>

#include "afforda/core.hpp"
#include "afforda/error.hpp"
#include "afforda/image.hpp"
#include "afforda/io.hpp"
#include "afforda/metrics.hpp"
#include "afforda/parallel.hpp"
#include "afforda/review.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace afforda {

namespace {

void check_keys(const json& j, const std::string& section, const std::set<std::string>& allowed) {
  if (!j.is_object()) throw Error(Errc::ParseError, "config section '" + section + "' must be an object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!allowed.count(it.key())) {
      throw Error(Errc::ParseError, "config: unknown key '" + section + "." + it.key() + "'");
    }
  }
}

template <class T>
void read(const json& j, const std::string& section, const char* key, T& dst) {
  if (!j.contains(key)) return;
  try {
    dst = j.at(key).get<T>();
  } catch (const json::exception&) {
    throw Error(Errc::ParseError, "config: '" + section + "." + key + "' has the wrong type");
  }
}

}  // namespace

RunConfig parse_run_config(const json& j) {
  RunConfig c;
  check_keys(j, "", {"contact", "ransac", "motion", "loop", "backend", "prediction"});
  if (j.contains("contact")) {
    const auto& s = j["contact"];
    check_keys(s, "contact", {"count", "sigma"});
    read(s, "contact", "count", c.contact.count);
    read(s, "contact", "sigma", c.contact.sigma);
  }
  if (j.contains("ransac")) {
    const auto& s = j["ransac"];
    check_keys(s, "ransac", {"inlier_px", "max_iters", "confidence"});
    read(s, "ransac", "inlier_px", c.contact.ransac.inlier_px);
    read(s, "ransac", "max_iters", c.contact.ransac.max_iters);
    read(s, "ransac", "confidence", c.contact.ransac.confidence);
  }
  if (j.contains("motion")) {
    const auto& s = j["motion"];
    check_keys(s, "motion", {"max_len", "dbscan"});
    read(s, "motion", "max_len", c.motion.max_len);
    if (s.contains("dbscan")) {
      check_keys(s["dbscan"], "motion.dbscan", {"eps", "min_pts"});
      DbscanConfig d;
      read(s["dbscan"], "motion.dbscan", "eps", d.eps);
      read(s["dbscan"], "motion.dbscan", "min_pts", d.min_pts);
      d.validate();
      c.motion.dbscan = d;
    }
  }
  if (j.contains("loop")) {
    const auto& s = j["loop"];
    check_keys(s, "loop", {"max_iterations", "mode", "som_candidates", "prompt_dir"});
    read(s, "loop", "max_iterations", c.loop.max_iterations);
    read(s, "loop", "som_candidates", c.loop.som_candidates);
    std::string mode(mode_name(c.loop.mode));
    read(s, "loop", "mode", mode);
    c.loop.mode = parse_mode(mode);
    std::string dir;
    read(s, "loop", "prompt_dir", dir);
    if (!dir.empty()) c.loop.prompts = PromptSet::with_overrides(dir);
  }
  if (j.contains("backend")) {
    const auto& s = j["backend"];
    check_keys(s, "backend", {"url", "model", "timeout_seconds", "max_tokens"});
    read(s, "backend", "url", c.backend.url);
    read(s, "backend", "model", c.backend.model);
    read(s, "backend", "timeout_seconds", c.backend.timeout_seconds);
    read(s, "backend", "max_tokens", c.backend.max_tokens);
  }
  if (j.contains("prediction")) {
    const auto& s = j["prediction"];
    check_keys(s, "prediction", {"grid_step", "heatmap_sigma"});
    read(s, "prediction", "grid_step", c.grid_step);
    read(s, "prediction", "heatmap_sigma", c.heatmap_sigma);
  }
  if (c.contact.count < 1) throw Error(Errc::ParseError, "config: contact.count must be >= 1");
  if (!(c.contact.sigma > 0) || !(c.heatmap_sigma > 0)) throw Error(Errc::ParseError, "config: sigma must be > 0");
  if (c.grid_step < 1) throw Error(Errc::ParseError, "config: prediction.grid_step must be >= 1");
  if (c.motion.max_len < 1) throw Error(Errc::ParseError, "config: motion.max_len must be >= 1");
  return c;
}

RunConfig load_run_config(const std::string& path) {
  const auto bytes = read_file_bytes(path);
  try {
    return parse_run_config(json::parse(bytes.begin(), bytes.end()));
  } catch (const json::exception& e) {
    throw Error(Errc::ParseError, std::string("config is not valid JSON: ") + e.what(), path);
  } catch (const Error& e) {
    throw e.with_stage(path);
  }
}

int exit_code_for(const Error& e) {
  switch (e.code()) {
    case Errc::BackendError:
    case Errc::UnparseableReply:
    case Errc::InvalidDirectionLabel:
      return kExitBackend;
    default:
      return kExitData;
  }
}

namespace {

struct Options {
  std::string manifest;
  std::string out;
  std::string config;
  int workers = 1;
  std::uint64_t seed = 0;
  std::string backend_url;
  std::string mode;
  int max_iterations = -1;
  std::string replay;
  std::string predictions;
  std::string decisions;
  std::string static_dir;
  std::string host = "127.0.0.1";
  int port = 8080;
};

struct SampleFailure {
  std::string sample_id;
  Error error;
};

class Reporter {
 public:
  Reporter(std::ostream& out, std::ostream& err) : out_(out), err_(err) {}

  void fail(const SampleFailure& f) {
    err_ << "error: sample " << f.sample_id << ": " << f.error.what() << "\n";
    code_ = std::max(code_, exit_code_for(f.error));
  }
  std::ostream& out() { return out_; }
  int code() const { return code_; }

 private:
  std::ostream& out_;
  std::ostream& err_;
  int code_ = kExitOk;
};

RunConfig resolve_config(const Options& o) {
  RunConfig c = o.config.empty() ? RunConfig{} : load_run_config(o.config);
  c.contact.seed = o.seed;
  c.contact.ransac.seed = o.seed;
  if (!o.mode.empty()) c.loop.mode = parse_mode(o.mode);
  if (o.max_iterations >= 0) c.loop.max_iterations = o.max_iterations;
  if (!o.backend_url.empty()) c.backend.url = o.backend_url;
  return c;
}

std::string join(const fs::path& a, const std::string& b) { return (a / b).string(); }

template <class Fn>
void for_each_sample(std::size_t n, int workers, std::vector<std::optional<SampleFailure>>& failures,
                     const std::vector<std::string>& ids, Fn&& fn) {
  failures.assign(n, std::nullopt);
  parallel_for(n, workers, [&](std::size_t i) {
    try {
      fn(i);
    } catch (const Error& e) {
      failures[i] = SampleFailure{ids[i], e};
    } catch (const std::exception& e) {
      failures[i] = SampleFailure{ids[i], Error(Errc::IoError, e.what())};
    }
  });
}

int cmd_annotate(const Options& o, Reporter& rep) {
  const RunConfig cfg = resolve_config(o);
  const Manifest m = load_manifest(o.manifest);
  const fs::path out(o.out);
  fs::create_directories(out / "heatmaps");
  const std::size_t n = m.clips.size();
  std::vector<std::string> ids;
  for (const auto& c : m.clips) ids.push_back(c.sample_id);
  std::vector<std::optional<json>> records(n);
  std::vector<std::optional<SampleFailure>> failures;
  for_each_sample(n, o.workers, failures, ids, [&](std::size_t i) {
    const ClipRecord& rec = m.clips[i];
    const InteractionClip clip = load_clip(m, rec);
    const ContactAnnotation ann = annotate_contact(clip, cfg.contact);
    const std::string rel = "heatmaps/" + rec.sample_id + ".png";
    save_heatmap(join(out, rel), ann.map);
    const auto peak = ann.map.argmax();
    records[i] = json{{"kind", "annotation"},
                      {"sample_id", rec.sample_id},
                      {"heatmap", rel},
                      {"stop_frame", ann.provenance.stop_index},
                      {"frame_index", ann.frame_index},
                      {"sampled", ann.provenance.sampled},
                      {"valid", ann.provenance.valid_points.size()},
                      {"dropped", ann.provenance.dropped},
                      {"out_of_bounds", ann.provenance.out_of_bounds},
                      {"peak", {peak[0], peak[1]}}};
  });
  LogWriter log(join(out, "annotations.jsonl"), true);
  for (std::size_t i = 0; i < n; ++i) {
    if (failures[i]) {
      rep.fail(*failures[i]);
      continue;
    }
    const json& r = *records[i];
    log.append(r);
    rep.out() << "annotated " << ids[i] << ": stop frame " << r["stop_frame"].get<int>() << ", "
              << r["valid"].get<std::size_t>() << "/" << r["sampled"].get<std::size_t>() << " points valid, peak ("
              << r["peak"][0].get<int>() << ", " << r["peak"][1].get<int>() << ")\n";
  }
  log.close();
  return rep.code();
}

int cmd_direction(const Options& o, Reporter& rep) {
  const RunConfig cfg = resolve_config(o);
  const Manifest m = load_manifest(o.manifest);
  const fs::path out(o.out);
  fs::create_directories(out);
  std::vector<const ClipRecord*> clips;
  std::vector<std::string> ids;
  for (const auto& c : m.clips) {
    if (!c.trajectories) {
      rep.out() << "skipped " << c.sample_id << ": no trajectories\n";
      continue;
    }
    clips.push_back(&c);
    ids.push_back(c.sample_id);
  }
  std::vector<std::optional<json>> records(clips.size());
  std::vector<std::optional<SampleFailure>> failures;
  for_each_sample(clips.size(), o.workers, failures, ids, [&](std::size_t i) {
    const auto trajs = load_trajectories(m.resolve(*clips[i]->trajectories));
    const MotionResult r = extract_motion_direction(trajs, cfg.motion);
    const auto& cb = r.codebook_direction;
    const auto& cam = r.camera_direction;
    records[i] = json{{"kind", "direction"},
                      {"sample_id", ids[i]},
                      {"label", direction_label(r.discrete)},
                      {"codebook_vector", {cb.x, cb.y, cb.z}},
                      {"camera_vector", {cam.x, cam.y, cam.z}},
                      {"used", r.used},
                      {"dropped", r.dropped},
                      {"ambiguous", r.ambiguous}};
  });
  LogWriter log(join(out, "directions.jsonl"), true);
  for (std::size_t i = 0; i < clips.size(); ++i) {
    if (failures[i]) {
      rep.fail(*failures[i]);
      continue;
    }
    log.append(*records[i]);
    rep.out() << "direction " << ids[i] << ": " << (*records[i])["label"].get<std::string>() << " ("
              << (*records[i])["used"].get<std::size_t>() << " trajectories used)\n";
  }
  log.close();
  return rep.code();
}

std::string cell(const std::optional<double>& v) {
  if (!v) return "-";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3f", *v);
  return buf;
}

json report_json(const MetricReport& r, const char* kind) {
  auto opt = [](const std::optional<double>& v) { return v ? json(*v) : json(); };
  return {{"kind", kind},       {"sample_id", r.sample_id}, {"sim", opt(r.sim)}, {"nss", opt(r.nss)},
          {"auc_j", opt(r.auc_j)}, {"cs", opt(r.cs)},          {"flags", r.flags}};
}

std::vector<Prediction> load_predictions(const Manifest& m, const std::string& path) {
  std::vector<Prediction> preds;
  if (fs::is_directory(path)) {
    const auto index = load_annotation_index(path);
    for (const auto& s : m.samples) {
      auto it = index.find(s.id);
      if (it == index.end()) continue;
      Prediction p{s.id, std::nullopt, it->second.direction};
      if (it->second.heatmap) p.map = load_heatmap(*it->second.heatmap);
      preds.push_back(std::move(p));
    }
    return preds;
  }
  const fs::path base = fs::path(path).parent_path();
  const auto log = load_log(path);
  if (log.warning) std::cerr << "warning: " << *log.warning << "\n";
  for (const auto& r : log.records) {
    if (!r.is_object() || r.value("kind", "") != "prediction") continue;
    if (!r.contains("sample_id") || !r["sample_id"].is_string()) {
      throw Error(Errc::ParseError, path + ": prediction without sample_id");
    }
    Prediction p{r["sample_id"].get<std::string>(), std::nullopt, std::nullopt};
    if (r.contains("heatmap") && r["heatmap"].is_string()) {
      const fs::path hp(r["heatmap"].get<std::string>());
      p.map = load_heatmap((hp.is_absolute() ? hp : base / hp).string());
    }
    if (r.contains("direction") && r["direction"].is_string()) {
      p.direction = parse_direction_label(r["direction"].get<std::string>());
    }
    preds.push_back(std::move(p));
  }
  return preds;
}

int cmd_eval(const Options& o, Reporter& rep) {
  const Manifest m = load_manifest(o.manifest);
  std::vector<SampleTruth> truths;
  for (const auto& rec : m.samples) {
    Sample s = load_sample(m, rec);
    truths.push_back({s.id, std::move(s.gt_map), s.gt_direction});
  }
  const auto preds = load_predictions(m, o.predictions);
  const BatchResult res = evaluate_batch(preds, truths, o.workers);
  std::size_t id_w = 6;
  for (const auto& r : res.reports) id_w = std::max(id_w, r.sample_id.size());
  char line[256];
  auto row = [&](const std::string& id, const std::string& a, const std::string& b, const std::string& c,
                 const std::string& d) {
    std::snprintf(line, sizeof line, "%-*s %8s %8s %8s %8s\n", static_cast<int>(id_w), id.c_str(), a.c_str(),
                  b.c_str(), c.c_str(), d.c_str());
    rep.out() << line;
  };
  row("sample", "SIM", "NSS", "AUC-J", "CS");
  for (const auto& r : res.reports) row(r.sample_id, cell(r.sim), cell(r.nss), cell(r.auc_j), cell(r.cs));
  row("mean", cell(res.mean.sim), cell(res.mean.nss), cell(res.mean.auc_j), cell(res.mean.cs));
  fs::create_directories(o.out);
  LogWriter log(join(o.out, "eval.jsonl"), true);
  for (const auto& r : res.reports) log.append(report_json(r, "metric"));
  log.append(report_json(res.mean, "metric_mean"));
  log.close();
  for (const auto& e : res.errors) rep.fail({e.sample_id, Error(Errc::InvalidArgument, e.message, "eval")});
  return rep.code();
}

int cmd_predict(const Options& o, Reporter& rep) {
  RunConfig cfg = resolve_config(o);
  cfg.loop.validate();
  const Manifest m = load_manifest(o.manifest);
  const fs::path out(o.out);
  fs::create_directories(out / "pred_heatmaps");

  std::unique_ptr<ModelBackend> shared;
  const bool per_sample = !o.replay.empty() && fs::is_directory(o.replay);
  int workers = o.workers;
  if (!o.replay.empty() && !per_sample) {
    shared = std::make_unique<ReplayBackend>(ReplayBackend::read_script(o.replay));
    // One script serves every sample in manifest order.
    workers = 1;
  } else if (o.replay.empty()) {
    if (cfg.backend.url.empty()) throw Error(Errc::InvalidArgument, "predict needs --replay or --backend-url", "usage");
    cfg.backend.token = OpenAIBackend::token_from_env();
    shared = std::make_unique<OpenAIBackend>(cfg.backend);
  }
  GridSegmentationStub seg;

  const std::size_t n = m.samples.size();
  std::vector<std::string> ids;
  for (const auto& s : m.samples) ids.push_back(s.id);
  std::vector<std::optional<std::pair<json, json>>> traces(n);
  std::vector<std::optional<json>> records(n);
  std::vector<std::optional<SampleFailure>> failures;
  for_each_sample(n, workers, failures, ids, [&](std::size_t i) {
    const SampleRecord& rec = m.samples[i];
    Observation obs{rec.id, load_rgb(m.resolve(rec.image.path)), parse_narration(rec.narration)};
    obs.instruction.raw = rec.narration;
    if (obs.image.width() != rec.image.width || obs.image.height() != rec.image.height) {
      throw Error(Errc::ShapeMismatch, "image size differs from the manifest", "predict");
    }
    std::unique_ptr<ModelBackend> own;
    ModelBackend* model = shared.get();
    if (per_sample) {
      own = std::make_unique<ReplayBackend>(ReplayBackend::read_script(join(o.replay, rec.id + ".txt")));
      model = own.get();
    }
    const SamplePrediction p = run_sample(obs, cfg.loop, {*model, seg});
    const auto heat = mask_to_heatmap(p.contact.region, cfg.grid_step, cfg.heatmap_sigma);
    const std::string rel = "pred_heatmaps/" + rec.id + ".png";
    save_heatmap(join(out, rel), heat.map);
    traces[i] = {trace_to_json(p.contact.trace), trace_to_json(p.direction.trace)};
    records[i] = json{{"kind", "prediction"},
                      {"sample_id", rec.id},
                      {"heatmap", rel},
                      {"direction", direction_label(p.direction.direction)},
                      {"contact_termination", p.contact.trace.termination == Termination::approved ? "approved"
                                                                                             : "exhausted"},
                      {"direction_termination",
                       p.direction.trace.termination == Termination::approved ? "approved" : "exhausted"}};
  });
  LogWriter trace_log(join(out, "traces.jsonl"), true);
  LogWriter pred_log(join(out, "predictions.jsonl"), true);
  trace_log.append(json{{"kind", "run"},
                        {"mode", std::string(mode_name(cfg.loop.mode))},
                        {"max_iterations", cfg.loop.max_iterations},
                        {"seed", o.seed}});
  for (std::size_t i = 0; i < n; ++i) {
    if (failures[i]) {
      rep.fail(*failures[i]);
      continue;
    }
    trace_log.append(traces[i]->first);
    trace_log.append(traces[i]->second);
    pred_log.append(*records[i]);
    rep.out() << "predicted " << ids[i] << ": " << (*records[i])["direction"].get<std::string>() << " (contact "
              << (*records[i])["contact_termination"].get<std::string>() << ", direction "
              << (*records[i])["direction_termination"].get<std::string>() << ")\n";
  }
  trace_log.close();
  pred_log.close();
  return rep.code();
}

int cmd_review_serve(const Options& o, Reporter& rep) {
  Manifest m = load_manifest(o.manifest);
  auto annotations = o.out.empty() ? std::map<std::string, AnnotationSummary>{} : load_annotation_index(o.out);
  ReviewService::Options so;
  so.decisions_log = !o.decisions.empty() ? o.decisions : join(o.out.empty() ? "." : o.out, "decisions.jsonl");
  so.static_dir = o.static_dir;
  ReviewService svc(std::move(m), std::move(annotations), so);
  if (svc.load_warning()) std::cerr << "warning: " << *svc.load_warning() << "\n";
  rep.out() << "serving on http://" << o.host << ":" << o.port << "\n" << std::flush;
  svc.listen(o.host, o.port);
  return kExitOk;
}

int cmd_export(const Options& o, Reporter& rep) {
  const Manifest m = load_manifest(o.manifest);
  const auto decisions = load_decisions(o.decisions);
  const Manifest filtered = export_accepted(m, decisions);
  const fs::path target(o.out);
  if (target.has_parent_path()) fs::create_directories(target.parent_path());
  save_manifest(rebase_manifest(filtered, target.parent_path().string()), o.out);
  rep.out() << "exported " << filtered.samples.size() << " of " << m.samples.size() << " samples to " << o.out
            << "\n";
  return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Egocentric affordance annotation, evaluation and review toolkit", "afforda"};
  app.require_subcommand(1);
  Options o;

  auto add_common = [&](CLI::App* sub, bool needs_out) {
    sub->add_option("--manifest", o.manifest, "Manifest (JSONL)")->required();
    auto* opt = sub->add_option("--out", o.out, "Output directory");
    if (needs_out) opt->required();
    sub->add_option("--config", o.config, "JSON config file");
    sub->add_option("--workers", o.workers, "Worker threads")->check(CLI::PositiveNumber);
    sub->add_option("--seed", o.seed, "Random seed");
  };
  auto* annotate = app.add_subcommand("annotate", "Contact-region heatmaps for every clip");
  add_common(annotate, true);
  auto* direction = app.add_subcommand("direction", "Discretized motion directions from trajectories");
  add_common(direction, true);
  auto* eval = app.add_subcommand("eval", "Score predictions against the manifest ground truth");
  add_common(eval, true);
  eval->add_option("--predictions", o.predictions, "Predictions JSONL or an annotation output directory")
      ->required();
  auto* predict = app.add_subcommand("predict", "Run the Actor/Verifier loop over a manifest");
  add_common(predict, true);
  predict->add_option("--backend-url", o.backend_url, "Chat-completions endpoint");
  predict->add_option("--replay", o.replay, "Replay script, or a directory of <sample id>.txt scripts");
  predict->add_option("--mode", o.mode, "coordinate or som")->check(CLI::IsMember({"coordinate", "som"}));
  predict->add_option("--max-iterations", o.max_iterations, "Refinement budget T")->check(CLI::NonNegativeNumber);
  auto* serve = app.add_subcommand("review-serve", "Serve the review API and UI");
  add_common(serve, false);
  serve->add_option("--decisions", o.decisions, "Decision log (default <out>/decisions.jsonl)");
  serve->add_option("--static", o.static_dir, "Static UI directory served at /");
  serve->add_option("--host", o.host, "Bind address");
  serve->add_option("--port", o.port, "Port")->check(CLI::Range(1, 65535));
  auto* exp = app.add_subcommand("export", "Manifest restricted to accepted samples");
  exp->add_option("--manifest", o.manifest, "Manifest (JSONL)")->required();
  exp->add_option("--decisions", o.decisions, "Decision log")->required();
  exp->add_option("--out", o.out, "Output manifest path")->required();

  std::vector<std::string> argv_store = {"afforda"};
  argv_store.insert(argv_store.end(), args.begin(), args.end());
  std::vector<char*> argv;
  for (auto& a : argv_store) argv.push_back(a.data());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n" << app.help();
    return kExitUsage;
  }

  Reporter rep(out, err);
  try {
    if (annotate->parsed()) return cmd_annotate(o, rep);
    if (direction->parsed()) return cmd_direction(o, rep);
    if (eval->parsed()) return cmd_eval(o, rep);
    if (predict->parsed()) return cmd_predict(o, rep);
    if (serve->parsed()) return cmd_review_serve(o, rep);
    if (exp->parsed()) return cmd_export(o, rep);
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    if (e.stage() == "usage") return kExitUsage;
    return exit_code_for(e);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitData;
  }
  err << app.help();
  return kExitUsage;
}

}  // namespace afforda
