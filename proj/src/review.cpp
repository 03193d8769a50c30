#include "afforda/review.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <iostream>
#include <thread>

#include <httplib.h>

#include "afforda/error.hpp"
#include "afforda/image.hpp"
#include "afforda/metrics.hpp"
#include "afforda/motion.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace afforda {

std::map<std::string, AnnotationSummary> load_annotation_index(const std::string& dir) {
  std::map<std::string, AnnotationSummary> out;
  const fs::path base(dir);
  auto read = [&](const fs::path& file, auto&& apply) {
    if (!fs::exists(file)) return;
    auto log = load_log(file.string());
    if (log.warning) std::cerr << "warning: " << *log.warning << "\n";
    for (const auto& r : log.records) {
      if (!r.is_object() || !r.contains("sample_id") || !r["sample_id"].is_string()) continue;
      apply(out[r["sample_id"].get<std::string>()], r);
    }
  };
  read(base / "annotations.jsonl", [&](AnnotationSummary& a, const json& r) {
    if (r.value("kind", "") != "annotation") return;
    if (r.contains("heatmap") && r["heatmap"].is_string()) {
      const fs::path p(r["heatmap"].get<std::string>());
      a.heatmap = (p.is_absolute() ? p : base / p).string();
    }
    a.stop_frame = r.value("stop_frame", 0);
    a.frame_index = r.value("frame_index", 0);
    a.sampled = r.value("sampled", std::size_t{0});
    a.valid = r.value("valid", std::size_t{0});
    a.dropped = r.value("dropped", std::size_t{0});
    a.out_of_bounds = r.value("out_of_bounds", std::size_t{0});
  });
  read(base / "directions.jsonl", [&](AnnotationSummary& a, const json& r) {
    if (r.value("kind", "") != "direction" || !r.contains("label") || !r["label"].is_string()) return;
    a.direction = parse_direction_label(r["label"].get<std::string>());
    a.trajectories_used = r.value("used", std::size_t{0});
    a.trajectories_dropped = r.value("dropped", std::size_t{0});
  });
  return out;
}

namespace {

HttpResponse json_response(int status, const json& body) { return {status, "application/json", body.dump()}; }

HttpResponse error_response(int status, const std::string& reason) {
  return json_response(status, {{"error", reason}});
}

void draw_disc(RgbImage& img, double cx, double cy, double r, Rgb c) {
  for (int y = static_cast<int>(std::floor(cy - r)); y <= static_cast<int>(std::ceil(cy + r)); ++y)
    for (int x = static_cast<int>(std::floor(cx - r)); x <= static_cast<int>(std::ceil(cx + r)); ++x)
      if ((x - cx) * (x - cx) + (y - cy) * (y - cy) <= r * r) img.set(x, y, c);
}

void draw_line(RgbImage& img, double x0, double y0, double x1, double y1, double width, Rgb c) {
  const double len = std::hypot(x1 - x0, y1 - y0);
  const int steps = std::max(1, static_cast<int>(std::ceil(len * 2)));
  for (int i = 0; i <= steps; ++i) {
    const double t = double(i) / steps;
    draw_disc(img, x0 + t * (x1 - x0), y0 + t * (y1 - y0), width / 2, c);
  }
}

const char* content_type_for(const fs::path& p) {
  const auto ext = p.extension().string();
  if (ext == ".html") return "text/html";
  if (ext == ".js") return "text/javascript";
  if (ext == ".css") return "text/css";
  if (ext == ".png") return "image/png";
  if (ext == ".svg") return "image/svg+xml";
  if (ext == ".json") return "application/json";
  return "application/octet-stream";
}

}  // namespace

RgbImage render_review_overlay(const RgbImage& image, const AffordanceMap& heatmap,
                               const std::optional<DiscreteDirection>& direction) {
  AffordanceMap map = heatmap;
  if (map.width() != image.width() || map.height() != image.height()) {
    map = resample_bilinear(map, image.width(), image.height());
  }
  RgbImage out = image;
  const double peak = map.max();
  if (peak > 0) {
    for (int y = 0; y < image.height(); ++y)
      for (int x = 0; x < image.width(); ++x) {
        const double a = 0.6 * map.at(x, y) / peak;
        if (a > 0.004) out.blend(x, y, {255, 0, 0}, a);
      }
  }
  if (!direction) return out;
  const auto [px, py] = map.argmax();
  const Vec3 cam = AxisMapping::camera_default().to_camera(direction->vector());
  const double planar = std::hypot(cam.x, cam.y);
  constexpr Rgb kArrow{255, 255, 0};
  if (planar < 1e-12) {
    // Motion along the optical axis: a ring at the peak.
    const double r = 0.06 * std::min(image.width(), image.height());
    for (int k = 0; k < 64; ++k) {
      const double a = 2 * M_PI * k / 64;
      draw_disc(out, px + r * std::cos(a), py + r * std::sin(a), 1.5, kArrow);
    }
    return out;
  }
  const double len = 0.2 * std::min(image.width(), image.height());
  const double ux = cam.x / planar, uy = cam.y / planar;
  const double ex = px + len * ux, ey = py + len * uy;
  draw_line(out, px, py, ex, ey, 3, kArrow);
  const double head = 0.35 * len;
  for (double s : {-1.0, 1.0}) {
    const double ang = s * M_PI / 6;
    const double hx = -(ux * std::cos(ang) - uy * std::sin(ang));
    const double hy = -(ux * std::sin(ang) + uy * std::cos(ang));
    draw_line(out, ex, ey, ex + head * hx, ey + head * hy, 3, kArrow);
  }
  return out;
}

ReviewService::ReviewService(Manifest manifest, std::map<std::string, AnnotationSummary> annotations,
                             Options opts)
    : manifest_(std::move(manifest)), annotations_(std::move(annotations)), opts_(std::move(opts)) {
  if (!opts_.clock) {
    opts_.clock = [] {
      return std::chrono::duration_cast<std::chrono::seconds>(std::chrono::system_clock::now().time_since_epoch())
          .count();
    };
  }
  auto state = std::make_shared<State>();
  if (!opts_.decisions_log.empty() && fs::exists(opts_.decisions_log)) {
    auto log = load_log(opts_.decisions_log);
    load_warning_ = log.warning;
    for (const auto& r : log.records) {
      if (r.is_object() && r.value("kind", "") == "decision") state->log.push_back(decision_from_json(r));
    }
  }
  for (const auto& d : effective_decisions(state->log)) state->current[d.sample_id] = d;
  state_ = std::move(state);
  if (!opts_.decisions_log.empty()) writer_ = std::make_unique<LogWriter>(opts_.decisions_log);
}

ReviewService::~ReviewService() { stop(); }

std::shared_ptr<const ReviewService::State> ReviewService::snapshot() const { return std::atomic_load(&state_); }

std::string ReviewService::status_of(const State& s, const std::string& id) const {
  auto it = s.current.find(id);
  if (it == s.current.end()) return "pending";
  switch (it->second.verdict) {
    case Verdict::accept: return "accepted";
    case Verdict::reject: return "rejected";
    case Verdict::flag: return "flagged";
  }
  return "pending";
}

HttpResponse ReviewService::handle(const std::string& method, const std::string& path,
                                   const std::map<std::string, std::string>& query, const std::string& body) {
  try {
    static const std::string prefix = "/api/samples/";
    if (path == "/api/samples") {
      if (method != "GET") return error_response(405, "method not allowed");
      return list_samples(query);
    }
    if (path == "/api/stats") {
      if (method != "GET") return error_response(405, "method not allowed");
      return get_stats();
    }
    if (path.rfind(prefix, 0) == 0) {
      std::string rest = path.substr(prefix.size());
      const auto slash = rest.find('/');
      const std::string id = rest.substr(0, slash);
      const std::string tail = slash == std::string::npos ? "" : rest.substr(slash);
      if (id.empty()) return error_response(404, "no sample id");
      if (tail.empty()) {
        if (method != "GET") return error_response(405, "method not allowed");
        return get_sample(id);
      }
      if (tail == "/overlay.png") {
        if (method != "GET") return error_response(405, "method not allowed");
        return get_overlay(id);
      }
      if (tail == "/decision") {
        if (method != "POST") return error_response(405, "method not allowed");
        return post_decision(id, body);
      }
      return error_response(404, "unknown endpoint");
    }
    if (path.rfind("/api/", 0) == 0) return error_response(404, "unknown endpoint");
    if (method != "GET") return error_response(405, "method not allowed");
    return get_static(path);
  } catch (const Error& e) {
    return error_response(500, e.what());
  }
}

HttpResponse ReviewService::list_samples(const std::map<std::string, std::string>& query) {
  for (const auto& [k, v] : query) {
    if (k != "status" && k != "cursor" && k != "limit") return error_response(400, "unknown parameter " + k);
  }
  std::optional<std::string> status;
  if (auto it = query.find("status"); it != query.end()) {
    static const std::vector<std::string> allowed = {"pending", "accepted", "rejected", "flagged"};
    if (std::find(allowed.begin(), allowed.end(), it->second) == allowed.end()) {
      return error_response(400, "status must be pending, accepted, rejected or flagged");
    }
    status = it->second;
  }
  auto parse_count = [](const std::string& s) -> std::optional<long> {
    if (s.empty() || s.size() > 9 || !std::all_of(s.begin(), s.end(), ::isdigit)) return std::nullopt;
    return std::stol(s);
  };
  long cursor = 0, limit = 50;
  if (auto it = query.find("cursor"); it != query.end()) {
    auto v = parse_count(it->second);
    if (!v) return error_response(400, "bad cursor");
    cursor = *v;
  }
  if (auto it = query.find("limit"); it != query.end()) {
    auto v = parse_count(it->second);
    if (!v || *v < 1 || *v > 500) return error_response(400, "limit must be in [1, 500]");
    limit = *v;
  }
  const auto state = snapshot();
  std::vector<const SampleRecord*> matching;
  for (const auto& s : manifest_.samples) {
    if (!status || status_of(*state, s.id) == *status) matching.push_back(&s);
  }
  json items = json::array();
  const long end = std::min<long>(static_cast<long>(matching.size()), cursor + limit);
  for (long i = cursor; i < end; ++i) {
    const auto& s = *matching[static_cast<std::size_t>(i)];
    const bool annotated = annotations_.count(s.id) && annotations_.at(s.id).heatmap;
    items.push_back({{"id", s.id},
                     {"instruction", s.narration},
                     {"status", status_of(*state, s.id)},
                     {"thumbnail", annotated ? json("/api/samples/" + s.id + "/overlay.png") : json()}});
  }
  return json_response(200, {{"items", std::move(items)},
                             {"total", matching.size()},
                             {"next_cursor", end < static_cast<long>(matching.size()) ? json(std::to_string(end))
                                                                                       : json()}});
}

HttpResponse ReviewService::get_sample(const std::string& id) {
  const SampleRecord* s = manifest_.find_sample(id);
  if (!s) return error_response(404, "unknown sample " + id);
  const auto state = snapshot();
  json j = {{"id", s->id},
            {"instruction", s->narration},
            {"image", {{"width", s->image.width}, {"height", s->image.height}}},
            {"source", s->source == SampleSource::real_world ? "real_world" : "laboratory"},
            {"status", status_of(*state, id)}};
  auto dec = state->current.find(id);
  j["decision"] = dec == state->current.end() ? json() : decision_to_json(dec->second);
  auto it = annotations_.find(id);
  if (it == annotations_.end()) {
    j["annotation"] = json();
    j["direction"] = json();
  } else {
    const auto& a = it->second;
    j["annotation"] = a.heatmap ? json{{"stop_frame", a.stop_frame},
                                       {"frame_index", a.frame_index},
                                       {"sampled", a.sampled},
                                       {"valid", a.valid},
                                       {"dropped", a.dropped},
                                       {"out_of_bounds", a.out_of_bounds},
                                       {"overlay", "/api/samples/" + id + "/overlay.png"}}
                                : json();
    j["direction"] = a.direction ? json(direction_label(*a.direction)) : json();
  }
  return json_response(200, j);
}

HttpResponse ReviewService::get_overlay(const std::string& id) {
  const SampleRecord* s = manifest_.find_sample(id);
  if (!s) return error_response(404, "unknown sample " + id);
  auto it = annotations_.find(id);
  if (it == annotations_.end() || !it->second.heatmap) return error_response(404, "sample " + id + " has no annotation");
  const RgbImage image = load_rgb(manifest_.resolve(s->image.path));
  const AffordanceMap heat = load_heatmap(*it->second.heatmap);
  const RgbImage overlay = render_review_overlay(image, heat, it->second.direction);
  const auto png = encode_png(overlay);
  return {200, "image/png", std::string(png.begin(), png.end())};
}

HttpResponse ReviewService::post_decision(const std::string& id, const std::string& body) {
  if (!manifest_.find_sample(id)) return error_response(404, "unknown sample " + id);
  json j;
  try {
    j = json::parse(body);
  } catch (const json::exception&) {
    return error_response(409, "body is not JSON");
  }
  if (!j.is_object()) return error_response(409, "body must be an object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    const auto& k = it.key();
    if (k != "sample_id" && k != "verdict" && k != "failure_mode" && k != "reviewer") {
      return error_response(409, "unexpected field " + k);
    }
  }
  if (j.contains("sample_id") && (!j["sample_id"].is_string() || j["sample_id"].get<std::string>() != id)) {
    return error_response(409, "sample_id does not match the URL");
  }
  j["sample_id"] = id;
  ReviewDecision d;
  try {
    d = decision_from_json(j);
  } catch (const Error& e) {
    return error_response(409, e.detail());
  }
  std::lock_guard lock(write_mu_);
  d.timestamp = opts_.clock();
  auto current = snapshot();
  bool repeat = false;
  for (auto it = current->log.rbegin(); it != current->log.rend(); ++it) {
    if (it->sample_id == id && it->reviewer == d.reviewer) {
      repeat = it->verdict == d.verdict && it->failure_mode == d.failure_mode;
      break;
    }
  }
  if (!repeat) {
    if (writer_) {
      writer_->append(decision_to_json(d));
      writer_->flush();
    }
    auto next = std::make_shared<State>();
    next->log = current->log;
    next->log.push_back(d);
    for (const auto& e : effective_decisions(next->log)) next->current[e.sample_id] = e;
    std::atomic_store(&state_, std::shared_ptr<const State>(std::move(next)));
  }
  const auto state = snapshot();
  return json_response(200, {{"sample_id", id}, {"status", status_of(*state, id)}, {"recorded", !repeat}});
}

HttpResponse ReviewService::get_stats() {
  const auto state = snapshot();
  std::map<std::string, int> by_status = {{"pending", 0}, {"accepted", 0}, {"rejected", 0}, {"flagged", 0}};
  std::map<std::string, int> by_mode;
  for (auto f : {FailureMode::wrong_hand, FailureMode::occluded_hand, FailureMode::noisy_contact_frame,
                 FailureMode::homography_drift, FailureMode::other}) {
    by_mode[std::string(failure_mode_name(f))] = 0;
  }
  for (const auto& s : manifest_.samples) {
    ++by_status[status_of(*state, s.id)];
    auto it = state->current.find(s.id);
    if (it != state->current.end() && it->second.failure_mode) {
      ++by_mode[std::string(failure_mode_name(*it->second.failure_mode))];
    }
  }
  return json_response(200, {{"total", manifest_.samples.size()},
                             {"status", by_status},
                             {"failure_mode", by_mode},
                             {"decisions_logged", state->log.size()}});
}

HttpResponse ReviewService::get_static(const std::string& path) {
  if (opts_.static_dir.empty()) return error_response(404, "no static directory configured");
  std::string rel = path == "/" || path.empty() ? "index.html" : path.substr(1);
  const fs::path p = fs::path(rel).lexically_normal();
  if (p.empty() || p.is_absolute() || *p.begin() == "..") return error_response(400, "bad path");
  const fs::path full = fs::path(opts_.static_dir) / p;
  if (!fs::is_regular_file(full)) return error_response(404, "not found: " + path);
  const auto bytes = read_file_bytes(full.string());
  return {200, content_type_for(full), std::string(bytes.begin(), bytes.end())};
}

void ReviewService::setup_server() {
  server_ = std::make_unique<httplib::Server>();
  auto route = [this](const httplib::Request& req, httplib::Response& res) {
    std::map<std::string, std::string> query;
    for (const auto& [k, v] : req.params) {
      if (query.count(k)) {
        res.status = 400;
        res.set_content(json{{"error", "repeated parameter " + k}}.dump(), "application/json");
        return;
      }
      query[k] = v;
    }
    const HttpResponse r = handle(req.method, req.path, query, req.body);
    res.status = r.status;
    res.set_content(r.body, r.content_type);
  };
  server_->Get(".*", route);
  server_->Post(".*", route);
}

void ReviewService::listen(const std::string& host, int port) {
  setup_server();
  if (!server_->listen(host, port)) throw Error(Errc::IoError, "cannot listen on " + host + ":" + std::to_string(port));
}

int ReviewService::start_background(const std::string& host) {
  setup_server();
  const int port = server_->bind_to_any_port(host);
  if (port <= 0) throw Error(Errc::IoError, "cannot bind " + host);
  server_thread_ = std::thread([this] { server_->listen_after_bind(); });
  server_->wait_until_ready();
  return port;
}

void ReviewService::stop() {
  if (server_) server_->stop();
  if (server_thread_.joinable()) server_thread_.join();
  if (writer_) writer_->close();
}

}  // namespace afforda
