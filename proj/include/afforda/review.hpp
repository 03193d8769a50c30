#pragma once

// HTTP review service over a manifest, its annotation outputs and an
// append-only decision log.

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <thread>
#include <string>
#include <vector>

#include <json.hpp>

#include "afforda/image.hpp"
#include "afforda/io.hpp"

namespace httplib {
class Server;
}

namespace afforda {

// Per-sample annotation outputs as written by `annotate` and `direction`.
struct AnnotationSummary {
  std::optional<std::string> heatmap;  // resolved path
  int stop_frame = 0;
  int frame_index = 0;
  std::size_t sampled = 0;
  std::size_t valid = 0;
  std::size_t dropped = 0;
  std::size_t out_of_bounds = 0;
  std::optional<DiscreteDirection> direction;
  std::size_t trajectories_used = 0;
  std::size_t trajectories_dropped = 0;
};

// Reads <dir>/annotations.jsonl and <dir>/directions.jsonl when present.
// Later records for the same sample replace earlier ones.
std::map<std::string, AnnotationSummary> load_annotation_index(const std::string& dir);

struct HttpResponse {
  int status = 200;
  std::string content_type = "application/json";
  std::string body;
};

class ReviewService {
 public:
  using Clock = std::function<std::int64_t()>;

  struct Options {
    std::string decisions_log;
    // Served at /; empty disables static files.
    std::string static_dir;
    // UTC seconds; defaults to the system clock.
    Clock clock;
  };

  ReviewService(Manifest manifest, std::map<std::string, AnnotationSummary> annotations, Options opts);
  ~ReviewService();

  // Routes one request. `path` is already percent-decoded.
  HttpResponse handle(const std::string& method, const std::string& path,
                      const std::map<std::string, std::string>& query, const std::string& body);

  // Blocking; returns when stop() is called. Throws IoError when the port
  // cannot be bound.
  void listen(const std::string& host, int port);
  // Binds an ephemeral port and serves on a background thread.
  int start_background(const std::string& host);
  void stop();

  // Warning from replaying a log with a torn tail, if any.
  const std::optional<std::string>& load_warning() const { return load_warning_; }

 private:
  struct State {
    std::vector<ReviewDecision> log;
    // Effective decision per sample.
    std::map<std::string, ReviewDecision> current;
  };

  std::shared_ptr<const State> snapshot() const;
  std::string status_of(const State& s, const std::string& id) const;

  HttpResponse list_samples(const std::map<std::string, std::string>& query);
  HttpResponse get_sample(const std::string& id);
  HttpResponse get_overlay(const std::string& id);
  HttpResponse post_decision(const std::string& id, const std::string& body);
  HttpResponse get_stats();
  HttpResponse get_static(const std::string& path);
  void setup_server();

  Manifest manifest_;
  std::map<std::string, AnnotationSummary> annotations_;
  Options opts_;
  std::shared_ptr<const State> state_;
  std::mutex write_mu_;
  std::unique_ptr<LogWriter> writer_;
  std::optional<std::string> load_warning_;
  std::unique_ptr<httplib::Server> server_;
  std::thread server_thread_;
};

// Image with the heatmap blended in red and an arrow for the image-plane
// component of `direction` drawn from the heatmap peak.
RgbImage render_review_overlay(const RgbImage& image, const AffordanceMap& heatmap,
                               const std::optional<DiscreteDirection>& direction);

}  // namespace afforda
