#pragma once

#include <cstddef>
#include <functional>
#include <mutex>
#include <string>
#include <vector>

#include "afforda/image.hpp"
#include "afforda/types.hpp"

namespace afforda {

enum class Role { actor_initial, actor_refine, verifier_diagnose, verifier_best };
enum class Stage { contact, direction };

std::string_view role_name(Role r);
std::string_view stage_name(Stage s);

struct ModelRequest {
  Role role = Role::actor_initial;
  Stage stage = Stage::contact;
  std::string text;
  std::vector<RgbImage> images;
};

// Hosts the Actor and Verifier roles. Implementations must tolerate
// concurrent send() calls from different samples.
class ModelBackend {
 public:
  virtual ~ModelBackend() = default;
  // Returns the model's text reply; throws Error(BackendError) on failure.
  virtual std::string send(const ModelRequest& request) = 0;
};

// Replays scripted replies in order, one per call.
class ReplayBackend final : public ModelBackend {
 public:
  explicit ReplayBackend(std::vector<std::string> replies);
  // One reply per line. A literal "\n" inside a line stands for a newline.
  static std::vector<std::string> read_script(const std::string& path);
  static ReplayBackend from_file(const std::string& path) { return ReplayBackend(read_script(path)); }

  std::string send(const ModelRequest& request) override;
  std::size_t consumed() const;
  std::size_t remaining() const;

 private:
  std::vector<std::string> replies_;
  std::size_t next_ = 0;
  mutable std::mutex mu_;
};

class FunctionBackend final : public ModelBackend {
 public:
  using Handler = std::function<std::string(const ModelRequest&)>;
  explicit FunctionBackend(Handler handler) : handler_(std::move(handler)) {}
  std::string send(const ModelRequest& request) override { return handler_(request); }

 private:
  Handler handler_;
};

// Wraps another backend and records every request (role, stage, text,
// image count) in call order.
class RecordingBackend final : public ModelBackend {
 public:
  struct Call {
    Role role;
    Stage stage;
    std::string text;
    std::size_t images;
  };

  explicit RecordingBackend(ModelBackend& inner) : inner_(inner) {}
  std::string send(const ModelRequest& request) override;
  std::vector<Call> calls() const;

 private:
  ModelBackend& inner_;
  std::vector<Call> calls_;
  mutable std::mutex mu_;
};

// OpenAI-compatible chat-completions client. Images travel as base64 PNG
// data URLs; temperature 0 is always requested.
class OpenAIBackend final : public ModelBackend {
 public:
  struct Options {
    // Full endpoint, e.g. "http://localhost:8000/v1/chat/completions".
    std::string url;
    std::string model = "gpt-4o";
    // Bearer token; empty sends no Authorization header.
    std::string token;
    int timeout_seconds = 120;
    int max_tokens = 512;
  };

  explicit OpenAIBackend(Options opts);
  std::string send(const ModelRequest& request) override;

  // Token from the AFFORDA_API_TOKEN environment variable, empty if unset.
  static std::string token_from_env();
  // Request body exactly as posted.
  std::string request_body(const ModelRequest& request) const;
  // Extracts choices[0].message.content; throws BackendError otherwise.
  static std::string parse_response(const std::string& body);

 private:
  Options opts_;
  std::string scheme_host_port_;
  std::string path_;
};

class SegmentationBackend {
 public:
  virtual ~SegmentationBackend() = default;
  virtual BinaryMask segment(const RgbImage& image, const BBox& box) = 0;
  // Pairwise disjoint, in-bounds candidate masks.
  virtual std::vector<BinaryMask> partition(const RgbImage& image, int k) = 0;
};

// Deterministic stand-in: segment() rasterizes the box, partition() tiles
// the image into a grid.
class GridSegmentationStub final : public SegmentationBackend {
 public:
  BinaryMask segment(const RgbImage& image, const BBox& box) override;
  std::vector<BinaryMask> partition(const RgbImage& image, int k) override;
};

}  // namespace afforda
