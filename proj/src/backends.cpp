#include "afforda/backends.hpp"

#include <cstdlib>
#include <fstream>

#include <httplib.h>
#include <json.hpp>

#include "afforda/error.hpp"
#include "afforda/render.hpp"

namespace afforda {

std::string_view role_name(Role r) {
  switch (r) {
    case Role::actor_initial: return "actor_initial";
    case Role::actor_refine: return "actor_refine";
    case Role::verifier_diagnose: return "verifier_diagnose";
    case Role::verifier_best: return "verifier_best";
  }
  return "unknown";
}

std::string_view stage_name(Stage s) { return s == Stage::contact ? "contact" : "direction"; }

ReplayBackend::ReplayBackend(std::vector<std::string> replies) : replies_(std::move(replies)) {}

std::vector<std::string> ReplayBackend::read_script(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::MissingFile, path);
  std::vector<std::string> replies;
  for (std::string line; std::getline(in, line);) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::string decoded;
    for (std::size_t i = 0; i < line.size(); ++i) {
      if (line[i] == '\\' && i + 1 < line.size() && line[i + 1] == 'n') {
        decoded += '\n';
        ++i;
      } else {
        decoded += line[i];
      }
    }
    replies.push_back(std::move(decoded));
  }
  return replies;
}

std::string ReplayBackend::send(const ModelRequest& request) {
  std::lock_guard lock(mu_);
  if (next_ >= replies_.size()) {
    throw Error(Errc::BackendError, "replay script exhausted at " + std::string(role_name(request.role)));
  }
  return replies_[next_++];
}

std::size_t ReplayBackend::consumed() const {
  std::lock_guard lock(mu_);
  return next_;
}

std::size_t ReplayBackend::remaining() const {
  std::lock_guard lock(mu_);
  return replies_.size() - next_;
}

std::string RecordingBackend::send(const ModelRequest& request) {
  {
    std::lock_guard lock(mu_);
    calls_.push_back({request.role, request.stage, request.text, request.images.size()});
  }
  return inner_.send(request);
}

std::vector<RecordingBackend::Call> RecordingBackend::calls() const {
  std::lock_guard lock(mu_);
  return calls_;
}

OpenAIBackend::OpenAIBackend(Options opts) : opts_(std::move(opts)) {
  const auto scheme_end = opts_.url.find("://");
  if (scheme_end == std::string::npos) {
    throw Error(Errc::InvalidArgument, "backend url needs a scheme: " + opts_.url);
  }
  const auto path_start = opts_.url.find('/', scheme_end + 3);
  scheme_host_port_ = opts_.url.substr(0, path_start);
  path_ = path_start == std::string::npos ? "/v1/chat/completions" : opts_.url.substr(path_start);
}

std::string OpenAIBackend::token_from_env() {
  const char* v = std::getenv("AFFORDA_API_TOKEN");
  return v ? std::string(v) : std::string();
}

std::string OpenAIBackend::request_body(const ModelRequest& request) const {
  nlohmann::json content = nlohmann::json::array();
  content.push_back({{"type", "text"}, {"text", request.text}});
  for (const auto& img : request.images) {
    content.push_back({{"type", "image_url"},
                       {"image_url", {{"url", "data:image/png;base64," + base64_encode(encode_png(img))}}}});
  }
  nlohmann::json body = {
      {"model", opts_.model},
      {"temperature", 0},
      {"max_tokens", opts_.max_tokens},
      {"messages", nlohmann::json::array({{{"role", "user"}, {"content", content}}})},
  };
  return body.dump();
}

std::string OpenAIBackend::parse_response(const std::string& body) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(body);
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::BackendError, std::string("response is not JSON: ") + e.what());
  }
  try {
    const auto& content = j.at("choices").at(0).at("message").at("content");
    if (content.is_string()) return content.get<std::string>();
    if (content.is_array()) {
      std::string text;
      for (const auto& part : content) {
        if (part.value("type", "") == "text") text += part.value("text", "");
      }
      return text;
    }
  } catch (const nlohmann::json::exception&) {
  }
  throw Error(Errc::BackendError, "response lacks choices[0].message.content");
}

std::string OpenAIBackend::send(const ModelRequest& request) {
  httplib::Client client(scheme_host_port_);
  client.set_connection_timeout(opts_.timeout_seconds);
  client.set_read_timeout(opts_.timeout_seconds);
  httplib::Headers headers;
  if (!opts_.token.empty()) headers.emplace("Authorization", "Bearer " + opts_.token);
  auto res = client.Post(path_, headers, request_body(request), "application/json");
  if (!res) {
    throw Error(Errc::BackendError, "request to " + opts_.url + " failed: " + httplib::to_string(res.error()));
  }
  if (res->status != 200) {
    throw Error(Errc::BackendError, "HTTP " + std::to_string(res->status) + " from " + opts_.url);
  }
  return parse_response(res->body);
}

BinaryMask GridSegmentationStub::segment(const RgbImage& image, const BBox& box) {
  return BinaryMask::from_box(image.width(), image.height(), box);
}

std::vector<BinaryMask> GridSegmentationStub::partition(const RgbImage& image, int k) {
  return grid_partition(image.width(), image.height(), k);
}

}  // namespace afforda
