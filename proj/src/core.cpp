#include "afforda/core.hpp"

#include <algorithm>
#include <cctype>
#include <sstream>
#include <vector>

namespace afforda {

namespace {

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

std::string join(const std::vector<std::string>& tokens, std::size_t begin, std::size_t end) {
  std::string out;
  for (std::size_t i = begin; i < end; ++i) {
    if (!out.empty()) out += ' ';
    out += tokens[i];
  }
  return out;
}

}  // namespace

Instruction parse_narration(std::string_view raw) {
  std::vector<std::string> tokens;
  std::istringstream in{std::string(raw)};
  for (std::string tok; in >> tok;) tokens.push_back(lower(tok));
  if (tokens.empty()) throw Error(Errc::EmptySide, "narration is empty");

  auto it = std::find(tokens.rbegin(), tokens.rend(), "the");
  if (it == tokens.rend()) {
    throw Error(Errc::MissingArticle, "no article 'the' in narration: " + std::string(raw));
  }
  const auto pos = static_cast<std::size_t>(std::distance(it, tokens.rend()) - 1);
  Instruction ins{join(tokens, 0, pos), join(tokens, pos + 1, tokens.size()), std::string(raw)};
  if (ins.verb.empty() || ins.noun.empty()) {
    throw Error(Errc::EmptySide, "narration lacks a verb or noun: " + std::string(raw));
  }
  return ins;
}

int select_peak_detection(const InteractionClip& clip) {
  int best = -1;
  double best_conf = 0.0;
  for (std::size_t i = 0; i < clip.detections.size(); ++i) {
    const auto& c = clip.detections[i].confidence;
    if (!c) continue;
    if (best < 0 || *c > best_conf) {
      best = static_cast<int>(i);
      best_conf = *c;
    }
  }
  if (best < 0) throw Error(Errc::NoDetections, "no frame carries a detection confidence");
  return best;
}

}  // namespace afforda
