#include "afforda/io.hpp"

#include <cmath>
#include <filesystem>
#include <map>
#include <set>
#include <sstream>

#include "afforda/core.hpp"
#include "afforda/error.hpp"
#include "afforda/image.hpp"
#include "afforda/motion.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace afforda {

RleMask encode_rle(const BinaryMask& mask) {
  RleMask out{mask.width(), mask.height(), {}};
  bool current = false;
  std::uint32_t run = 0;
  for (int x = 0; x < mask.width(); ++x) {
    for (int y = 0; y < mask.height(); ++y) {
      if (mask.at(x, y) != current) {
        out.counts.push_back(run);
        run = 0;
        current = !current;
      }
      ++run;
    }
  }
  out.counts.push_back(run);
  return out;
}

BinaryMask decode_rle(const RleMask& rle) {
  if (rle.width < 0 || rle.height < 0) throw Error(Errc::BadCounts, "negative mask size");
  const std::uint64_t total = static_cast<std::uint64_t>(rle.width) * rle.height;
  std::uint64_t sum = 0;
  for (auto c : rle.counts) sum += c;
  if (sum != total) {
    throw Error(Errc::BadCounts, "runs sum to " + std::to_string(sum) + ", expected " + std::to_string(total));
  }
  BinaryMask mask(rle.width, rle.height);
  std::uint64_t pos = 0;
  bool value = false;
  for (auto c : rle.counts) {
    if (value) {
      for (std::uint64_t i = pos; i < pos + c; ++i) {
        mask.set(static_cast<int>(i / rle.height), static_cast<int>(i % rle.height));
      }
    }
    pos += c;
    value = !value;
  }
  return mask;
}

json rle_to_json(const RleMask& rle) { return {{"size", {rle.height, rle.width}}, {"counts", rle.counts}}; }

RleMask rle_from_json(const json& j) {
  try {
    const auto& size = j.at("size");
    if (!size.is_array() || size.size() != 2) throw Error(Errc::ParseError, "size must be [h, w]");
    RleMask r;
    r.height = size.at(0).get<int>();
    r.width = size.at(1).get<int>();
    for (const auto& c : j.at("counts")) {
      if (!c.is_number_unsigned()) throw Error(Errc::BadCounts, "counts must be non-negative integers");
      r.counts.push_back(c.get<std::uint32_t>());
    }
    return r;
  } catch (const json::exception& e) {
    throw Error(Errc::ParseError, std::string("malformed RLE: ") + e.what());
  }
}

BinaryMask load_grayscale_mask(const std::string& path) {
  GrayImage g;
  try {
    g = decode_png_gray(read_file_bytes(path));
  } catch (const Error& e) {
    throw Error(e.code(), e.detail() + " (" + path + ")", e.stage());
  }
  std::vector<std::uint8_t> bits(g.pixels.size());
  for (std::size_t i = 0; i < bits.size(); ++i) bits[i] = g.pixels[i] != 0;
  return BinaryMask(g.width, g.height, std::move(bits));
}

void save_grayscale_mask(const std::string& path, const BinaryMask& mask) {
  GrayImage g{mask.width(), mask.height(), std::vector<std::uint8_t>(mask.bits().size())};
  for (std::size_t i = 0; i < g.pixels.size(); ++i) g.pixels[i] = mask.bits()[i] ? 255 : 0;
  save_png(path, g);
}

namespace {

bool ends_with(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

json read_json_file(const std::string& path) {
  const auto bytes = read_file_bytes(path);
  try {
    return json::parse(bytes.begin(), bytes.end());
  } catch (const json::exception& e) {
    throw Error(Errc::ParseError, path + ": " + e.what());
  }
}

void write_text(const std::string& path, const std::string& text) {
  write_file_bytes(path, std::vector<std::uint8_t>(text.begin(), text.end()));
}

}  // namespace

BinaryMask load_mask(const std::string& path) {
  if (ends_with(path, ".rle.json")) return decode_rle(rle_from_json(read_json_file(path)));
  return load_grayscale_mask(path);
}

void save_rle(const std::string& path, const BinaryMask& mask) {
  write_text(path, rle_to_json(encode_rle(mask)).dump() + "\n");
}

AffordanceMap load_heatmap(const std::string& path) {
  GrayImage g;
  try {
    g = decode_png_gray(read_file_bytes(path));
  } catch (const Error& e) {
    throw Error(e.code(), e.detail() + " (" + path + ")", e.stage());
  }
  std::vector<double> v(g.pixels.size());
  bool any = false;
  for (std::size_t i = 0; i < v.size(); ++i) {
    v[i] = g.pixels[i] / 255.0;
    any = any || g.pixels[i] != 0;
  }
  if (!any) throw Error(Errc::ZeroMass, "heatmap is all zero: " + path);
  return AffordanceMap(g.width, g.height, std::move(v));
}

void save_heatmap(const std::string& path, const AffordanceMap& map) { save_png(path, heatmap_to_gray(map)); }

std::vector<Trajectory3D> parse_trajectories(const json& doc) {
  if (!doc.is_object() || !doc.contains("trajectories") || !doc["trajectories"].is_array()) {
    throw Error(Errc::ParseError, "expected {\"trajectories\": [...]}");
  }
  std::vector<Trajectory3D> out;
  std::optional<std::size_t> length;
  int index = 0;
  for (const auto& item : doc["trajectories"]) {
    Trajectory3D t;
    if (!item.is_object() || !item.contains("points") || !item["points"].is_array()) {
      throw Error(Errc::ParseError, "trajectory " + std::to_string(index) + " lacks a points array");
    }
    t.pixel_id = index;
    if (item.contains("pixel_id")) {
      if (!item["pixel_id"].is_number_integer()) {
        throw Error(Errc::ParseError, "trajectory " + std::to_string(index) + ": pixel_id must be an integer");
      }
      t.pixel_id = item["pixel_id"].get<int>();
    }
    int frame = 0;
    for (const auto& p : item["points"]) {
      if (!p.is_array() || p.size() != 3) {
        throw Error(Errc::ParseError, "pixel " + std::to_string(t.pixel_id) + " frame " + std::to_string(frame) +
                                          ": expected [x, y, z]");
      }
      double c[3];
      for (int k = 0; k < 3; ++k) {
        if (!p[k].is_number() || !std::isfinite(p[k].get<double>())) {
          throw Error(Errc::NonFinite,
                      "pixel " + std::to_string(t.pixel_id) + " frame " + std::to_string(frame) + ": " + p[k].dump());
        }
        c[k] = p[k].get<double>();
      }
      t.points.push_back({c[0], c[1], c[2]});
      ++frame;
    }
    if (t.points.empty()) throw Error(Errc::RaggedTrajectory, "pixel " + std::to_string(t.pixel_id) + " has no points");
    if (length && *length != t.points.size()) {
      throw Error(Errc::RaggedTrajectory, "pixel " + std::to_string(t.pixel_id) + " has " +
                                              std::to_string(t.points.size()) + " frames, expected " +
                                              std::to_string(*length));
    }
    length = t.points.size();
    out.push_back(std::move(t));
    ++index;
  }
  return out;
}

std::vector<Trajectory3D> load_trajectories(const std::string& path) {
  try {
    return parse_trajectories(read_json_file(path));
  } catch (const Error& e) {
    throw e.with_stage(path);
  }
}

void save_trajectories(const std::string& path, const std::vector<Trajectory3D>& trajs) {
  json arr = json::array();
  for (const auto& t : trajs) {
    json pts = json::array();
    for (const auto& p : t.points) pts.push_back({p.x, p.y, p.z});
    arr.push_back({{"pixel_id", t.pixel_id}, {"points", std::move(pts)}});
  }
  write_text(path, json{{"trajectories", std::move(arr)}}.dump() + "\n");
}

std::vector<Correspondence> load_correspondences(const std::string& path) {
  const json doc = read_json_file(path);
  if (!doc.is_object() || !doc.contains("pairs") || !doc["pairs"].is_array()) {
    throw Error(Errc::ParseError, path + ": expected {\"pairs\": [...]}");
  }
  std::vector<Correspondence> out;
  for (const auto& p : doc["pairs"]) {
    if (!p.is_array() || p.size() != 4) throw Error(Errc::ParseError, path + ": pairs are [sx, sy, dx, dy]");
    for (const auto& v : p) {
      if (!v.is_number()) throw Error(Errc::NonFinite, path + ": non-numeric coordinate " + v.dump());
    }
    out.push_back({{p[0].get<double>(), p[1].get<double>()}, {p[2].get<double>(), p[3].get<double>()}});
  }
  return out;
}

void save_correspondences(const std::string& path, const std::vector<Correspondence>& pairs) {
  json arr = json::array();
  for (const auto& c : pairs) arr.push_back({c.src.x, c.src.y, c.dst.x, c.dst.y});
  write_text(path, json{{"pairs", std::move(arr)}}.dump() + "\n");
}

// ---- manifest ----

std::string Manifest::resolve(const std::string& rel) const {
  if (rel.empty() || fs::path(rel).is_absolute() || base_dir.empty()) return rel;
  return (fs::path(base_dir) / rel).string();
}

const SampleRecord* Manifest::find_sample(const std::string& id) const {
  for (const auto& s : samples)
    if (s.id == id) return &s;
  return nullptr;
}

const ClipRecord* Manifest::find_clip(const std::string& sample_id) const {
  for (const auto& c : clips)
    if (c.sample_id == sample_id) return &c;
  return nullptr;
}

namespace {

std::string_view source_name(SampleSource s) { return s == SampleSource::real_world ? "real_world" : "laboratory"; }

template <class T, class F>
json opt_array(const std::vector<std::optional<T>>& v, F&& conv) {
  json a = json::array();
  for (const auto& e : v) a.push_back(e ? conv(*e) : json());
  return a;
}

json opt_str(const std::optional<std::string>& s) { return s ? json(*s) : json(); }
json box_json(const BBox& b) { return json::array({b.x0, b.y0, b.x1, b.y1}); }

json sample_json(const SampleRecord& s) {
  return {{"kind", "sample"},
          {"id", s.id},
          {"image", {{"path", s.image.path}, {"width", s.image.width}, {"height", s.image.height}}},
          {"narration", s.narration},
          {"gt_map", opt_str(s.gt_map)},
          {"gt_direction", opt_str(s.gt_direction)},
          {"source", std::string(source_name(s.source))}};
}

json clip_json(const ClipRecord& c) {
  auto str = [](const std::string& s) { return json(s); };
  json flags = json::array();
  for (bool b : c.contact_flags) flags.push_back(b);
  return {{"kind", "clip"},
          {"sample_id", c.sample_id},
          {"width", c.width},
          {"height", c.height},
          {"frames", c.frames},
          {"contact_index", c.contact_index ? json(*c.contact_index) : json()},
          {"hand_masks", opt_array(c.hand_masks, str)},
          {"object_masks", opt_array(c.object_masks, str)},
          {"hand_boxes", opt_array(c.hand_boxes, box_json)},
          {"object_boxes", opt_array(c.object_boxes, box_json)},
          {"confidences", opt_array(c.confidences, [](double d) { return json(d); })},
          {"contact_flags", std::move(flags)},
          {"correspondences", opt_array(c.correspondences, str)},
          {"homographies", opt_array(c.homographies, [](const std::array<double, 9>& h) { return json(h); })},
          {"trajectories", opt_str(c.trajectories)}};
}

// Field accessors for one manifest line; failures name line and field.
class Fields {
 public:
  Fields(const json& j, int line, std::set<std::string> allowed) : j_(j), line_(line) {
    for (auto it = j.begin(); it != j.end(); ++it) {
      if (!allowed.count(it.key())) fail(it.key(), "unknown field");
    }
  }

  [[noreturn]] void fail(const std::string& field, const std::string& what) const {
    throw Error(Errc::ParseError, "line " + std::to_string(line_) + ", field '" + field + "': " + what);
  }

  const json& req(const std::string& f) const {
    if (!j_.contains(f)) fail(f, "missing");
    return j_[f];
  }
  std::string str(const std::string& f) const {
    const auto& v = req(f);
    if (!v.is_string()) fail(f, "expected a string");
    return v.get<std::string>();
  }
  int integer(const std::string& f, const json& v) const {
    if (!v.is_number_integer()) fail(f, "expected an integer");
    return v.get<int>();
  }
  int integer(const std::string& f) const { return integer(f, req(f)); }
  double number(const std::string& f, const json& v) const {
    if (!v.is_number()) fail(f, "expected a number");
    return v.get<double>();
  }
  std::optional<std::string> opt_string(const std::string& f) const {
    if (!j_.contains(f) || j_[f].is_null()) return std::nullopt;
    if (!j_[f].is_string()) fail(f, "expected a string or null");
    return j_[f].get<std::string>();
  }
  const json& array(const std::string& f) const {
    if (!j_.contains(f)) {
      static const json empty = json::array();
      return empty;
    }
    if (!j_[f].is_array()) fail(f, "expected an array");
    return j_[f];
  }
  std::vector<std::optional<std::string>> opt_strings(const std::string& f) const {
    std::vector<std::optional<std::string>> out;
    for (const auto& v : array(f)) {
      if (v.is_null()) out.push_back(std::nullopt);
      else if (v.is_string()) out.push_back(v.get<std::string>());
      else fail(f, "entries must be strings or null");
    }
    return out;
  }
  std::vector<std::optional<BBox>> opt_boxes(const std::string& f) const {
    std::vector<std::optional<BBox>> out;
    for (const auto& v : array(f)) {
      if (v.is_null()) {
        out.push_back(std::nullopt);
        continue;
      }
      if (!v.is_array() || v.size() != 4) fail(f, "boxes are [x0, y0, x1, y1]");
      BBox b{number(f, v[0]), number(f, v[1]), number(f, v[2]), number(f, v[3])};
      if (!b.valid()) fail(f, "box with x0 >= x1 or y0 >= y1");
      out.push_back(b);
    }
    return out;
  }

 private:
  const json& j_;
  int line_;
};

SampleRecord parse_sample(const json& j, int line) {
  Fields f(j, line, {"kind", "id", "image", "narration", "gt_map", "gt_direction", "source"});
  SampleRecord s;
  s.id = f.str("id");
  if (s.id.empty()) f.fail("id", "empty");
  const auto& img = f.req("image");
  if (!img.is_object()) f.fail("image", "expected an object");
  Fields fi(img, line, {"path", "width", "height"});
  s.image.path = fi.str("path");
  s.image.width = fi.integer("width");
  s.image.height = fi.integer("height");
  try {
    s.image.validate();
  } catch (const Error& e) {
    f.fail("image", e.detail());
  }
  s.narration = f.str("narration");
  try {
    parse_narration(s.narration);
  } catch (const Error& e) {
    f.fail("narration", e.detail());
  }
  s.gt_map = f.opt_string("gt_map");
  s.gt_direction = f.opt_string("gt_direction");
  if (s.gt_direction) {
    try {
      parse_direction_label(*s.gt_direction);
    } catch (const Error& e) {
      f.fail("gt_direction", e.detail());
    }
  }
  const std::string src = f.str("source");
  if (src == "real_world") s.source = SampleSource::real_world;
  else if (src == "laboratory") s.source = SampleSource::laboratory;
  else f.fail("source", "expected real_world or laboratory");
  return s;
}

ClipRecord parse_clip(const json& j, int line) {
  Fields f(j, line,
           {"kind", "sample_id", "width", "height", "frames", "contact_index", "hand_masks", "object_masks",
            "hand_boxes", "object_boxes", "confidences", "contact_flags", "correspondences", "homographies",
            "trajectories"});
  ClipRecord c;
  c.sample_id = f.str("sample_id");
  c.width = f.integer("width");
  c.height = f.integer("height");
  if (c.width < 1 || c.height < 1) f.fail("width", "frame size must be positive");
  for (const auto& v : f.array("frames")) {
    if (!v.is_string()) f.fail("frames", "entries must be strings");
    c.frames.push_back(v.get<std::string>());
  }
  if (c.frames.empty()) f.fail("frames", "at least one frame required");
  const std::size_t n = c.frames.size();
  if (j.contains("contact_index") && !j["contact_index"].is_null()) {
    c.contact_index = f.integer("contact_index");
    if (*c.contact_index < 0 || static_cast<std::size_t>(*c.contact_index) >= n) {
      f.fail("contact_index", "out of range");
    }
  }
  c.hand_masks = f.opt_strings("hand_masks");
  c.object_masks = f.opt_strings("object_masks");
  c.hand_boxes = f.opt_boxes("hand_boxes");
  c.object_boxes = f.opt_boxes("object_boxes");
  for (const auto& v : f.array("confidences")) {
    c.confidences.push_back(v.is_null() ? std::nullopt : std::optional<double>(f.number("confidences", v)));
  }
  for (const auto& v : f.array("contact_flags")) {
    if (!v.is_boolean()) f.fail("contact_flags", "entries must be booleans");
    c.contact_flags.push_back(v.get<bool>());
  }
  c.correspondences = f.opt_strings("correspondences");
  for (const auto& v : f.array("homographies")) {
    if (v.is_null()) {
      c.homographies.push_back(std::nullopt);
      continue;
    }
    if (!v.is_array() || v.size() != 9) f.fail("homographies", "entries are 9 row-major numbers or null");
    std::array<double, 9> h{};
    for (int k = 0; k < 9; ++k) h[k] = f.number("homographies", v[k]);
    c.homographies.push_back(h);
  }
  c.trajectories = f.opt_string("trajectories");
  auto check_len = [&](const char* field, std::size_t len) {
    if (len != 0 && len != n) f.fail(field, "length " + std::to_string(len) + " differs from " + std::to_string(n) + " frames");
  };
  check_len("hand_masks", c.hand_masks.size());
  check_len("object_masks", c.object_masks.size());
  check_len("hand_boxes", c.hand_boxes.size());
  check_len("object_boxes", c.object_boxes.size());
  check_len("confidences", c.confidences.size());
  check_len("contact_flags", c.contact_flags.size());
  check_len("correspondences", c.correspondences.size());
  check_len("homographies", c.homographies.size());
  return c;
}

}  // namespace

std::string manifest_to_string(const Manifest& m) {
  std::string out = json{{"kind", "manifest"}, {"version", m.version}}.dump() + "\n";
  for (const auto& s : m.samples) out += sample_json(s).dump() + "\n";
  for (const auto& c : m.clips) out += clip_json(c).dump() + "\n";
  return out;
}

Manifest parse_manifest(const std::string& text, const std::string& base_dir, bool check_files) {
  Manifest m;
  m.base_dir = base_dir;
  std::istringstream in(text);
  int line_no = 0;
  bool header = false;
  std::set<std::string> ids, clip_ids;
  for (std::string line; std::getline(in, line);) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw Error(Errc::ParseError, "line " + std::to_string(line_no) + ": " + e.what());
    }
    if (!j.is_object() || !j.contains("kind") || !j["kind"].is_string()) {
      throw Error(Errc::ParseError, "line " + std::to_string(line_no) + ", field 'kind': missing");
    }
    const std::string kind = j["kind"].get<std::string>();
    if (!header) {
      if (kind != "manifest") {
        throw Error(Errc::ParseError, "line " + std::to_string(line_no) + ", field 'kind': expected manifest header");
      }
      Fields f(j, line_no, {"kind", "version"});
      m.version = f.integer("version");
      if (m.version != kManifestVersion) f.fail("version", "unsupported version " + std::to_string(m.version));
      header = true;
    } else if (kind == "sample") {
      auto s = parse_sample(j, line_no);
      if (!ids.insert(s.id).second) {
        throw Error(Errc::ParseError, "line " + std::to_string(line_no) + ", field 'id': duplicate id '" + s.id + "'");
      }
      m.samples.push_back(std::move(s));
    } else if (kind == "clip") {
      auto c = parse_clip(j, line_no);
      if (!ids.count(c.sample_id)) {
        throw Error(Errc::ParseError,
                    "line " + std::to_string(line_no) + ", field 'sample_id': unknown sample " + c.sample_id);
      }
      if (!clip_ids.insert(c.sample_id).second) {
        throw Error(Errc::ParseError,
                    "line " + std::to_string(line_no) + ", field 'sample_id': second clip for " + c.sample_id);
      }
      m.clips.push_back(std::move(c));
    } else {
      throw Error(Errc::ParseError, "line " + std::to_string(line_no) + ", field 'kind': unknown kind " + kind);
    }
  }
  if (!header) throw Error(Errc::ParseError, "line 1, field 'kind': missing manifest header");
  if (check_files) {
    std::vector<std::string> missing;
    std::set<std::string> seen;
    auto check = [&](const std::string& rel) {
      const std::string p = m.resolve(rel);
      if (!fs::exists(p) && seen.insert(p).second) missing.push_back(p);
    };
    auto check_opt = [&](const std::optional<std::string>& rel) {
      if (rel) check(*rel);
    };
    for (const auto& s : m.samples) {
      check(s.image.path);
      check_opt(s.gt_map);
    }
    for (const auto& c : m.clips) {
      for (const auto& f : c.frames) check(f);
      for (const auto& p : c.hand_masks) check_opt(p);
      for (const auto& p : c.object_masks) check_opt(p);
      for (const auto& p : c.correspondences) check_opt(p);
      check_opt(c.trajectories);
    }
    if (!missing.empty()) {
      std::string msg = std::to_string(missing.size()) + " referenced file(s) absent:";
      for (const auto& p : missing) msg += " " + p;
      throw Error(Errc::MissingFile, msg);
    }
  }
  return m;
}

Manifest load_manifest(const std::string& path, bool check_files) {
  const auto bytes = read_file_bytes(path);
  const std::string base = fs::path(path).parent_path().string();
  try {
    return parse_manifest(std::string(bytes.begin(), bytes.end()), base, check_files);
  } catch (const Error& e) {
    throw e.with_stage(path);
  }
}

void save_manifest(const Manifest& m, const std::string& path) { write_text(path, manifest_to_string(m)); }

Sample load_sample(const Manifest& m, const SampleRecord& rec) {
  Sample s;
  s.id = rec.id;
  s.image = rec.image;
  s.image.path = m.resolve(rec.image.path);
  s.instruction = parse_narration(rec.narration);
  s.instruction.raw = rec.narration;
  s.source = rec.source;
  if (rec.gt_map) {
    auto map = load_heatmap(m.resolve(*rec.gt_map));
    if (map.width() != rec.image.width || map.height() != rec.image.height) {
      throw Error(Errc::ShapeMismatch, "gt_map of " + rec.id + " does not match the image size");
    }
    s.gt_map = std::move(map);
  }
  if (rec.gt_direction) s.gt_direction = parse_direction_label(*rec.gt_direction);
  return s;
}

InteractionClip load_clip(const Manifest& m, const ClipRecord& rec) {
  InteractionClip clip;
  for (const auto& f : rec.frames) clip.frames.push_back({m.resolve(f), rec.width, rec.height});
  auto load_masks = [&](const std::vector<std::optional<std::string>>& paths) {
    std::vector<std::optional<BinaryMask>> out;
    for (const auto& p : paths) {
      if (!p) {
        out.push_back(std::nullopt);
        continue;
      }
      BinaryMask mask = load_mask(m.resolve(*p));
      if (mask.width() != rec.width || mask.height() != rec.height) {
        throw Error(Errc::ShapeMismatch, *p + " does not match the frame size");
      }
      out.push_back(std::move(mask));
    }
    return out;
  };
  clip.hand_masks = load_masks(rec.hand_masks);
  clip.object_masks = load_masks(rec.object_masks);
  clip.hand_boxes = rec.hand_boxes;
  clip.object_boxes = rec.object_boxes;
  const std::size_t n = rec.frames.size();
  if (!rec.confidences.empty() || !rec.contact_flags.empty()) {
    clip.detections.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      if (!rec.confidences.empty()) clip.detections[i].confidence = rec.confidences[i];
      if (!rec.contact_flags.empty()) clip.detections[i].contact = rec.contact_flags[i];
    }
  }
  for (const auto& p : rec.correspondences) {
    clip.correspondences.push_back(p ? load_correspondences(m.resolve(*p)) : std::vector<Correspondence>{});
  }
  for (const auto& h : rec.homographies) {
    if (!h) {
      clip.homographies.push_back(std::nullopt);
      continue;
    }
    Eigen::Matrix3d mat;
    for (int k = 0; k < 9; ++k) mat(k / 3, k % 3) = (*h)[k];
    clip.homographies.push_back(mat);
  }
  int contact = rec.contact_index ? *rec.contact_index : select_peak_detection(clip);
  const std::size_t keep = static_cast<std::size_t>(contact) + 1;
  auto trim = [keep](auto& v) {
    if (v.size() > keep) v.resize(keep);
  };
  trim(clip.frames);
  trim(clip.hand_masks);
  trim(clip.object_masks);
  trim(clip.hand_boxes);
  trim(clip.object_boxes);
  trim(clip.detections);
  trim(clip.correspondences);
  trim(clip.homographies);
  clip.contact_index = contact;
  clip.pre_contact_count = contact;
  clip.validate();
  return clip;
}

// ---- logs ----

LogWriter::LogWriter(const std::string& path, bool truncate)
    : out_(path, truncate ? std::ios::trunc | std::ios::out : std::ios::app | std::ios::out), path_(path) {
  if (!out_) throw Error(Errc::IoError, "cannot open log " + path);
  worker_ = std::thread([this] { run(); });
}

LogWriter::~LogWriter() {
  try {
    close();
  } catch (...) {
  }
}

void LogWriter::append(const json& record) { append_line(record.dump()); }

void LogWriter::append_line(std::string line) {
  if (line.find('\n') != std::string::npos) throw Error(Errc::InvalidArgument, "log lines cannot contain newlines");
  {
    std::lock_guard lock(mu_);
    if (stop_) throw Error(Errc::IoError, "log " + path_ + " is closed");
    queue_.push_back(std::move(line));
    ++enqueued_;
  }
  cv_.notify_one();
}

void LogWriter::flush() {
  std::unique_lock lock(mu_);
  const std::size_t target = enqueued_;
  drained_.wait(lock, [&] { return written_ >= target || failed_; });
  if (failed_) throw Error(Errc::IoError, "write to " + path_ + " failed");
}

void LogWriter::close() {
  {
    std::lock_guard lock(mu_);
    if (!worker_.joinable()) return;
    stop_ = true;
  }
  cv_.notify_one();
  worker_.join();
  out_.close();
  if (failed_) throw Error(Errc::IoError, "write to " + path_ + " failed");
}

void LogWriter::run() {
  std::unique_lock lock(mu_);
  for (;;) {
    cv_.wait(lock, [&] { return stop_ || !queue_.empty(); });
    if (queue_.empty() && stop_) return;
    std::deque<std::string> batch;
    batch.swap(queue_);
    lock.unlock();
    std::string chunk;
    for (auto& l : batch) {
      chunk += l;
      chunk += '\n';
    }
    out_.write(chunk.data(), static_cast<std::streamsize>(chunk.size()));
    out_.flush();
    const bool ok = static_cast<bool>(out_);
    lock.lock();
    if (!ok) failed_ = true;
    written_ += batch.size();
    drained_.notify_all();
  }
}

LogContents load_log(const std::string& path) {
  const auto bytes = read_file_bytes(path);
  const std::string text(bytes.begin(), bytes.end());
  LogContents out;
  std::size_t pos = 0;
  int line_no = 0;
  while (pos < text.size()) {
    const auto nl = text.find('\n', pos);
    ++line_no;
    if (nl == std::string::npos) {
      out.warning = path + ": ignored incomplete final line " + std::to_string(line_no) + " (" +
                    std::to_string(text.size() - pos) + " bytes)";
      break;
    }
    const std::string line = text.substr(pos, nl - pos);
    pos = nl + 1;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.records.push_back(json::parse(line));
    } catch (const json::exception& e) {
      throw Error(Errc::ParseError, path + ": line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

void append_results(const std::string& path, const std::vector<json>& records) {
  LogWriter w(path);
  for (const auto& r : records) w.append(r);
  w.close();
}

std::string_view verdict_name(Verdict v) {
  switch (v) {
    case Verdict::accept: return "accept";
    case Verdict::reject: return "reject";
    case Verdict::flag: return "flag";
  }
  return "accept";
}

std::string_view failure_mode_name(FailureMode f) {
  switch (f) {
    case FailureMode::wrong_hand: return "wrong_hand";
    case FailureMode::occluded_hand: return "occluded_hand";
    case FailureMode::noisy_contact_frame: return "noisy_contact_frame";
    case FailureMode::homography_drift: return "homography_drift";
    case FailureMode::other: return "other";
  }
  return "other";
}

std::optional<Verdict> parse_verdict(std::string_view s) {
  for (auto v : {Verdict::accept, Verdict::reject, Verdict::flag})
    if (verdict_name(v) == s) return v;
  return std::nullopt;
}

std::optional<FailureMode> parse_failure_mode(std::string_view s) {
  for (auto f : {FailureMode::wrong_hand, FailureMode::occluded_hand, FailureMode::noisy_contact_frame,
                 FailureMode::homography_drift, FailureMode::other})
    if (failure_mode_name(f) == s) return f;
  return std::nullopt;
}

void ReviewDecision::validate() const {
  if (sample_id.empty()) throw Error(Errc::InvalidArgument, "decision without sample_id");
  if (reviewer.empty()) throw Error(Errc::InvalidArgument, "decision without reviewer");
  if (verdict == Verdict::accept && failure_mode) {
    throw Error(Errc::InvalidArgument, "an accept cannot carry a failure_mode");
  }
}

json decision_to_json(const ReviewDecision& d) {
  return {{"kind", "decision"},
          {"sample_id", d.sample_id},
          {"verdict", std::string(verdict_name(d.verdict))},
          {"failure_mode", d.failure_mode ? json(std::string(failure_mode_name(*d.failure_mode))) : json()},
          {"reviewer", d.reviewer},
          {"timestamp", d.timestamp}};
}

ReviewDecision decision_from_json(const json& j) {
  auto fail = [](const std::string& what) -> ReviewDecision { throw Error(Errc::ParseError, "decision: " + what); };
  if (!j.is_object()) return fail("expected an object");
  ReviewDecision d;
  if (!j.contains("sample_id") || !j["sample_id"].is_string()) return fail("sample_id must be a string");
  d.sample_id = j["sample_id"].get<std::string>();
  if (!j.contains("verdict") || !j["verdict"].is_string()) return fail("verdict must be a string");
  auto v = parse_verdict(j["verdict"].get<std::string>());
  if (!v) return fail("unknown verdict " + j["verdict"].get<std::string>());
  d.verdict = *v;
  if (j.contains("failure_mode") && !j["failure_mode"].is_null()) {
    if (!j["failure_mode"].is_string()) return fail("failure_mode must be a string");
    auto f = parse_failure_mode(j["failure_mode"].get<std::string>());
    if (!f) return fail("unknown failure_mode " + j["failure_mode"].get<std::string>());
    d.failure_mode = *f;
  }
  if (!j.contains("reviewer") || !j["reviewer"].is_string()) return fail("reviewer must be a string");
  d.reviewer = j["reviewer"].get<std::string>();
  if (j.contains("timestamp")) {
    if (!j["timestamp"].is_number_integer()) return fail("timestamp must be an integer");
    d.timestamp = j["timestamp"].get<std::int64_t>();
  }
  try {
    d.validate();
  } catch (const Error& e) {
    return fail(e.detail());
  }
  return d;
}

void append_decisions(const std::string& path, const std::vector<ReviewDecision>& decisions) {
  LogWriter w(path);
  for (const auto& d : decisions) w.append(decision_to_json(d));
  w.close();
}

std::vector<ReviewDecision> load_decisions(const std::string& path) {
  std::vector<ReviewDecision> out;
  for (const auto& r : load_log(path).records) {
    if (r.is_object() && r.value("kind", "") == "decision") out.push_back(decision_from_json(r));
  }
  return out;
}

std::vector<ReviewDecision> effective_decisions(const std::vector<ReviewDecision>& log) {
  std::map<std::pair<std::string, std::string>, std::size_t> per_reviewer;
  for (std::size_t i = 0; i < log.size(); ++i) per_reviewer[{log[i].sample_id, log[i].reviewer}] = i;
  std::map<std::string, std::size_t> per_sample;
  for (const auto& [key, idx] : per_reviewer) {
    auto it = per_sample.find(key.first);
    if (it == per_sample.end()) {
      per_sample.emplace(key.first, idx);
      continue;
    }
    const auto& cur = log[it->second];
    const auto& cand = log[idx];
    if (cand.timestamp > cur.timestamp || (cand.timestamp == cur.timestamp && idx > it->second)) it->second = idx;
  }
  std::vector<std::size_t> order;
  for (const auto& [id, idx] : per_sample) order.push_back(idx);
  std::sort(order.begin(), order.end());
  std::vector<ReviewDecision> out;
  for (auto idx : order) out.push_back(log[idx]);
  return out;
}

Manifest export_accepted(const Manifest& m, const std::vector<ReviewDecision>& log) {
  std::set<std::string> accepted;
  for (const auto& d : effective_decisions(log))
    if (d.verdict == Verdict::accept) accepted.insert(d.sample_id);
  Manifest out;
  out.version = m.version;
  out.base_dir = m.base_dir;
  for (const auto& s : m.samples)
    if (accepted.count(s.id)) out.samples.push_back(s);
  for (const auto& c : m.clips)
    if (accepted.count(c.sample_id)) out.clips.push_back(c);
  return out;
}

Manifest rebase_manifest(const Manifest& m, const std::string& new_base_dir) {
  const fs::path from = fs::absolute(m.base_dir.empty() ? fs::path(".") : fs::path(m.base_dir));
  const fs::path to = fs::absolute(new_base_dir.empty() ? fs::path(".") : fs::path(new_base_dir));
  auto move = [&](std::string& p) {
    if (p.empty() || fs::path(p).is_absolute()) return;
    p = fs::path(fs::absolute(from / p).lexically_normal()).lexically_relative(to.lexically_normal()).generic_string();
  };
  auto move_opt = [&](std::optional<std::string>& p) {
    if (p) move(*p);
  };
  Manifest out = m;
  out.base_dir = new_base_dir;
  for (auto& s : out.samples) {
    move(s.image.path);
    move_opt(s.gt_map);
  }
  for (auto& c : out.clips) {
    for (auto& f : c.frames) move(f);
    for (auto& p : c.hand_masks) move_opt(p);
    for (auto& p : c.object_masks) move_opt(p);
    for (auto& p : c.correspondences) move_opt(p);
    move_opt(c.trajectories);
  }
  return out;
}

}  // namespace afforda
