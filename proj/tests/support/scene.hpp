#pragma once

// Scripted synthetic interaction clips: a camera translating sideways, a
// static rectangular object and a hand approaching it from the right.

#include <cstdint>
#include <string>
#include <vector>

#include "afforda/image.hpp"
#include "afforda/io.hpp"
#include "afforda/types.hpp"

namespace afforda::testing {

struct SceneSpec {
  int width = 160;
  int height = 120;
  // Pre-contact frames N; the contact frame is N.
  int pre_contact = 4;
  // Frames after the contact frame (kept to exercise peak selection).
  int trailing = 0;
  // Camera motion per frame: scene content shifts by -cam_dx in x.
  int cam_dx = 1;
  // Object rectangle in frame 0, half-open pixel ranges.
  int obj_x0 = 40, obj_y0 = 35, obj_x1 = 95, obj_y1 = 85;
  // Hand row centre, half height, width, and columns overlapping the object
  // at the contact frame.
  int touch_y = 60;
  int hand_half = 6;
  int hand_width = 30;
  int overlap = 3;
  // Hand speed towards the object in world pixels per frame.
  int hand_speed = 6;
  // Fraction of correspondences replaced by random outliers, and inlier
  // jitter in pixels.
  double outlier_fraction = 0.2;
  double jitter = 0.0;
  bool precomputed_homographies = false;
  // Post-contact motion in codebook axes.
  DiscreteDirection motion = DiscreteDirection::make(-1, 0, 0);
  int traj_pixels = 16;
  int traj_frames = 12;
  double traj_step = 0.02;
  double traj_noise = 0.0005;
  std::uint64_t seed = 1;
};

struct Scene {
  SceneSpec spec;
  std::vector<RgbImage> frames;
  InteractionClip clip;
  // Centre of the hand-object overlap at the contact frame, expressed in
  // frame 0 coordinates.
  Point2 first_touch;
  // Overlap pixels carried back to frame 0.
  PointSet2D touch_region;
  std::vector<Trajectory3D> trajectories;
  AffordanceMap gt_map;
};

Scene make_scene(const SceneSpec& spec);

// Writes frames, masks, correspondences, trajectories and the gt heatmap
// below dir/<id>/ and returns the manifest records (paths relative to dir).
// Object masks go out as RLE sidecars when rle_objects is set.
std::pair<SampleRecord, ClipRecord> write_scene(const Scene& scene, const std::string& dir, const std::string& id,
                                                const std::string& narration, bool rle_objects,
                                                bool explicit_contact_index);

// The bundled three-sample demo: manifest.jsonl, per-sample files,
// predictions_gt.jsonl and replay scripts.
void write_demo_fixture(const std::string& dir);

}  // namespace afforda::testing
