#pragma once

// Articulated trajectory planning: large camera motions are decomposed into
// short clips. Stage one sweeps D axis-aligned directions away from the
// input image; stage two continues from stage-one terminal frames without
// ever heading back toward the input. Every emitted frame gets a two-axis
// stamp built from its cumulative signed step counts, normalized so stamps
// span [-1, 1]; the input image alone carries (0, 0).

#include "liftcore/core.hpp"

#include <map>
#include <memory>
#include <optional>

namespace liftcore {

enum class Direction { right, left, up, down };

inline const char* direction_name(Direction d) {
  switch (d) {
    case Direction::right: return "right";
    case Direction::left: return "left";
    case Direction::up: return "up";
    case Direction::down: return "down";
  }
  return "?";
}

inline std::optional<Direction> direction_from_name(const std::string& s) {
  if (s == "right") return Direction::right;
  if (s == "left") return Direction::left;
  if (s == "up") return Direction::up;
  if (s == "down") return Direction::down;
  return std::nullopt;
}

// Camera-frame translation of one step. y points down, so "up" is -y.
inline Vec3 direction_step(Direction d) {
  switch (d) {
    case Direction::right: return Vec3(1, 0, 0);
    case Direction::left: return Vec3(-1, 0, 0);
    case Direction::up: return Vec3(0, -1, 0);
    case Direction::down: return Vec3(0, 1, 0);
  }
  return Vec3::Zero();
}

// Signed stamp-axis increment: (ti, tj) integer step per frame.
inline std::pair<int, int> direction_stamp_step(Direction d) {
  switch (d) {
    case Direction::right: return {1, 0};
    case Direction::left: return {-1, 0};
    case Direction::up: return {0, 1};
    case Direction::down: return {0, -1};
  }
  return {0, 0};
}

enum class ClipStage { first, second };

struct Clip {
  int clip_id = 0;
  int anchor_frame_id = 0;        // frame this clip generates from
  ClipStage stage = ClipStage::first;
  Direction direction = Direction::right;
  // Index 0 is the anchor itself (identity pose, anchor's stamp); it is
  // never emitted as a new frame. Stage-one clips hold l entries, stage-two
  // clips l+1 so that each contributes l new frames and the plan total
  // lands exactly on L = l*D + (l-1)*(D-1).
  std::vector<Pose> poses;         // relative to the anchor frame
  std::vector<FrameStamp> stamps;
  std::vector<int> frame_ids;      // emitted id per index; index 0 = anchor id
};

struct PlannedFrame {
  int frame_id = 0;
  int clip_id = 0;
  int index_in_clip = 0;
  int step_i = 0;  // cumulative signed steps, integer grid
  int step_j = 0;
  FrameStamp stamp;
};

struct TrajectoryPlan {
  int clip_length = 0;   // l
  int directions = 0;    // D
  double step = 0.0;     // per-frame camera displacement, world units
  double rot_step = 0.0; // optional per-frame look rotation, radians
  double normalizer = 1.0;
  std::vector<Clip> clips;
  std::vector<PlannedFrame> frames;  // emission order; frames[0] is the input

  size_t frame_count() const { return frames.size(); }

  const PlannedFrame& frame(int frame_id) const {
    check(frame_id >= 0 && frame_id < static_cast<int>(frames.size()),
          "plan: unknown frame id " + std::to_string(frame_id));
    return frames[frame_id];
  }
};

struct FrameRecord {
  int frame_id = 0;
  Image image;
  FrameStamp stamp;
  int clip_id = 0;
  int index_in_clip = 0;
};

// Serves planned frames from disk or from the synthetic oracle.
class FrameProvider {
 public:
  virtual ~FrameProvider() = default;
  virtual Image fetch(const PlannedFrame& f) = 0;
};

namespace detail {

// Relative pose of the k-th step along `dir`: pure translation plus an
// optional pan/tilt of k*rot_step toward the motion direction.
inline Pose step_pose(Direction dir, int k, double step, double rot_step) {
  Pose p;
  p.t = static_cast<double>(k) * step * direction_step(dir);
  if (rot_step != 0.0 && k != 0) {
    const double a = k * rot_step;
    Vec3 axis;
    switch (dir) {
      case Direction::right: axis = Vec3(0, -1, 0); break;  // pan right
      case Direction::left: axis = Vec3(0, 1, 0); break;
      case Direction::up: axis = Vec3(-1, 0, 0); break;     // tilt up
      case Direction::down: axis = Vec3(1, 0, 0); break;
    }
    p.R = axis_angle_to_matrix(a * axis);
  }
  return p;
}

// Stage-two continuation: perpendicular to the parent sweep when the plan
// covers both axes, outward along the same axis when it does not.
inline Direction continuation(Direction parent, int D) {
  if (D == 2) return parent;
  switch (parent) {
    case Direction::right: return Direction::up;
    case Direction::up: return Direction::left;
    case Direction::left: return Direction::down;
    case Direction::down: return Direction::right;  // unused: down has no stage-two clip
  }
  return parent;
}

}  // namespace detail

// Plans the two-stage articulated trajectory. Frame count is exactly
// l*D + (l-1)*(D-1): the input frame, D stage-one clips of l-1 new frames,
// and D-1 stage-two clips of l new frames each.
inline TrajectoryPlan plan_articulated(int l, int D, double step, double rot_step = 0.0) {
  check(l >= 2, "plan: clip length must be >= 2");
  check(D == 2 || D == 4, "plan: unsupported direction count " + std::to_string(D));
  check(step > 0.0, "plan: step must be positive");

  const std::vector<Direction> dirs =
      D == 2 ? std::vector<Direction>{Direction::right, Direction::left}
             : std::vector<Direction>{Direction::right, Direction::left,
                                      Direction::up, Direction::down};

  TrajectoryPlan plan;
  plan.clip_length = l;
  plan.directions = D;
  plan.step = step;
  plan.rot_step = rot_step;

  // Integer step grid first; stamps are scaled once the full extent is known.
  struct RawFrame { int clip, index, si, sj; };
  std::vector<RawFrame> raw;
  raw.push_back({0, 0, 0, 0});  // the input image, owned by clip 0

  int next_clip = 0;
  std::vector<int> terminal_frame_index(dirs.size(), 0);  // index into raw
  std::vector<std::pair<int, int>> terminal_steps(dirs.size());

  for (size_t d = 0; d < dirs.size(); ++d) {
    Clip clip;
    clip.clip_id = next_clip++;
    clip.anchor_frame_id = 0;
    clip.stage = ClipStage::first;
    clip.direction = dirs[d];
    const auto [di, dj] = direction_stamp_step(dirs[d]);
    for (int k = 0; k < l; ++k) {
      clip.poses.push_back(detail::step_pose(dirs[d], k, step, rot_step));
      if (k > 0) raw.push_back({clip.clip_id, k, k * di, k * dj});
    }
    terminal_frame_index[d] = static_cast<int>(raw.size()) - 1;
    terminal_steps[d] = {(l - 1) * di, (l - 1) * dj};
    plan.clips.push_back(std::move(clip));
  }

  // Stage two: D-1 clips, one per stage-one direction except the last,
  // anchored at that direction's terminal frame.
  for (int d = 0; d < D - 1; ++d) {
    const Direction cont = detail::continuation(dirs[d], D);
    Clip clip;
    clip.clip_id = next_clip++;
    clip.stage = ClipStage::second;
    clip.direction = cont;
    const auto [di, dj] = direction_stamp_step(cont);
    const auto [ai, aj] = terminal_steps[d];
    for (int k = 0; k <= l; ++k) {
      clip.poses.push_back(detail::step_pose(cont, k, step, rot_step));
      if (k > 0) raw.push_back({clip.clip_id, k, ai + k * di, aj + k * dj});
    }
    plan.clips.push_back(std::move(clip));
  }

  int max_step = 1;
  for (const auto& f : raw)
    max_step = std::max({max_step, std::abs(f.si), std::abs(f.sj)});
  plan.normalizer = 1.0 / static_cast<double>(max_step);

  for (size_t i = 0; i < raw.size(); ++i) {
    PlannedFrame pf;
    pf.frame_id = static_cast<int>(i);
    pf.clip_id = raw[i].clip;
    pf.index_in_clip = raw[i].index;
    pf.step_i = raw[i].si;
    pf.step_j = raw[i].sj;
    pf.stamp = FrameStamp{raw[i].si * plan.normalizer, raw[i].sj * plan.normalizer};
    plan.frames.push_back(pf);
  }

  // Wire up per-clip frame ids (index 0 aliases the anchor frame).
  std::map<std::pair<int, int>, int> by_slot;
  for (const auto& f : plan.frames) by_slot[{f.clip_id, f.index_in_clip}] = f.frame_id;
  for (auto& clip : plan.clips) {
    clip.frame_ids.assign(clip.poses.size(), -1);
    clip.stamps.assign(clip.poses.size(), FrameStamp{});
    for (size_t k = 0; k < clip.poses.size(); ++k) {
      auto it = by_slot.find({clip.clip_id, static_cast<int>(k)});
      clip.frame_ids[k] = it != by_slot.end() ? it->second : clip.anchor_frame_id;
      if (it != by_slot.end()) clip.stamps[k] = plan.frames[it->second].stamp;
    }
    clip.stamps[0] = plan.frames[clip.anchor_frame_id].stamp;
  }

  // Stage-two anchors point at the parent terminal, resolved now that ids exist.
  for (int d = 0; d < D - 1; ++d) {
    Clip& clip = plan.clips[static_cast<size_t>(D + d)];
    clip.anchor_frame_id = plan.frames[terminal_frame_index[d]].frame_id;
    clip.frame_ids[0] = clip.anchor_frame_id;
    clip.stamps[0] = plan.frames[clip.anchor_frame_id].stamp;
  }

  return plan;
}

struct FramePose {
  int frame_id = 0;
  Pose pose;       // absolute, camera-to-world, input frame = world
  FrameStamp stamp;
};

// Absolute intended pose per frame, composing clip-relative poses through
// anchors. The input frame is the identity.
inline std::vector<FramePose> pose_sequence(const TrajectoryPlan& plan) {
  const size_t n = plan.frames.size();
  std::vector<FramePose> out(n);
  std::vector<char> done(n, 0);

  // frames[0] is the input by construction.
  out[0] = FramePose{0, Pose::identity(), plan.frames[0].stamp};
  done[0] = 1;

  // Clips are ordered so that a clip's anchor is always planned before its
  // frames; one forward pass per clip order suffices.
  for (const auto& clip : plan.clips) {
    check(clip.anchor_frame_id >= 0 &&
              clip.anchor_frame_id < static_cast<int>(n) &&
              done[clip.anchor_frame_id],
          "plan: dangling anchor reference in clip " + std::to_string(clip.clip_id));
    const Pose anchor = out[clip.anchor_frame_id].pose;
    for (size_t k = 1; k < clip.poses.size(); ++k) {
      const int fid = clip.frame_ids[k];
      if (fid == clip.anchor_frame_id) continue;
      out[fid] = FramePose{fid, compose(anchor, clip.poses[k]), plan.frames[fid].stamp};
      done[fid] = 1;
    }
  }
  for (size_t i = 0; i < n; ++i)
    check(done[i], "plan: frame " + std::to_string(i) + " unreachable from input");
  return out;
}

// Fetches one FrameRecord per planned frame, in plan order. All frames must
// share one resolution.
inline std::vector<FrameRecord> acquire_frames(const TrajectoryPlan& plan,
                                               FrameProvider& provider) {
  std::vector<FrameRecord> records;
  records.reserve(plan.frames.size());
  int w = -1, h = -1;
  for (const auto& pf : plan.frames) {
    FrameRecord rec;
    rec.frame_id = pf.frame_id;
    rec.clip_id = pf.clip_id;
    rec.index_in_clip = pf.index_in_clip;
    rec.stamp = pf.stamp;
    rec.image = provider.fetch(pf);
    if (w < 0) { w = rec.image.width; h = rec.image.height; }
    check(rec.image.width == w && rec.image.height == h,
          "frames: resolution mismatch at frame " + std::to_string(pf.frame_id));
    records.push_back(std::move(rec));
  }
  return records;
}

}  // namespace liftcore
