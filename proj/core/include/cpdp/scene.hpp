#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "cpdp/distributions.hpp"
#include "cpdp/types.hpp"

namespace cpdp::scene {

enum class BoxKind { kKeepIn, kKeepOut };

// Axis-aligned closed box, active on [t_start, t_end]. Infinite components
// turn the box into a slab or half-space.
struct BoxConstraint {
  Vec3 min = Vec3::Constant(-dist::kInf);
  Vec3 max = Vec3::Constant(dist::kInf);
  BoxKind kind = BoxKind::kKeepIn;
  double t_start = -dist::kInf;
  double t_end = dist::kInf;

  bool active_at(double t) const { return t >= t_start && t <= t_end; }
  bool contains(const Vec3& p) const {
    return (p.array() >= min.array()).all() && (p.array() <= max.array()).all();
  }
};

struct SceneConstraints {
  std::vector<BoxConstraint> boxes;
  std::string frame_id = "base";

  bool empty() const { return boxes.empty(); }
};

// True iff the point is inside every active keep_in box and outside every
// active keep_out box at time t.
bool admits(const SceneConstraints& scene, const Vec3& point, double t);

// Checks min < max wherever both are finite; throws Validation.
void validate(const SceneConstraints& scene);

SceneConstraints parse_scene(const std::string& json_text);
SceneConstraints load_scene(const std::filesystem::path& path);
std::string scene_to_json(const SceneConstraints& scene);

// Convenience: keep_in half-space z >= height.
BoxConstraint table_plane(double height);

}  // namespace cpdp::scene
