#include "cpdp/scene.hpp"

#include <cmath>

#include "cpdp/error.hpp"
#include "json_util.hpp"

namespace cpdp::scene {

bool admits(const SceneConstraints& scene, const Vec3& point, double t) {
  for (const auto& box : scene.boxes) {
    if (!box.active_at(t)) continue;
    const bool inside = box.contains(point);
    if (box.kind == BoxKind::kKeepIn ? !inside : inside) return false;
  }
  return true;
}

void validate(const SceneConstraints& scene) {
  for (std::size_t i = 0; i < scene.boxes.size(); ++i) {
    const auto& box = scene.boxes[i];
    for (int c = 0; c < 3; ++c) {
      if (std::isnan(box.min[c]) || std::isnan(box.max[c])) {
        throw Error(ErrorCode::kValidation, "box " + std::to_string(i) + ": NaN bound");
      }
      if (std::isfinite(box.min[c]) && std::isfinite(box.max[c]) && !(box.min[c] < box.max[c])) {
        throw Error(ErrorCode::kValidation,
                    "box " + std::to_string(i) + ": min >= max on axis " + std::to_string(c));
      }
    }
    if (box.t_start > box.t_end) {
      throw Error(ErrorCode::kValidation, "box " + std::to_string(i) + ": t_start > t_end");
    }
  }
}

BoxConstraint table_plane(double height) {
  BoxConstraint box;
  box.min.z() = height;
  return box;
}

}  // namespace cpdp::scene

namespace cpdp::scene {

namespace {

using detail::json;

Vec3 parse_corner(const json& j, double fallback, const std::string& field) {
  if (!j.is_array() || j.size() != 3) {
    throw Error(ErrorCode::kParse, "scene: '" + field + "' must be an array of 3 numbers/nulls");
  }
  return {detail::number_or(j[0], fallback, field), detail::number_or(j[1], fallback, field),
          detail::number_or(j[2], fallback, field)};
}

json corner_to_json(const Vec3& v) {
  json out = json::array();
  for (int c = 0; c < 3; ++c) {
    out.push_back(std::isfinite(v[c]) ? json(v[c]) : json(nullptr));
  }
  return out;
}

}  // namespace

SceneConstraints parse_scene(const std::string& json_text) {
  const json doc = detail::parse_json(json_text, "scene");
  if (!doc.is_object()) throw Error(ErrorCode::kParse, "scene: top level must be an object");
  SceneConstraints scene;
  scene.frame_id = doc.value("frame_id", std::string("base"));
  const json boxes = doc.value("boxes", json::array());
  if (!boxes.is_array()) throw Error(ErrorCode::kParse, "scene: 'boxes' must be an array");
  for (const auto& b : boxes) {
    BoxConstraint box;
    box.min = parse_corner(b.value("min", json::array({nullptr, nullptr, nullptr})),
                           -dist::kInf, "min");
    box.max = parse_corner(b.value("max", json::array({nullptr, nullptr, nullptr})),
                           dist::kInf, "max");
    const std::string kind = b.value("kind", std::string("keep_in"));
    if (kind == "keep_in") {
      box.kind = BoxKind::kKeepIn;
    } else if (kind == "keep_out") {
      box.kind = BoxKind::kKeepOut;
    } else {
      throw Error(ErrorCode::kParse, "scene: unknown box kind '" + kind + "'");
    }
    box.t_start = detail::number_or(b.value("t_start", json(nullptr)), -dist::kInf, "t_start");
    box.t_end = detail::number_or(b.value("t_end", json(nullptr)), dist::kInf, "t_end");
    scene.boxes.push_back(box);
  }
  validate(scene);
  return scene;
}

SceneConstraints load_scene(const std::filesystem::path& path) {
  return parse_scene(detail::read_text_file(path));
}

std::string scene_to_json(const SceneConstraints& scene) {
  json doc;
  doc["frame_id"] = scene.frame_id;
  doc["boxes"] = json::array();
  for (const auto& box : scene.boxes) {
    json b;
    b["min"] = corner_to_json(box.min);
    b["max"] = corner_to_json(box.max);
    b["kind"] = box.kind == BoxKind::kKeepIn ? "keep_in" : "keep_out";
    b["t_start"] = std::isfinite(box.t_start) ? json(box.t_start) : json(nullptr);
    b["t_end"] = std::isfinite(box.t_end) ? json(box.t_end) : json(nullptr);
    doc["boxes"].push_back(b);
  }
  return doc.dump(2);
}

}  // namespace cpdp::scene
