#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

namespace naveval {

/// Validation or lookup failure in scene/episode data. The message always
/// names the offending viewpoint or episode ids.
class SceneError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Pinhole camera model: intrinsics in pixels plus a camera-to-world rigid
/// transform in meters.
struct CameraParams {
  double fx = 0.0;
  double fy = 0.0;
  double cx = 0.0;
  double cy = 0.0;
  int width = 0;
  int height = 0;
  Eigen::Matrix4d pose = Eigen::Matrix4d::Identity();

  /// Throws SceneError unless fx,fy > 0, the principal point lies inside the
  /// image, and the pose rotation block is orthonormal within 1e-6.
  void validate(const std::string& context) const;
};

/// One RGB-D capture attached to a viewpoint at a discrete heading.
/// Paths are relative to the scene manifest unless absolute. Empty paths
/// declare the imagery absent (geometry-only scenes).
struct FrameRef {
  int heading = 0;
  std::string rgb_path;
  std::string depth_path;
  CameraParams camera;
};

struct Viewpoint {
  std::string id;
  Eigen::Vector3d position = Eigen::Vector3d::Zero();
  std::vector<FrameRef> frames;
};

/// Immutable graph of navigable viewpoints. Adjacency is undirected and
/// stored per node in manifest edge order. Safe to share across threads
/// after construction.
class Scene {
 public:
  Scene() = default;
  Scene(std::string id, std::vector<Viewpoint> viewpoints,
        const std::vector<std::pair<std::string, std::string>>& directed_edges);

  const std::string& id() const { return id_; }
  const std::vector<Viewpoint>& viewpoints() const { return viewpoints_; }

  bool has(const std::string& viewpoint_id) const {
    return index_.count(viewpoint_id) > 0;
  }
  const Viewpoint& viewpoint(const std::string& viewpoint_id) const;

  /// Navigable neighbors of `at`, in manifest order. Never contains `at`.
  const std::vector<std::string>& navigable_from(const std::string& at) const;

  /// Shortest-path distance in meters over the navigability graph with
  /// Euclidean edge weights. nullopt when no path exists.
  std::optional<double> geodesic(const std::string& a,
                                 const std::string& b) const;

  /// Straight-line distance between two viewpoint positions.
  double euclidean(const std::string& a, const std::string& b) const;

  /// Length of a viewpoint path as the sum of its Euclidean edge lengths.
  /// Throws SceneError if consecutive entries are not adjacent.
  double path_length(const std::vector<std::string>& path) const;

 private:
  std::size_t index_of(const std::string& viewpoint_id,
                       const char* what) const;

  std::string id_;
  std::vector<Viewpoint> viewpoints_;
  std::unordered_map<std::string, std::size_t> index_;
  std::vector<std::vector<std::size_t>> adjacency_;
  std::vector<std::vector<std::string>> neighbor_ids_;
  std::vector<std::pair<std::string, std::string>> edges_;  // as loaded

  friend std::string scene_to_json(const Scene& scene);
};

enum class TaskKind { VLN, SpatialQA };

std::string to_string(TaskKind kind);
TaskKind task_kind_from_string(const std::string& text);

/// One navigation task: instruction, start/goal viewpoints, and the
/// ground-truth path used for supervision and SPL reference length.
struct Episode {
  std::string id;
  std::string scene_id;
  std::string start;
  std::string goal;
  std::string instruction;
  std::vector<std::string> gt_path;
  double gt_path_length = 0.0;  // meters, sum of gt_path edge lengths
  TaskKind task_kind = TaskKind::VLN;
};

struct SceneLoadOptions {
  /// When true, every nonempty rgb/depth path in the manifest must exist on
  /// disk (resolved relative to the manifest). Geometry-only scenes with no
  /// frame paths load either way.
  bool require_frame_files = true;
};

/// Parses and validates a scene manifest (JSON). See README for the schema.
Scene load_scene(const std::string& path, const SceneLoadOptions& opts = {});
Scene scene_from_json(const std::string& json_text,
                      const std::string& base_dir = "",
                      const SceneLoadOptions& opts = {});

/// Serializes a scene back to manifest JSON (load -> serialize -> load is an
/// identity).
std::string scene_to_json(const Scene& scene);
void save_scene(const Scene& scene, const std::string& path);

/// Loads episodes from a JSON file ({"episodes": [...]}) without checking
/// them against any scene.
std::vector<Episode> load_episodes(const std::string& path);
std::vector<Episode> episodes_from_json(const std::string& json_text);
std::string episodes_to_json(const std::vector<Episode>& episodes);

/// Checks the episode against its scene: endpoints exist, gt_path runs from
/// start to goal over adjacent viewpoints, and gt_path_length agrees with
/// the recomputed edge-length sum within 1e-6 relative. A zero stored length
/// is replaced by the computed one.
void validate_episode(const Scene& scene, Episode& episode);

/// Scene registry keyed by scene id, for runs spanning multiple scenes.
class SceneSet {
 public:
  void add(Scene scene);
  const Scene& get(const std::string& scene_id) const;
  bool has(const std::string& scene_id) const {
    return scenes_.count(scene_id) > 0;
  }
  std::size_t size() const { return scenes_.size(); }

 private:
  std::unordered_map<std::string, Scene> scenes_;
};

}  // namespace naveval
