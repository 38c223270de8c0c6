#include "naveval/scene.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <queue>
#include <set>
#include <sstream>

namespace naveval {

namespace fs = std::filesystem;
using nlohmann::json;

void CameraParams::validate(const std::string& context) const {
  if (!(fx > 0.0) || !(fy > 0.0)) {
    throw SceneError(context + ": focal lengths must be positive");
  }
  if (width <= 0 || height <= 0) {
    throw SceneError(context + ": image dimensions must be positive");
  }
  if (!(cx >= 0.0 && cx < width) || !(cy >= 0.0 && cy < height)) {
    throw SceneError(context + ": principal point outside image");
  }
  const Eigen::Matrix3d r = pose.topLeftCorner<3, 3>();
  if ((r * r.transpose() - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() >
      1e-6) {
    throw SceneError(context + ": pose rotation block is not orthonormal");
  }
  const Eigen::RowVector4d bottom = pose.row(3);
  if ((bottom - Eigen::RowVector4d(0, 0, 0, 1)).cwiseAbs().maxCoeff() > 1e-9) {
    throw SceneError(context + ": pose bottom row must be [0 0 0 1]");
  }
}

Scene::Scene(
    std::string id, std::vector<Viewpoint> viewpoints,
    const std::vector<std::pair<std::string, std::string>>& directed_edges)
    : id_(std::move(id)), viewpoints_(std::move(viewpoints)) {
  index_.reserve(viewpoints_.size());
  for (std::size_t i = 0; i < viewpoints_.size(); ++i) {
    const auto& vp = viewpoints_[i];
    if (vp.id.empty()) {
      throw SceneError("scene " + id_ + ": viewpoint with empty id");
    }
    if (!index_.emplace(vp.id, i).second) {
      throw SceneError("scene " + id_ + ": duplicate viewpoint id " + vp.id);
    }
    if (!vp.position.allFinite()) {
      throw SceneError("scene " + id_ + ": non-finite position at viewpoint " +
                       vp.id);
    }
    for (const auto& frame : vp.frames) {
      frame.camera.validate("scene " + id_ + ", viewpoint " + vp.id +
                            ", heading " + std::to_string(frame.heading));
    }
  }

  adjacency_.assign(viewpoints_.size(), {});
  std::set<std::pair<std::size_t, std::size_t>> seen;
  for (const auto& [from, to] : directed_edges) {
    const auto fit = index_.find(from);
    const auto tit = index_.find(to);
    if (fit == index_.end()) {
      throw SceneError("scene " + id_ + ": edge references unknown viewpoint " +
                       from);
    }
    if (tit == index_.end()) {
      throw SceneError("scene " + id_ + ": edge references unknown viewpoint " +
                       to);
    }
    if (fit->second == tit->second) {
      throw SceneError("scene " + id_ + ": self-edge at viewpoint " + from);
    }
    if (seen.emplace(fit->second, tit->second).second) {
      adjacency_[fit->second].push_back(tit->second);
    }
  }
  // Navigability is undirected: every directed entry needs its reverse.
  for (const auto& [u, v] : seen) {
    if (!seen.count({v, u})) {
      throw SceneError("scene " + id_ + ": asymmetric adjacency " +
                       viewpoints_[u].id + " -> " + viewpoints_[v].id +
                       " has no reverse edge");
    }
  }
  for (const auto& [from, to] : directed_edges) {
    edges_.emplace_back(from, to);
  }
  neighbor_ids_.resize(viewpoints_.size());
  for (std::size_t u = 0; u < adjacency_.size(); ++u) {
    for (std::size_t v : adjacency_[u]) {
      neighbor_ids_[u].push_back(viewpoints_[v].id);
    }
  }
}

std::size_t Scene::index_of(const std::string& viewpoint_id,
                            const char* what) const {
  const auto it = index_.find(viewpoint_id);
  if (it == index_.end()) {
    throw SceneError("scene " + id_ + ": unknown viewpoint " + viewpoint_id +
                     " (" + what + ")");
  }
  return it->second;
}

const Viewpoint& Scene::viewpoint(const std::string& viewpoint_id) const {
  return viewpoints_[index_of(viewpoint_id, "lookup")];
}

const std::vector<std::string>& Scene::navigable_from(
    const std::string& at) const {
  return neighbor_ids_[index_of(at, "navigable_from")];
}

std::optional<double> Scene::geodesic(const std::string& a,
                                      const std::string& b) const {
  const std::size_t src = index_of(a, "geodesic");
  const std::size_t dst = index_of(b, "geodesic");
  if (src == dst) {
    return 0.0;
  }
  constexpr double kInf = std::numeric_limits<double>::infinity();
  std::vector<double> dist(viewpoints_.size(), kInf);
  using Entry = std::pair<double, std::size_t>;
  std::priority_queue<Entry, std::vector<Entry>, std::greater<>> heap;
  dist[src] = 0.0;
  heap.emplace(0.0, src);
  while (!heap.empty()) {
    const auto [d, u] = heap.top();
    heap.pop();
    if (d > dist[u]) {
      continue;
    }
    if (u == dst) {
      return d;
    }
    for (std::size_t v : adjacency_[u]) {
      const double w =
          (viewpoints_[u].position - viewpoints_[v].position).norm();
      if (dist[u] + w < dist[v]) {
        dist[v] = dist[u] + w;
        heap.emplace(dist[v], v);
      }
    }
  }
  return std::nullopt;
}

double Scene::euclidean(const std::string& a, const std::string& b) const {
  const std::size_t i = index_of(a, "euclidean");
  const std::size_t j = index_of(b, "euclidean");
  return (viewpoints_[i].position - viewpoints_[j].position).norm();
}

double Scene::path_length(const std::vector<std::string>& path) const {
  double total = 0.0;
  for (std::size_t i = 0; i + 1 < path.size(); ++i) {
    const std::size_t u = index_of(path[i], "path_length");
    const std::size_t v = index_of(path[i + 1], "path_length");
    const auto& adj = adjacency_[u];
    if (std::find(adj.begin(), adj.end(), v) == adj.end()) {
      throw SceneError("scene " + id_ + ": path step " + path[i] + " -> " +
                       path[i + 1] + " is not a navigable edge");
    }
    total += (viewpoints_[u].position - viewpoints_[v].position).norm();
  }
  return total;
}

std::string to_string(TaskKind kind) {
  return kind == TaskKind::VLN ? "VLN" : "SpatialQA";
}

TaskKind task_kind_from_string(const std::string& text) {
  if (text == "VLN") return TaskKind::VLN;
  if (text == "SpatialQA") return TaskKind::SpatialQA;
  throw SceneError("unknown task kind: " + text);
}

namespace {

Eigen::Matrix4d pose_from_flat(const json& arr, const std::string& context) {
  if (!arr.is_array() || arr.size() != 16) {
    throw SceneError(context + ": camera pose must be 16 floats row-major");
  }
  Eigen::Matrix4d m;
  for (int r = 0; r < 4; ++r) {
    for (int c = 0; c < 4; ++c) {
      m(r, c) = arr.at(4 * r + c).get<double>();
    }
  }
  return m;
}

json pose_to_flat(const Eigen::Matrix4d& m) {
  json arr = json::array();
  for (int r = 0; r < 4; ++r) {
    for (int c = 0; c < 4; ++c) {
      arr.push_back(m(r, c));
    }
  }
  return arr;
}

std::string resolve_path(const std::string& base_dir, const std::string& p) {
  if (p.empty() || base_dir.empty() || fs::path(p).is_absolute()) {
    return p;
  }
  return (fs::path(base_dir) / p).string();
}

}  // namespace

Scene scene_from_json(const std::string& json_text, const std::string& base_dir,
                      const SceneLoadOptions& opts) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::exception& e) {
    throw SceneError(std::string("malformed scene manifest: ") + e.what());
  }
  if (!doc.is_object() || !doc.contains("scene_id") ||
      !doc.contains("viewpoints")) {
    throw SceneError("malformed scene manifest: need scene_id and viewpoints");
  }

  std::vector<Viewpoint> viewpoints;
  for (const auto& v : doc.at("viewpoints")) {
    Viewpoint vp;
    vp.id = v.at("id").get<std::string>();
    const auto& pos = v.at("position");
    if (!pos.is_array() || pos.size() != 3) {
      throw SceneError("viewpoint " + vp.id + ": position must be [x,y,z]");
    }
    vp.position =
        Eigen::Vector3d(pos.at(0).get<double>(), pos.at(1).get<double>(),
                        pos.at(2).get<double>());
    if (v.contains("frames")) {
      for (const auto& f : v.at("frames")) {
        FrameRef frame;
        frame.heading = f.value("heading", 0);
        frame.rgb_path =
            resolve_path(base_dir, f.value("rgb_path", std::string()));
        frame.depth_path =
            resolve_path(base_dir, f.value("depth_path", std::string()));
        const auto& cam = f.at("camera");
        frame.camera.fx = cam.at("fx").get<double>();
        frame.camera.fy = cam.at("fy").get<double>();
        frame.camera.cx = cam.at("cx").get<double>();
        frame.camera.cy = cam.at("cy").get<double>();
        frame.camera.width = cam.at("width").get<int>();
        frame.camera.height = cam.at("height").get<int>();
        if (cam.contains("pose")) {
          frame.camera.pose =
              pose_from_flat(cam.at("pose"), "viewpoint " + vp.id);
        }
        if (opts.require_frame_files) {
          for (const std::string& p : {frame.rgb_path, frame.depth_path}) {
            if (!p.empty() && !fs::exists(p)) {
              throw SceneError("viewpoint " + vp.id +
                               ": referenced frame file missing: " + p);
            }
          }
        }
        vp.frames.push_back(std::move(frame));
      }
    }
    viewpoints.push_back(std::move(vp));
  }

  std::vector<std::pair<std::string, std::string>> edges;
  if (doc.contains("edges")) {
    for (const auto& e : doc.at("edges")) {
      if (!e.is_array() || e.size() != 2) {
        throw SceneError("malformed scene manifest: edge must be [id,id]");
      }
      edges.emplace_back(e.at(0).get<std::string>(),
                         e.at(1).get<std::string>());
    }
  }

  return Scene(doc.at("scene_id").get<std::string>(), std::move(viewpoints),
               edges);
}

Scene load_scene(const std::string& path, const SceneLoadOptions& opts) {
  std::ifstream in(path);
  if (!in) {
    throw SceneError("cannot open scene manifest: " + path);
  }
  std::stringstream buf;
  buf << in.rdbuf();
  return scene_from_json(buf.str(), fs::path(path).parent_path().string(),
                         opts);
}

std::string scene_to_json(const Scene& scene) {
  json doc;
  doc["scene_id"] = scene.id_;
  doc["viewpoints"] = json::array();
  for (const auto& vp : scene.viewpoints_) {
    json v;
    v["id"] = vp.id;
    v["position"] = {vp.position.x(), vp.position.y(), vp.position.z()};
    if (!vp.frames.empty()) {
      v["frames"] = json::array();
      for (const auto& f : vp.frames) {
        json fj;
        fj["heading"] = f.heading;
        fj["rgb_path"] = f.rgb_path;
        fj["depth_path"] = f.depth_path;
        fj["camera"] = {{"fx", f.camera.fx},     {"fy", f.camera.fy},
                        {"cx", f.camera.cx},     {"cy", f.camera.cy},
                        {"width", f.camera.width}, {"height", f.camera.height},
                        {"pose", pose_to_flat(f.camera.pose)}};
        v["frames"].push_back(std::move(fj));
      }
    }
    doc["viewpoints"].push_back(std::move(v));
  }
  doc["edges"] = json::array();
  for (const auto& [a, b] : scene.edges_) {
    doc["edges"].push_back({a, b});
  }
  return doc.dump(2);
}

void save_scene(const Scene& scene, const std::string& path) {
  std::ofstream out(path);
  if (!out) {
    throw SceneError("cannot write scene manifest: " + path);
  }
  out << scene_to_json(scene) << "\n";
}

std::vector<Episode> episodes_from_json(const std::string& json_text) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::exception& e) {
    throw SceneError(std::string("malformed episode file: ") + e.what());
  }
  if (!doc.is_object() || !doc.contains("episodes")) {
    throw SceneError("malformed episode file: need top-level 'episodes'");
  }
  std::vector<Episode> out;
  for (const auto& e : doc.at("episodes")) {
    Episode ep;
    ep.id = e.at("id").get<std::string>();
    ep.scene_id = e.at("scene_id").get<std::string>();
    ep.start = e.at("start").get<std::string>();
    ep.goal = e.at("goal").get<std::string>();
    ep.instruction = e.value("instruction", std::string());
    for (const auto& node : e.at("gt_path")) {
      ep.gt_path.push_back(node.get<std::string>());
    }
    ep.gt_path_length = e.value("gt_path_length", 0.0);
    ep.task_kind = task_kind_from_string(e.value("task_kind", "VLN"));
    out.push_back(std::move(ep));
  }
  return out;
}

std::vector<Episode> load_episodes(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw SceneError("cannot open episode file: " + path);
  }
  std::stringstream buf;
  buf << in.rdbuf();
  return episodes_from_json(buf.str());
}

std::string episodes_to_json(const std::vector<Episode>& episodes) {
  json doc;
  doc["episodes"] = json::array();
  for (const auto& ep : episodes) {
    json e;
    e["id"] = ep.id;
    e["scene_id"] = ep.scene_id;
    e["start"] = ep.start;
    e["goal"] = ep.goal;
    e["instruction"] = ep.instruction;
    e["gt_path"] = ep.gt_path;
    e["gt_path_length"] = ep.gt_path_length;
    e["task_kind"] = to_string(ep.task_kind);
    doc["episodes"].push_back(std::move(e));
  }
  return doc.dump(2);
}

void validate_episode(const Scene& scene, Episode& episode) {
  const std::string context = "episode " + episode.id;
  if (episode.scene_id != scene.id()) {
    throw SceneError(context + ": scene_id " + episode.scene_id +
                     " does not match scene " + scene.id());
  }
  if (episode.gt_path.empty()) {
    throw SceneError(context + ": empty gt_path");
  }
  if (episode.gt_path.front() != episode.start) {
    throw SceneError(context + ": gt_path does not begin at start " +
                     episode.start);
  }
  if (episode.gt_path.back() != episode.goal) {
    throw SceneError(context + ": gt_path does not end at goal " +
                     episode.goal);
  }
  const double computed = scene.path_length(episode.gt_path);  // checks edges
  if (episode.gt_path_length == 0.0) {
    episode.gt_path_length = computed;
  } else {
    const double denom = std::max(std::abs(computed), 1e-12);
    if (std::abs(episode.gt_path_length - computed) / denom > 1e-6) {
      throw SceneError(context + ": stored gt_path_length " +
                       std::to_string(episode.gt_path_length) +
                       " disagrees with recomputed " +
                       std::to_string(computed));
    }
  }
}

void SceneSet::add(Scene scene) {
  std::string key = scene.id();
  scenes_.insert_or_assign(std::move(key), std::move(scene));
}

const Scene& SceneSet::get(const std::string& scene_id) const {
  const auto it = scenes_.find(scene_id);
  if (it == scenes_.end()) {
    throw SceneError("unknown scene: " + scene_id);
  }
  return it->second;
}

}  // namespace naveval
