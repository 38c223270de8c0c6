#include "naveval/pointcloud.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numeric>
#include <sstream>

#include "naveval/rng.hpp"

namespace naveval {

namespace {

static_assert(std::endian::native == std::endian::little,
              "cloud container I/O assumes a little-endian host");

bool valid_depth(float d) { return std::isfinite(d) && d > 0.0f; }

Eigen::Matrix4d invert_rigid(const Eigen::Matrix4d& pose) {
  Eigen::Matrix4d inv = Eigen::Matrix4d::Identity();
  const Eigen::Matrix3d rt = pose.topLeftCorner<3, 3>().transpose();
  inv.topLeftCorner<3, 3>() = rt;
  inv.topRightCorner<3, 1>() = -rt * pose.topRightCorner<3, 1>();
  return inv;
}

void check_frame_dims(const DepthImage& depth, const RgbImage& rgb,
                      const CameraParams& camera) {
  if (depth.width != camera.width || depth.height != camera.height) {
    throw CloudError("depth image does not match camera dimensions");
  }
  if (rgb.width != depth.width || rgb.height != depth.height) {
    throw CloudError("rgb image does not match depth dimensions");
  }
}

PointCloud gather(const PointCloud& cloud,
                  const std::vector<std::size_t>& indices) {
  PointCloud out;
  out.positions.reserve(indices.size());
  out.colors.reserve(indices.size());
  for (std::size_t i : indices) {
    out.append(cloud.positions[i], cloud.colors[i]);
  }
  return out;
}

}  // namespace

Eigen::Vector3d unproject_pixel(double u, double v, double d,
                                const CameraParams& camera) {
  const Eigen::Vector4d cam((u - camera.cx) * d / camera.fx,
                            (v - camera.cy) * d / camera.fy, d, 1.0);
  return (camera.pose * cam).head<3>();
}

Eigen::Vector3d project_point(const Eigen::Vector3d& world,
                              const CameraParams& camera) {
  const Eigen::Matrix4d world_to_cam = invert_rigid(camera.pose);
  const Eigen::Vector3d cam = world_to_cam.topLeftCorner<3, 3>() * world +
                              world_to_cam.topRightCorner<3, 1>();
  const double d = cam.z();
  if (d <= 0.0) {
    const double nan = std::numeric_limits<double>::quiet_NaN();
    return {nan, nan, d};
  }
  return {camera.fx * cam.x() / d + camera.cx,
          camera.fy * cam.y() / d + camera.cy, d};
}

PointCloud unproject(const DepthImage& depth, const RgbImage& rgb,
                     const CameraParams& camera) {
  check_frame_dims(depth, rgb, camera);
  PointCloud cloud;
  for (int y = 0; y < depth.height; ++y) {
    for (int x = 0; x < depth.width; ++x) {
      const float d = depth.at(x, y);
      if (!valid_depth(d)) {
        continue;
      }
      const std::uint8_t* px = rgb.at(x, y);
      cloud.append(unproject_pixel(x, y, d, camera),
                   Eigen::Vector3d(px[0] / 255.0, px[1] / 255.0,
                                   px[2] / 255.0));
    }
  }
  return cloud;
}

PointCloud extract_object(const DepthImage& depth, const RgbImage& rgb,
                          const MaskImage& mask, const CameraParams& camera) {
  check_frame_dims(depth, rgb, camera);
  if (mask.width != depth.width || mask.height != depth.height) {
    throw CloudError("mask image does not match depth dimensions");
  }
  PointCloud cloud;
  for (int y = 0; y < depth.height; ++y) {
    for (int x = 0; x < depth.width; ++x) {
      if (mask.at(x, y) == 0) {
        continue;
      }
      const float d = depth.at(x, y);
      if (!valid_depth(d)) {
        continue;
      }
      const std::uint8_t* px = rgb.at(x, y);
      cloud.append(unproject_pixel(x, y, d, camera),
                   Eigen::Vector3d(px[0] / 255.0, px[1] / 255.0,
                                   px[2] / 255.0));
    }
  }
  return cloud;
}

PointCloud merge(const std::vector<PointCloud>& clouds) {
  PointCloud out;
  std::size_t total = 0;
  for (const auto& c : clouds) {
    total += c.size();
  }
  out.positions.reserve(total);
  out.colors.reserve(total);
  for (const auto& c : clouds) {
    out.positions.insert(out.positions.end(), c.positions.begin(),
                         c.positions.end());
    out.colors.insert(out.colors.end(), c.colors.begin(), c.colors.end());
  }
  return out;
}

PointCloud uniform_sample(const PointCloud& cloud, std::size_t count,
                          std::uint64_t seed) {
  const std::size_t n = cloud.size();
  if (n == 0) {
    throw CloudError("uniform_sample: empty cloud");
  }
  if (count == 0) {
    throw CloudError("uniform_sample: target count must be positive");
  }
  if (n == count) {
    return cloud;
  }
  std::mt19937_64 rng(seed);
  std::vector<std::size_t> indices;
  if (n > count) {
    // Partial Fisher-Yates: the first `count` slots of a full shuffle.
    std::vector<std::size_t> pool(n);
    std::iota(pool.begin(), pool.end(), std::size_t{0});
    for (std::size_t i = 0; i < count; ++i) {
      const std::size_t j = i + bounded_rand(rng, n - i);
      std::swap(pool[i], pool[j]);
    }
    indices.assign(pool.begin(), pool.begin() + static_cast<long>(count));
  } else {
    // Undersized cloud: keep every point, then top up with replacement.
    indices.resize(n);
    std::iota(indices.begin(), indices.end(), std::size_t{0});
    for (std::size_t i = n; i < count; ++i) {
      indices.push_back(bounded_rand(rng, n));
    }
  }
  return gather(cloud, indices);
}

std::vector<std::size_t> fps_centers(const PointCloud& cloud,
                                     std::size_t count, std::uint64_t seed) {
  const std::size_t n = cloud.size();
  if (count == 0 || count > n) {
    throw CloudError("fps_centers: need 1 <= count <= cloud size");
  }
  std::mt19937_64 rng(seed);
  std::vector<std::size_t> centers;
  centers.reserve(count);
  centers.push_back(bounded_rand(rng, n));

  std::vector<double> dist(n);
  for (std::size_t i = 0; i < n; ++i) {
    dist[i] = (cloud.positions[i] - cloud.positions[centers[0]]).squaredNorm();
  }
  while (centers.size() < count) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < n; ++i) {
      if (dist[i] > dist[best]) {
        best = i;
      }
    }
    centers.push_back(best);
    for (std::size_t i = 0; i < n; ++i) {
      dist[i] = std::min(
          dist[i], (cloud.positions[i] - cloud.positions[best]).squaredNorm());
    }
  }
  return centers;
}

std::vector<std::vector<std::size_t>> knn_group(
    const PointCloud& cloud, const std::vector<std::size_t>& centers,
    std::size_t k) {
  const std::size_t n = cloud.size();
  if (k == 0 || k > n) {
    throw CloudError("knn_group: need 1 <= k <= cloud size");
  }
  std::vector<std::vector<std::size_t>> patches;
  patches.reserve(centers.size());
  std::vector<std::pair<double, std::size_t>> order;
  for (std::size_t c : centers) {
    if (c >= n) {
      throw CloudError("knn_group: center index out of range");
    }
    order.clear();
    order.reserve(n - 1);
    for (std::size_t i = 0; i < n; ++i) {
      if (i == c) {
        continue;
      }
      order.emplace_back((cloud.positions[i] - cloud.positions[c]).norm(), i);
    }
    const auto take = static_cast<long>(k - 1);
    std::partial_sort(order.begin(), order.begin() + take, order.end());
    std::vector<std::size_t> patch;
    patch.reserve(k);
    patch.push_back(c);
    for (long i = 0; i < take; ++i) {
      patch.push_back(order[static_cast<std::size_t>(i)].second);
    }
    patches.push_back(std::move(patch));
  }
  return patches;
}

PointCloud remove_outliers(const PointCloud& cloud, std::size_t neighbors,
                           double sigma) {
  const std::size_t n = cloud.size();
  if (n <= 2 || neighbors == 0) {
    return cloud;
  }
  const std::size_t k = std::min(neighbors, n - 1);
  std::vector<double> mean_dist(n);
  std::vector<double> scratch;
  for (std::size_t i = 0; i < n; ++i) {
    scratch.clear();
    scratch.reserve(n - 1);
    for (std::size_t j = 0; j < n; ++j) {
      if (j != i) {
        scratch.push_back((cloud.positions[i] - cloud.positions[j]).norm());
      }
    }
    std::partial_sort(scratch.begin(), scratch.begin() + static_cast<long>(k),
                      scratch.end());
    mean_dist[i] =
        std::accumulate(scratch.begin(), scratch.begin() + static_cast<long>(k),
                        0.0) /
        static_cast<double>(k);
  }
  const double mu =
      std::accumulate(mean_dist.begin(), mean_dist.end(), 0.0) /
      static_cast<double>(n);
  double var = 0.0;
  for (double d : mean_dist) {
    var += (d - mu) * (d - mu);
  }
  const double cutoff = mu + sigma * std::sqrt(var / static_cast<double>(n));

  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < n; ++i) {
    if (mean_dist[i] <= cutoff) {
      keep.push_back(i);
    }
  }
  return gather(cloud, keep);
}

PatchGrouping group_cloud(const PointCloud& merged,
                          const SamplingConfig& config) {
  if (merged.empty()) {
    throw CloudError("group_cloud: empty cloud");
  }
  PointCloud working = merged;
  if (config.drop_outliers) {
    working =
        remove_outliers(working, config.outlier_neighbors, config.outlier_sigma);
  }
  PatchGrouping grouping;
  grouping.cloud = uniform_sample(working, config.cloud_points,
                                  derive_seed(config.seed, "sample"));
  grouping.centers = fps_centers(grouping.cloud, config.group_centers,
                                 derive_seed(config.seed, "centers"));
  grouping.patches = knn_group(grouping.cloud, grouping.centers,
                               config.group_size);
  return grouping;
}

void write_cloud(const std::string& path, const PointCloud& cloud) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw CloudError("cannot open " + path + " for writing");
  }
  out.write("PC6\0", 4);
  const std::uint32_t version = 1;
  out.write(reinterpret_cast<const char*>(&version), sizeof(version));
  const std::uint64_t count = cloud.size();
  out.write(reinterpret_cast<const char*>(&count), sizeof(count));
  std::vector<float> row(6);
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    for (int a = 0; a < 3; ++a) {
      row[static_cast<std::size_t>(a)] =
          static_cast<float>(cloud.positions[i][a]);
      row[static_cast<std::size_t>(a + 3)] =
          static_cast<float>(cloud.colors[i][a]);
    }
    out.write(reinterpret_cast<const char*>(row.data()), 6 * sizeof(float));
  }
  if (!out) {
    throw CloudError("short write to " + path);
  }
}

PointCloud read_cloud(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw CloudError("cannot open " + path + " for reading");
  }
  char magic[4] = {};
  in.read(magic, 4);
  if (in.gcount() != 4 || std::memcmp(magic, "PC6\0", 4) != 0) {
    throw CloudError(path + ": bad magic, not a cloud container");
  }
  std::uint32_t version = 0;
  in.read(reinterpret_cast<char*>(&version), sizeof(version));
  if (version != 1) {
    throw CloudError(path + ": unsupported container version " +
                     std::to_string(version));
  }
  std::uint64_t count = 0;
  in.read(reinterpret_cast<char*>(&count), sizeof(count));
  if (!in) {
    throw CloudError(path + ": truncated header");
  }
  PointCloud cloud;
  cloud.positions.reserve(count);
  cloud.colors.reserve(count);
  std::vector<float> row(6);
  for (std::uint64_t i = 0; i < count; ++i) {
    in.read(reinterpret_cast<char*>(row.data()), 6 * sizeof(float));
    if (in.gcount() != static_cast<std::streamsize>(6 * sizeof(float))) {
      throw CloudError(path + ": truncated point data");
    }
    cloud.append(Eigen::Vector3d(row[0], row[1], row[2]),
                 Eigen::Vector3d(row[3], row[4], row[5]));
  }
  return cloud;
}

void write_ply(const std::string& path, const PointCloud& cloud) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw CloudError("cannot open " + path + " for writing");
  }
  out << "ply\nformat ascii 1.0\nelement vertex " << cloud.size()
      << "\nproperty float x\nproperty float y\nproperty float z\n"
         "property uchar red\nproperty uchar green\nproperty uchar blue\n"
         "end_header\n";
  out << std::setprecision(10);
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const auto& p = cloud.positions[i];
    const auto& c = cloud.colors[i];
    const auto channel = [](double v) {
      return std::clamp(static_cast<int>(std::lround(v * 255.0)), 0, 255);
    };
    out << p.x() << " " << p.y() << " " << p.z() << " " << channel(c.x())
        << " " << channel(c.y()) << " " << channel(c.z()) << "\n";
  }
  if (!out) {
    throw CloudError("short write to " + path);
  }
}

PointCloud read_ply(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw CloudError("cannot open " + path + " for reading");
  }
  std::string line;
  if (!std::getline(in, line) || line != "ply") {
    throw CloudError(path + ": missing ply magic");
  }
  if (!std::getline(in, line) || line.rfind("format ascii 1.0", 0) != 0) {
    throw CloudError(path + ": only ascii 1.0 is supported");
  }

  std::size_t vertex_count = 0;
  bool in_vertex_element = false;
  std::vector<std::string> vertex_props;
  std::vector<std::string> vertex_types;
  while (std::getline(in, line)) {
    std::istringstream ls(line);
    std::string word;
    ls >> word;
    if (word == "end_header") {
      break;
    }
    if (word == "comment") {
      continue;
    }
    if (word == "element") {
      std::string name;
      std::size_t count = 0;
      ls >> name >> count;
      in_vertex_element = (name == "vertex");
      if (in_vertex_element) {
        vertex_count = count;
      } else if (count > 0) {
        throw CloudError(path + ": unsupported element '" + name + "'");
      }
      continue;
    }
    if (word == "property" && in_vertex_element) {
      std::string type, name;
      ls >> type >> name;
      if (type == "list") {
        throw CloudError(path + ": list properties are not supported");
      }
      vertex_types.push_back(type);
      vertex_props.push_back(name);
    }
  }

  int ix = -1, iy = -1, iz = -1, ir = -1, ig = -1, ib = -1;
  for (std::size_t i = 0; i < vertex_props.size(); ++i) {
    const auto idx = static_cast<int>(i);
    if (vertex_props[i] == "x") ix = idx;
    if (vertex_props[i] == "y") iy = idx;
    if (vertex_props[i] == "z") iz = idx;
    if (vertex_props[i] == "red") ir = idx;
    if (vertex_props[i] == "green") ig = idx;
    if (vertex_props[i] == "blue") ib = idx;
  }
  if (ix < 0 || iy < 0 || iz < 0) {
    throw CloudError(path + ": vertex element lacks x/y/z properties");
  }
  const bool has_color = ir >= 0 && ig >= 0 && ib >= 0;

  const auto color_scale = [&](int prop) {
    return vertex_types[static_cast<std::size_t>(prop)] == "uchar" ? 255.0
                                                                   : 1.0;
  };

  PointCloud cloud;
  cloud.positions.reserve(vertex_count);
  cloud.colors.reserve(vertex_count);
  std::vector<double> fields(vertex_props.size());
  for (std::size_t v = 0; v < vertex_count; ++v) {
    for (std::size_t p = 0; p < fields.size(); ++p) {
      if (!(in >> fields[p])) {
        throw CloudError(path + ": truncated vertex data at row " +
                         std::to_string(v));
      }
    }
    Eigen::Vector3d color = Eigen::Vector3d::Zero();
    if (has_color) {
      color = {fields[static_cast<std::size_t>(ir)] / color_scale(ir),
               fields[static_cast<std::size_t>(ig)] / color_scale(ig),
               fields[static_cast<std::size_t>(ib)] / color_scale(ib)};
    }
    cloud.append(Eigen::Vector3d(fields[static_cast<std::size_t>(ix)],
                                 fields[static_cast<std::size_t>(iy)],
                                 fields[static_cast<std::size_t>(iz)]),
                 color);
  }
  return cloud;
}

}  // namespace naveval
