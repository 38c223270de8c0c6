#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "naveval/image_io.hpp"
#include "naveval/scene.hpp"

namespace naveval {

class CloudError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Colored point set. Positions are world-frame meters, colors are RGB
/// in [0, 1]. The two vectors always have equal length.
struct PointCloud {
  std::vector<Eigen::Vector3d> positions;
  std::vector<Eigen::Vector3d> colors;

  std::size_t size() const { return positions.size(); }
  bool empty() const { return positions.empty(); }
  void append(const Eigen::Vector3d& p, const Eigen::Vector3d& c) {
    positions.push_back(p);
    colors.push_back(c);
  }
};

/// Pinhole back-projection of one pixel. `d` is the z-depth in the camera
/// frame; the result is in the world frame via the camera pose.
Eigen::Vector3d unproject_pixel(double u, double v, double d,
                                const CameraParams& camera);

/// Forward projection of a world point. Returns (u, v, d) where d is the
/// camera-frame depth; d <= 0 means the point is behind the image plane.
Eigen::Vector3d project_point(const Eigen::Vector3d& world,
                              const CameraParams& camera);

/// Back-projects every valid depth pixel (finite, > 0) in row-major scan
/// order. Colors are taken from `rgb` and scaled to [0, 1]. The images and
/// the camera intrinsics must agree on dimensions.
PointCloud unproject(const DepthImage& depth, const RgbImage& rgb,
                     const CameraParams& camera);

/// Like unproject() but keeps only pixels where the mask is nonzero.
PointCloud extract_object(const DepthImage& depth, const RgbImage& rgb,
                          const MaskImage& mask, const CameraParams& camera);

/// Concatenates clouds in argument order.
PointCloud merge(const std::vector<PointCloud>& clouds);

/// Resamples to exactly `count` points with a seeded generator.
///   n == count  returns the cloud unchanged,
///   n >  count  draws without replacement (partial Fisher-Yates),
///   n <  count  keeps every point in order, then appends draws with
///               replacement until the target is met.
/// Throws on an empty input.
PointCloud uniform_sample(const PointCloud& cloud, std::size_t count,
                          std::uint64_t seed);

/// Farthest-point sampling. The first center is a seeded uniform draw;
/// each following center maximizes the distance to the chosen set, ties
/// resolved toward the lowest index. Returns `count` indices into `cloud`.
std::vector<std::size_t> fps_centers(const PointCloud& cloud,
                                     std::size_t count, std::uint64_t seed);

/// k nearest neighbors of each center. A patch lists the center index
/// first, then the k-1 nearest other points ordered by (distance, index).
std::vector<std::vector<std::size_t>> knn_group(
    const PointCloud& cloud, const std::vector<std::size_t>& centers,
    std::size_t k);

/// Drops points whose mean distance to their `neighbors` nearest points
/// exceeds mean + sigma * stddev of that statistic over the cloud.
PointCloud remove_outliers(const PointCloud& cloud, std::size_t neighbors,
                           double sigma);

struct SamplingConfig {
  std::size_t cloud_points = 8192;   // resampled cloud size
  std::size_t group_centers = 512;   // farthest-point centers
  std::size_t group_size = 32;       // points per patch, center included
  std::uint64_t seed = 0;
  bool drop_outliers = false;
  std::size_t outlier_neighbors = 16;
  double outlier_sigma = 2.0;
};

struct PatchGrouping {
  PointCloud cloud;  // the resampled cloud the indices refer to
  std::vector<std::size_t> centers;
  std::vector<std::vector<std::size_t>> patches;
};

/// Full sampling pipeline: optional outlier pass, uniform resample to
/// cloud_points, farthest-point centers, k-NN patches.
PatchGrouping group_cloud(const PointCloud& merged,
                          const SamplingConfig& config);

/// Binary cloud container: magic "PC6\0", u32 version (1), u64 point
/// count, then count * 6 little-endian float32 (x y z r g b).
void write_cloud(const std::string& path, const PointCloud& cloud);
PointCloud read_cloud(const std::string& path);

/// ASCII PLY with float x/y/z and uchar red/green/blue vertex properties.
void write_ply(const std::string& path, const PointCloud& cloud);

/// Minimal PLY reader: ascii 1.0, float positions, optional uchar colors.
PointCloud read_ply(const std::string& path);

}  // namespace naveval
