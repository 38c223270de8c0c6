#pragma once

#include "naveval/scene.hpp"

#include <span>
#include <string>
#include <vector>

namespace naveval {

/// Distance convention used for NE, GP and oracle success. Geodesic follows
/// the navigability graph; Euclidean is the straight line between positions.
enum class DistanceMode { Geodesic, Euclidean };

std::string to_string(DistanceMode mode);
DistanceMode distance_mode_from_string(const std::string& text);

/// One scored navigation outcome: the executed path plus the references the
/// metric formulas need.
struct EpisodeResult {
  std::string episode_id;
  const Scene* scene = nullptr;
  std::string start;
  std::string goal;
  std::vector<std::string> visited;  // executed path, visited[0] == start
  double t_pred = 0.0;               // executed path length, meters
  double t_gt = 0.0;                 // ground-truth path length T_i, meters
  double success_threshold = 3.0;    // meters, inclusive
};

struct MetricReport {
  std::size_t n_episodes = 0;
  double tl = 0.0;   // mean trajectory length, meters
  double ne = 0.0;   // mean navigation error, meters
  double sr = 0.0;   // success rate in [0,1]
  double spl = 0.0;  // success weighted by path length, in [0,1]
  double osr = 0.0;  // oracle success rate in [0,1]
  double gp = 0.0;   // mean goal progress, meters
  std::vector<std::string> warnings;
};

/// Distance between the final visited viewpoint and the goal. Unreachable
/// goals score +infinity (counted as failure downstream).
double nav_error(const EpisodeResult& result,
                 DistanceMode mode = DistanceMode::Geodesic);

/// 1 iff nav_error <= success_threshold (boundary inclusive).
int success(const EpisodeResult& result,
            DistanceMode mode = DistanceMode::Geodesic);

/// (1/N) sum S_i * T_i / max(T_pred, T_i); failures contribute 0. Episodes
/// where the executed path beats the ground-truth length are clamped to
/// ratio 1 and a warning is recorded.
double spl(std::span<const EpisodeResult> results,
           DistanceMode mode = DistanceMode::Geodesic,
           std::vector<std::string>* warnings = nullptr);

/// dist(start, goal) - dist(final, goal); positive means progress. Any
/// unreachable pair yields 0 with a warning.
double goal_progress(const EpisodeResult& result,
                     DistanceMode mode = DistanceMode::Geodesic,
                     std::vector<std::string>* warnings = nullptr);

/// 1 iff any visited viewpoint comes within the success threshold of the
/// goal.
int oracle_success(const EpisodeResult& result,
                   DistanceMode mode = DistanceMode::Geodesic);

/// Aggregates all metrics over a nonempty, homogeneous-threshold result set.
MetricReport aggregate(std::span<const EpisodeResult> results,
                       DistanceMode mode = DistanceMode::Geodesic);

/// Report as JSON (machine-readable, includes warnings).
std::string report_to_json(const MetricReport& report, DistanceMode mode);

/// Report as an aligned plain-text table.
std::string report_to_table(const MetricReport& report);

}  // namespace naveval
