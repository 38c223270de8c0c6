#include "naveval/metrics.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace naveval {

using nlohmann::json;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double distance(const Scene& scene, const std::string& a, const std::string& b,
                DistanceMode mode) {
  if (mode == DistanceMode::Euclidean) {
    return scene.euclidean(a, b);
  }
  const auto d = scene.geodesic(a, b);
  return d ? *d : kInf;
}

const Scene& scene_of(const EpisodeResult& r) {
  if (r.scene == nullptr) {
    throw std::invalid_argument("EpisodeResult " + r.episode_id +
                                " has no scene attached");
  }
  return *r.scene;
}

const std::string& final_viewpoint(const EpisodeResult& r) {
  if (r.visited.empty()) {
    throw std::invalid_argument("EpisodeResult " + r.episode_id +
                                " has empty visited path");
  }
  return r.visited.back();
}

}  // namespace

std::string to_string(DistanceMode mode) {
  return mode == DistanceMode::Geodesic ? "geodesic" : "euclidean";
}

DistanceMode distance_mode_from_string(const std::string& text) {
  if (text == "geodesic") return DistanceMode::Geodesic;
  if (text == "euclidean") return DistanceMode::Euclidean;
  throw std::invalid_argument("unknown distance mode: " + text);
}

double nav_error(const EpisodeResult& result, DistanceMode mode) {
  return distance(scene_of(result), final_viewpoint(result), result.goal,
                  mode);
}

int success(const EpisodeResult& result, DistanceMode mode) {
  return nav_error(result, mode) <= result.success_threshold ? 1 : 0;
}

double spl(std::span<const EpisodeResult> results, DistanceMode mode,
           std::vector<std::string>* warnings) {
  if (results.empty()) {
    throw std::invalid_argument("spl: empty result set");
  }
  double sum = 0.0;
  for (const auto& r : results) {
    if (success(r, mode) == 0) {
      continue;
    }
    if (r.t_gt <= 0.0) {
      // Degenerate start==goal episode: count the success at full weight.
      if (warnings) {
        warnings->push_back("episode " + r.episode_id +
                            ": nonpositive gt length, SPL term counted as 1");
      }
      sum += 1.0;
      continue;
    }
    if (r.t_pred < r.t_gt && warnings) {
      warnings->push_back("episode " + r.episode_id +
                          ": executed path shorter than ground truth (" +
                          std::to_string(r.t_pred) + " < " +
                          std::to_string(r.t_gt) + "), ratio clamped to 1");
    }
    sum += r.t_gt / std::max(r.t_pred, r.t_gt);
  }
  return sum / static_cast<double>(results.size());
}

double goal_progress(const EpisodeResult& result, DistanceMode mode,
                     std::vector<std::string>* warnings) {
  const Scene& scene = scene_of(result);
  const double from_start = distance(scene, result.start, result.goal, mode);
  const double from_final =
      distance(scene, final_viewpoint(result), result.goal, mode);
  if (!std::isfinite(from_start) || !std::isfinite(from_final)) {
    if (warnings) {
      warnings->push_back("episode " + result.episode_id +
                          ": goal unreachable, goal progress counted as 0");
    }
    return 0.0;
  }
  return from_start - from_final;
}

int oracle_success(const EpisodeResult& result, DistanceMode mode) {
  const Scene& scene = scene_of(result);
  if (result.visited.empty()) {
    throw std::invalid_argument("oracle_success: empty trajectory");
  }
  double best = kInf;
  for (const auto& v : result.visited) {
    best = std::min(best, distance(scene, v, result.goal, mode));
  }
  return best <= result.success_threshold ? 1 : 0;
}

MetricReport aggregate(std::span<const EpisodeResult> results,
                       DistanceMode mode) {
  if (results.empty()) {
    throw std::invalid_argument("aggregate: empty result set");
  }
  const double threshold = results.front().success_threshold;
  for (const auto& r : results) {
    if (r.success_threshold != threshold) {
      throw std::invalid_argument(
          "aggregate: mixed success thresholds in result set");
    }
  }

  MetricReport report;
  report.n_episodes = results.size();
  const double n = static_cast<double>(results.size());
  double tl = 0.0, ne = 0.0, sr = 0.0, osr = 0.0, gp = 0.0;
  for (const auto& r : results) {
    tl += r.t_pred;
    ne += nav_error(r, mode);
    sr += success(r, mode);
    osr += oracle_success(r, mode);
    gp += goal_progress(r, mode, &report.warnings);
  }
  report.tl = tl / n;
  report.ne = ne / n;
  report.sr = sr / n;
  report.osr = osr / n;
  report.gp = gp / n;
  report.spl = spl(results, mode, &report.warnings);
  return report;
}

std::string report_to_json(const MetricReport& report, DistanceMode mode) {
  json doc;
  doc["n_episodes"] = report.n_episodes;
  doc["distance_mode"] = to_string(mode);
  doc["TL"] = report.tl;
  doc["NE"] = std::isfinite(report.ne) ? json(report.ne) : json("inf");
  doc["SR"] = report.sr;
  doc["SPL"] = report.spl;
  doc["OSR"] = report.osr;
  doc["GP"] = report.gp;
  doc["warnings"] = report.warnings;
  return doc.dump(2);
}

std::string report_to_table(const MetricReport& report) {
  std::ostringstream out;
  char line[256];
  std::snprintf(line, sizeof(line), "%-10s %10s\n", "metric", "value");
  out << line << std::string(21, '-') << "\n";
  const auto row = [&](const char* name, double value, const char* unit) {
    std::snprintf(line, sizeof(line), "%-10s %10.4f %s\n", name, value, unit);
    out << line;
  };
  std::snprintf(line, sizeof(line), "%-10s %10zu\n", "episodes",
                report.n_episodes);
  out << line;
  row("TL", report.tl, "m");
  row("NE", report.ne, "m");
  row("SR", report.sr, "");
  row("SPL", report.spl, "");
  row("OSR", report.osr, "");
  row("GP", report.gp, "m");
  if (!report.warnings.empty()) {
    std::snprintf(line, sizeof(line), "%-10s %10zu\n", "warnings",
                  report.warnings.size());
    out << line;
  }
  return out.str();
}

}  // namespace naveval
