#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "naveval/adapters.hpp"
#include "naveval/datagen.hpp"
#include "naveval/metrics.hpp"
#include "naveval/pointcloud.hpp"

namespace naveval {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

extern const char kHarnessVersion[];

/// Everything a run needs. Values resolve as: built-in defaults, then the
/// config file, then explicit command-line flags.
struct RunConfig {
  std::vector<std::string> scene_paths;
  std::string episodes_path;
  std::string policy = "oracle";  // oracle | greedy | random | first | remote
  std::string belief = "null";    // null | scripted | remote
  std::string scripted_beliefs_path;
  int max_steps = 15;
  double success_threshold = 3.0;
  std::uint64_t seed = 0;
  int jobs = 1;
  std::string out_dir = "runs/out";
  DistanceMode metric_distance = DistanceMode::Geodesic;
  SamplingConfig sampling;
  GenerationParams belief_decoding = GenerationParams::belief_defaults();
  GenerationParams nav_decoding = GenerationParams::nav_defaults();
  EndpointConfig policy_endpoint;
  EndpointConfig belief_endpoint;
  MixtureSpec mixture = MixtureSpec::defaults();
};

/// Applies one key=value pair; throws ConfigError on unknown keys or
/// unparseable values. Shared by the file loader and the flag layer.
void set_config_value(RunConfig& config, const std::string& key,
                      const std::string& value);

/// Parses a key=value config file ('#' comments, blank lines ignored,
/// values optionally double-quoted, lists comma-separated).
RunConfig load_run_config(const std::string& path);

/// Full provenance record written into every run directory: the resolved
/// config, the sampling and decoding constants, the mixture weights, and
/// the template version and hashes. Sufficient to re-score a run.
std::string config_snapshot_json(const RunConfig& config);

}  // namespace naveval
