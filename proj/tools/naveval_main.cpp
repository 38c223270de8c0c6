#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>

#include "naveval/adapters.hpp"
#include "naveval/datagen.hpp"
#include "naveval/engine.hpp"
#include "naveval/image_io.hpp"
#include "naveval/pointcloud.hpp"
#include "naveval/rng.hpp"
#include "naveval/run_config.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace naveval;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

/// Declares string-typed flags that map onto config keys, so the command
/// line and the config file share one parser and one precedence rule:
/// flags beat file values, file values beat defaults.
class Overrides {
 public:
  void add(CLI::App* cmd, const std::string& flag, const std::string& key,
           const std::string& help) {
    storage_.push_back(std::make_unique<std::string>());
    entries_.push_back(
        {cmd->add_option(flag, *storage_.back(), help), key,
         storage_.back().get()});
  }

  void apply(RunConfig& config) const {
    for (const auto& e : entries_) {
      if (e.option->count() > 0) {
        set_config_value(config, e.key, *e.value);
      }
    }
  }

 private:
  struct Entry {
    CLI::Option* option;
    std::string key;
    const std::string* value;
  };
  std::vector<std::unique_ptr<std::string>> storage_;
  std::vector<Entry> entries_;
};

std::vector<std::string> expand_scene_paths(
    const std::vector<std::string>& paths) {
  std::vector<std::string> files;
  for (const auto& p : paths) {
    if (fs::is_directory(p)) {
      std::vector<std::string> inside;
      for (const auto& entry : fs::directory_iterator(p)) {
        if (entry.path().extension() == ".json") {
          inside.push_back(entry.path().string());
        }
      }
      std::sort(inside.begin(), inside.end());
      files.insert(files.end(), inside.begin(), inside.end());
    } else {
      files.push_back(p);
    }
  }
  return files;
}

SceneSet load_scene_set(const std::vector<std::string>& paths,
                        bool require_frames) {
  if (paths.empty()) {
    throw ConfigError("no scene manifests given");
  }
  SceneSet scenes;
  SceneLoadOptions opts;
  opts.require_frame_files = require_frames;
  for (const auto& path : expand_scene_paths(paths)) {
    scenes.add(load_scene(path, opts));
  }
  return scenes;
}

std::vector<Episode> load_validated_episodes(const std::string& path,
                                             const SceneSet& scenes) {
  if (path.empty()) {
    throw ConfigError("no episodes file given");
  }
  auto episodes = load_episodes(path);
  for (auto& episode : episodes) {
    validate_episode(scenes.get(episode.scene_id), episode);
  }
  return episodes;
}

PolicyFactory make_policy_factory(const RunConfig& config) {
  if (config.policy == "oracle") {
    return [](const Scene& scene, const Episode& episode) {
      return std::make_unique<OraclePolicy>(scene, episode);
    };
  }
  if (config.policy == "greedy") {
    const double threshold = config.success_threshold;
    return [threshold](const Scene& scene, const Episode& episode)
               -> std::unique_ptr<NavPolicy> {
      return std::make_unique<GreedyPolicy>(scene, episode.goal, threshold);
    };
  }
  if (config.policy == "random") {
    const std::uint64_t seed = config.seed;
    return [seed](const Scene&, const Episode& episode)
               -> std::unique_ptr<NavPolicy> {
      return std::make_unique<RandomPolicy>(
          derive_seed(seed, "policy:" + episode.id));
    };
  }
  if (config.policy == "first") {
    return [](const Scene&, const Episode&) -> std::unique_ptr<NavPolicy> {
      return std::make_unique<FunctionPolicy>(
          [](const PromptBundle&, const Observation& obs, const History&)
              -> PolicyDecision {
            if (obs.candidates.empty()) {
              return {"stop", Action::stop(), false};
            }
            return {obs.candidates.front(),
                    Action::go_to(obs.candidates.front()), false};
          });
    };
  }
  if (config.policy == "remote") {
    auto client = std::make_shared<RemoteClient>(config.policy_endpoint);
    const GenerationParams params = config.nav_decoding;
    return [client, params](const Scene&, const Episode&)
               -> std::unique_ptr<NavPolicy> {
      return std::make_unique<RemotePolicy>(client, params);
    };
  }
  throw ConfigError("unknown policy backend: " + config.policy);
}

BeliefFactory make_belief_factory(const RunConfig& config) {
  if (config.belief == "null") {
    return [](const Scene&, const Episode&) -> std::unique_ptr<BeliefSource> {
      return std::make_unique<NullBeliefSource>();
    };
  }
  if (config.belief == "scripted") {
    if (config.scripted_beliefs_path.empty()) {
      throw ConfigError("belief=scripted needs scripted_beliefs=<file>");
    }
    auto book = std::make_shared<ScriptedBeliefBook>(
        load_scripted_beliefs(config.scripted_beliefs_path));
    return [book](const Scene&, const Episode& episode)
               -> std::unique_ptr<BeliefSource> {
      return std::make_unique<ScriptedBeliefSource>(
          book->script_for(episode.id));
    };
  }
  if (config.belief == "remote") {
    auto client = std::make_shared<RemoteClient>(config.belief_endpoint);
    const GenerationParams params = config.belief_decoding;
    return [client, params](const Scene&, const Episode&)
               -> std::unique_ptr<BeliefSource> {
      return std::make_unique<RemoteBeliefSource>(client, params);
    };
  }
  throw ConfigError("unknown belief backend: " + config.belief);
}

void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw std::runtime_error("cannot open " + path + " for writing");
  }
  out << content;
}

int cmd_run(const RunConfig& config) {
  SceneSet scenes;
  std::vector<Episode> episodes;
  PolicyFactory policy_factory;
  BeliefFactory belief_factory;
  try {
    scenes = load_scene_set(config.scene_paths,
                            /*require_frames=*/config.belief == "remote");
    episodes = load_validated_episodes(config.episodes_path, scenes);
    policy_factory = make_policy_factory(config);
    belief_factory = make_belief_factory(config);
    fs::create_directories(config.out_dir);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  }

  try {
    EngineConfig engine_config;
    engine_config.max_steps = config.max_steps;
    engine_config.seed = config.seed;
    engine_config.sampling = config.sampling;

    const RunOutcome outcome =
        run_episodes(scenes, episodes, policy_factory, belief_factory,
                     engine_config, config.jobs);

    const fs::path out_dir(config.out_dir);
    write_trajectories((out_dir / "trajectories.jsonl").string(),
                       outcome.trajectories);
    write_text_file((out_dir / "config.json").string(),
                    config_snapshot_json(config) + "\n");
    if (!outcome.aborts.empty()) {
      json aborts = json::array();
      for (const auto& a : outcome.aborts) {
        aborts.push_back(
            {{"episode_id", a.episode_id}, {"step", a.step},
             {"reason", a.reason}});
      }
      write_text_file((out_dir / "aborts.json").string(),
                      aborts.dump(2) + "\n");
    }

    std::size_t warning_count = 0;
    for (const auto& t : outcome.trajectories) {
      warning_count += t.warnings.size();
    }
    std::cout << "episodes: " << episodes.size()
              << "  completed: " << outcome.trajectories.size()
              << "  aborted: " << outcome.aborts.size()
              << "  warnings: " << warning_count << "\n"
              << "wrote " << (out_dir / "trajectories.jsonl").string() << "\n";
    for (const auto& a : outcome.aborts) {
      std::cerr << "abort: episode " << a.episode_id << " step " << a.step
                << ": " << a.reason << "\n";
    }
    return outcome.aborts.empty() ? kExitOk : kExitRuntime;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
}

int evaluate_to_report(const std::string& trajectories_path,
                       const SceneSet& scenes,
                       const std::vector<Episode>& episodes, double threshold,
                       DistanceMode mode, const std::string& json_out) {
  std::unordered_map<std::string, const Episode*> by_id;
  for (const auto& e : episodes) {
    by_id[e.id] = &e;
  }
  const auto trajectories = read_trajectories(trajectories_path);
  std::vector<EpisodeResult> results;
  results.reserve(trajectories.size());
  for (const auto& traj : trajectories) {
    const auto it = by_id.find(traj.episode_id);
    if (it == by_id.end()) {
      throw ConfigError("trajectory episode " + traj.episode_id +
                        " is not in the episodes file");
    }
    const Episode& episode = *it->second;
    results.push_back(make_result(scenes.get(episode.scene_id), episode, traj,
                                  threshold));
  }
  if (results.empty()) {
    throw ConfigError("no trajectories to score in " + trajectories_path);
  }
  const MetricReport report = aggregate(results, mode);
  const std::string rendered_json = report_to_json(report, mode);
  std::cout << report_to_table(report) << "\n" << rendered_json << "\n";
  if (!json_out.empty()) {
    write_text_file(json_out, rendered_json + "\n");
  }
  return kExitOk;
}

struct EvalArgs {
  std::string trajectories;
  std::vector<std::string> scenes;
  std::string episodes;
  double threshold = 3.0;
  std::string distance = "geodesic";
  std::string json_out;
};

int cmd_eval(const EvalArgs& args) {
  try {
    const SceneSet scenes = load_scene_set(args.scenes, false);
    const auto episodes = load_validated_episodes(args.episodes, scenes);
    return evaluate_to_report(args.trajectories, scenes, episodes,
                              args.threshold,
                              distance_mode_from_string(args.distance),
                              args.json_out);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  }
}

struct PcgenArgs {
  std::string scene;
  std::string viewpoint;
  bool all = false;
  std::vector<std::string> masks;
  std::string out;
  std::string out_dir;
  std::string ply;
  std::size_t points = SamplingConfig{}.cloud_points;
  std::uint64_t seed = 0;
};

PointCloud build_viewpoint_cloud(const Viewpoint& vp,
                                 const std::vector<std::string>& mask_paths) {
  std::vector<PointCloud> parts;
  if (!mask_paths.empty()) {
    std::vector<const FrameRef*> usable;
    for (const auto& frame : vp.frames) {
      if (!frame.rgb_path.empty() && !frame.depth_path.empty()) {
        usable.push_back(&frame);
      }
    }
    if (usable.size() != 1) {
      throw CloudError(
          "per-object masks need exactly one frame with imagery at " + vp.id);
    }
    const RgbImage rgb = read_ppm(usable[0]->rgb_path);
    const DepthImage depth = read_pfm(usable[0]->depth_path);
    for (const auto& mask_path : mask_paths) {
      const MaskImage mask = read_pgm(mask_path);
      parts.push_back(extract_object(depth, rgb, mask, usable[0]->camera));
    }
  } else {
    for (const auto& frame : vp.frames) {
      if (frame.rgb_path.empty() || frame.depth_path.empty()) {
        continue;
      }
      const RgbImage rgb = read_ppm(frame.rgb_path);
      const DepthImage depth = read_pfm(frame.depth_path);
      parts.push_back(unproject(depth, rgb, frame.camera));
    }
  }
  if (parts.empty()) {
    throw CloudError("viewpoint " + vp.id + " has no imagery");
  }
  return merge(parts);
}

int cmd_pcgen(const PcgenArgs& args) {
  Scene scene;
  try {
    if (args.all != args.viewpoint.empty() ||  // exactly one of the two
        (args.all && args.out_dir.empty()) ||
        (!args.all && args.out.empty())) {
      throw ConfigError(
          "need either --viewpoint with --out, or --all with --out-dir");
    }
    if (args.all && !args.masks.empty()) {
      throw ConfigError("--mask only applies to single-viewpoint generation");
    }
    scene = load_scene(args.scene);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  }

  try {
    if (!args.all) {
      const Viewpoint& vp = scene.viewpoint(args.viewpoint);
      const PointCloud merged = build_viewpoint_cloud(vp, args.masks);
      const PointCloud cloud =
          uniform_sample(merged, args.points, args.seed);
      write_cloud(args.out, cloud);
      if (!args.ply.empty()) {
        write_ply(args.ply, cloud);
      }
      std::cout << "wrote " << args.out << " (" << cloud.size()
                << " points)\n";
      return kExitOk;
    }

    fs::create_directories(args.out_dir);
    std::size_t written = 0, skipped = 0;
    for (const auto& vp : scene.viewpoints()) {
      const bool has_imagery =
          std::any_of(vp.frames.begin(), vp.frames.end(), [](const FrameRef& f) {
            return !f.rgb_path.empty() && !f.depth_path.empty();
          });
      if (!has_imagery) {
        ++skipped;
        std::cerr << "skipping " << vp.id << ": no imagery\n";
        continue;
      }
      const PointCloud merged = build_viewpoint_cloud(vp, {});
      const PointCloud cloud = uniform_sample(
          merged, args.points, derive_seed(args.seed, vp.id));
      const std::string path =
          (fs::path(args.out_dir) / cloud_ref_name(scene.id(), vp.id))
              .string();
      write_cloud(path, cloud);
      ++written;
    }
    std::cout << "wrote " << written << " clouds to " << args.out_dir << " ("
              << skipped << " skipped)\n";
    return kExitOk;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
}

struct ExportArgs {
  std::string run_dir;
  std::string trajectories;
  std::string episodes;
  std::vector<std::string> scenes;
  std::string clouds;
  std::string out;
  bool with_hypotheses = false;
};

int cmd_export_align(const ExportArgs& args) {
  try {
    std::string trajectories_path = args.trajectories;
    std::string episodes_path = args.episodes;
    std::vector<std::string> scene_paths = args.scenes;

    if (!args.run_dir.empty()) {
      const fs::path run_dir(args.run_dir);
      if (trajectories_path.empty()) {
        trajectories_path = (run_dir / "trajectories.jsonl").string();
      }
      std::ifstream snapshot_in(run_dir / "config.json");
      if (snapshot_in) {
        json snapshot;
        snapshot_in >> snapshot;
        if (episodes_path.empty()) {
          episodes_path = snapshot.value("episodes", std::string());
        }
        if (scene_paths.empty() && snapshot.contains("scenes")) {
          scene_paths =
              snapshot.at("scenes").get<std::vector<std::string>>();
        }
      }
    }
    if (trajectories_path.empty() || episodes_path.empty() ||
        scene_paths.empty() || args.clouds.empty() || args.out.empty()) {
      throw ConfigError(
          "need trajectories, episodes, scenes (or --in with a run config), "
          "--clouds, and --out");
    }

    const SceneSet scenes = load_scene_set(scene_paths, false);
    const auto episodes = load_validated_episodes(episodes_path, scenes);
    const auto trajectories = read_trajectories(trajectories_path);

    ExportOptions options;
    options.cloud_dir = args.clouds;
    options.out_path = args.out;
    options.include_hypotheses = args.with_hypotheses;
    const ExportReport report =
        export_alignment_records(scenes, episodes, trajectories, options);

    for (const auto& w : report.warnings) {
      std::cerr << "warning: " << w << "\n";
    }
    std::cout << "wrote " << report.written << " records to " << args.out
              << " (" << report.skipped << " skipped)\n";
    return kExitOk;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  }
}

struct ReportArgs {
  std::string run_dir;
  double threshold = -1.0;  // <0: take the run config's value
  std::string distance;     // empty: take the run config's value
};

int cmd_report(const ReportArgs& args) {
  try {
    const fs::path run_dir(args.run_dir);
    std::ifstream snapshot_in(run_dir / "config.json");
    if (!snapshot_in) {
      throw ConfigError("no config.json in " + args.run_dir);
    }
    json snapshot;
    snapshot_in >> snapshot;

    const auto scene_paths =
        snapshot.at("scenes").get<std::vector<std::string>>();
    const auto episodes_path = snapshot.at("episodes").get<std::string>();
    const double threshold =
        args.threshold >= 0.0 ? args.threshold
                              : snapshot.at("success_threshold").get<double>();
    const std::string distance =
        !args.distance.empty()
            ? args.distance
            : snapshot.at("metric_distance").get<std::string>();

    const SceneSet scenes = load_scene_set(scene_paths, false);
    const auto episodes = load_validated_episodes(episodes_path, scenes);
    return evaluate_to_report(
        (run_dir / "trajectories.jsonl").string(), scenes, episodes,
        threshold, distance_mode_from_string(distance),
        (run_dir / "report.json").string());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Viewpoint-graph navigation harness"};
  app.require_subcommand(1);

  // run
  auto* run = app.add_subcommand("run", "Run episodes and log trajectories");
  std::string run_config_path;
  run->add_option("--config", run_config_path, "key=value config file");
  Overrides run_overrides;
  run_overrides.add(run, "--scenes", "scenes",
                    "scene manifest files or directories, comma-separated");
  run_overrides.add(run, "--episodes", "episodes", "episodes JSON file");
  run_overrides.add(run, "--policy", "policy",
                    "oracle | greedy | random | first | remote");
  run_overrides.add(run, "--belief", "belief", "null | scripted | remote");
  run_overrides.add(run, "--scripted-beliefs", "scripted_beliefs",
                    "scripted hypotheses JSON file");
  run_overrides.add(run, "--max-steps", "max_steps", "move budget");
  run_overrides.add(run, "--success-threshold", "success_threshold",
                    "success radius in meters");
  run_overrides.add(run, "--seed", "seed", "run seed");
  run_overrides.add(run, "--jobs", "jobs", "parallel episodes");
  run_overrides.add(run, "--out", "out_dir", "output directory");
  run_overrides.add(run, "--metric-distance", "metric_distance",
                    "geodesic | euclidean");
  run_overrides.add(run, "--policy-url", "policy_url",
                    "remote policy endpoint base url");
  run_overrides.add(run, "--policy-model", "policy_model",
                    "remote policy model name");
  run_overrides.add(run, "--belief-url", "belief_url",
                    "remote belief endpoint base url");
  run_overrides.add(run, "--belief-model", "belief_model",
                    "remote belief model name");
  run_overrides.add(run, "--cloud-points", "cloud_points",
                    "points per sampled cloud");
  run_overrides.add(run, "--group-centers", "group_centers",
                    "farthest-point centers per cloud");
  run_overrides.add(run, "--group-size", "group_size", "points per patch");

  // eval
  auto* eval = app.add_subcommand("eval", "Score a trajectory log");
  EvalArgs eval_args;
  eval->add_option("--trajectories", eval_args.trajectories,
                   "trajectory JSONL file")
      ->required();
  eval->add_option("--scenes", eval_args.scenes,
                   "scene manifest files or directories")
      ->delimiter(',')
      ->required();
  eval->add_option("--episodes", eval_args.episodes, "episodes JSON file")
      ->required();
  eval->add_option("--threshold", eval_args.threshold,
                   "success radius in meters");
  eval->add_option("--metric-distance", eval_args.distance,
                   "geodesic | euclidean");
  eval->add_option("--json-out", eval_args.json_out,
                   "also write the JSON report here");

  // pcgen
  auto* pcgen =
      app.add_subcommand("pcgen", "Build point clouds from viewpoint imagery");
  PcgenArgs pcgen_args;
  pcgen->add_option("--scene", pcgen_args.scene, "scene manifest")->required();
  pcgen->add_option("--viewpoint", pcgen_args.viewpoint,
                    "viewpoint id (single-cloud mode)");
  pcgen->add_flag("--all", pcgen_args.all,
                  "generate one cloud per viewpoint with imagery");
  pcgen->add_option("--mask", pcgen_args.masks,
                    "object mask (repeatable, single-frame viewpoints)");
  pcgen->add_option("--out", pcgen_args.out, "output cloud file");
  pcgen->add_option("--out-dir", pcgen_args.out_dir,
                    "output directory for --all");
  pcgen->add_option("--ply", pcgen_args.ply, "also export ASCII PLY here");
  pcgen->add_option("--points", pcgen_args.points, "resampled cloud size");
  pcgen->add_option("--seed", pcgen_args.seed, "sampling seed");

  // export-align
  auto* exp = app.add_subcommand("export-align",
                                 "Export supervision tuples from a run");
  ExportArgs export_args;
  exp->add_option("--in", export_args.run_dir, "run directory");
  exp->add_option("--trajectories", export_args.trajectories,
                  "trajectory JSONL file (overrides --in)");
  exp->add_option("--episodes", export_args.episodes, "episodes JSON file");
  exp->add_option("--scenes", export_args.scenes,
                  "scene manifest files or directories")
      ->delimiter(',');
  exp->add_option("--clouds", export_args.clouds,
                  "directory of per-viewpoint cloud files")
      ->required();
  exp->add_option("--out", export_args.out, "output JSONL file")->required();
  exp->add_flag("--with-hypotheses", export_args.with_hypotheses,
                "include recorded hypotheses in exported history");

  // templates
  auto* templates = app.add_subcommand("templates", "Prompt template tools");
  templates->require_subcommand(1);
  auto* dump = templates->add_subcommand("dump",
                                         "Print templates, hashes, version");

  // report
  auto* report = app.add_subcommand("report", "Re-score a run directory");
  ReportArgs report_args;
  report->add_option("--run", report_args.run_dir, "run directory")
      ->required();
  report->add_option("--threshold", report_args.threshold,
                     "override the run's success radius");
  report->add_option("--metric-distance", report_args.distance,
                     "override the run's distance mode");

  // manifests
  auto* manifests =
      app.add_subcommand("manifests", "Write curriculum stage manifests");
  std::string manifests_dir = "manifests";
  manifests->add_option("--out-dir", manifests_dir, "output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  if (run->parsed()) {
    RunConfig config;
    try {
      if (!run_config_path.empty()) {
        config = load_run_config(run_config_path);
      }
      run_overrides.apply(config);
    } catch (const std::exception& e) {
      std::cerr << "error: " << e.what() << "\n";
      return kExitUsage;
    }
    return cmd_run(config);
  }
  if (eval->parsed()) {
    return cmd_eval(eval_args);
  }
  if (pcgen->parsed()) {
    return cmd_pcgen(pcgen_args);
  }
  if (exp->parsed()) {
    return cmd_export_align(export_args);
  }
  if (templates->parsed() && dump->parsed()) {
    std::cout << templates_dump() << "\n";
    return kExitOk;
  }
  if (report->parsed()) {
    return cmd_report(report_args);
  }
  if (manifests->parsed()) {
    try {
      for (const auto& path : write_stage_manifests(manifests_dir)) {
        std::cout << "wrote " << path << "\n";
      }
      return kExitOk;
    } catch (const std::exception& e) {
      std::cerr << "error: " << e.what() << "\n";
      return kExitRuntime;
    }
  }
  return kExitUsage;
}
