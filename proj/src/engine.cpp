#include "naveval/engine.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <mutex>
#include <thread>

#include "naveval/image_io.hpp"
#include "naveval/rng.hpp"

namespace naveval {

using nlohmann::json;

std::string to_string(const Action& action) {
  return action.is_stop() ? "stop" : "goto:" + action.target;
}

Action action_from_string(const std::string& text) {
  if (text == "stop") {
    return Action::stop();
  }
  if (text.rfind("goto:", 0) == 0 && text.size() > 5) {
    return Action::go_to(text.substr(5));
  }
  throw EngineError("unrecognized action string: " + text);
}

std::string to_string(Terminal terminal) {
  switch (terminal) {
    case Terminal::StoppedByPolicy:
      return "stopped_by_policy";
    case Terminal::MaxSteps:
      return "max_steps";
    case Terminal::IllegalAction:
      return "illegal_action";
  }
  throw EngineError("bad terminal value");
}

Terminal terminal_from_string(const std::string& text) {
  if (text == "stopped_by_policy") return Terminal::StoppedByPolicy;
  if (text == "max_steps") return Terminal::MaxSteps;
  if (text == "illegal_action") return Terminal::IllegalAction;
  throw EngineError("unrecognized terminal string: " + text);
}

std::string step(const Scene& scene, const std::string& current,
                 const Action& action) {
  if (action.is_stop()) {
    return current;
  }
  const auto& candidates = scene.navigable_from(current);
  if (std::find(candidates.begin(), candidates.end(), action.target) ==
      candidates.end()) {
    throw IllegalActionError("viewpoint " + action.target +
                             " is not navigable from " + current);
  }
  return action.target;
}

std::string render_candidates(const Scene& scene, const std::string& at,
                              const std::vector<std::string>& candidates) {
  if (candidates.empty()) {
    return "None";
  }
  const Eigen::Vector3d here = scene.viewpoint(at).position;
  std::string out;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const Eigen::Vector3d there = scene.viewpoint(candidates[i]).position;
    double heading = std::atan2(there.y() - here.y(), there.x() - here.x());
    heading = std::round(heading * 100.0) / 100.0;
    if (heading == 0.0) {
      heading = 0.0;  // fold -0.0 into +0.0 so rendering is byte-stable
    }
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f", heading);
    if (i > 0) {
      out += "; ";
    }
    out += "Candidate " + std::to_string(i + 1) + ": " + candidates[i] +
           " (heading " + buf + ")";
  }
  return out;
}

std::string render_history(const History& history) {
  if (history.entries.empty()) {
    return "None";
  }
  std::string out;
  for (std::size_t i = 0; i < history.entries.size(); ++i) {
    if (i > 0) {
      out += "; ";
    }
    out += history.entries[i].at + " -> " +
           to_string(history.entries[i].action);
  }
  return out;
}

namespace {

Observation make_observation(const Scene& scene, const std::string& at,
                             std::size_t step_index) {
  Observation obs;
  obs.at = at;
  obs.frames = scene.viewpoint(at).frames;
  obs.candidates = scene.navigable_from(at);
  obs.step_index = step_index;
  return obs;
}

/// Builds the per-step cloud from every frame of the current viewpoint.
PointCloud build_step_cloud(const Scene& scene, const Observation& obs,
                            const SamplingConfig& sampling,
                            std::uint64_t step_seed) {
  std::vector<PointCloud> parts;
  for (const auto& frame : obs.frames) {
    if (frame.rgb_path.empty() || frame.depth_path.empty()) {
      continue;
    }
    const RgbImage rgb = read_ppm(frame.rgb_path);
    const DepthImage depth = read_pfm(frame.depth_path);
    parts.push_back(unproject(depth, rgb, frame.camera));
  }
  if (parts.empty()) {
    throw CloudError("viewpoint " + obs.at +
                     " has no frames with imagery to build a cloud from");
  }
  PointCloud merged = merge(parts);
  SamplingConfig cfg = sampling;
  cfg.seed = step_seed;
  if (cfg.drop_outliers) {
    merged = remove_outliers(merged, cfg.outlier_neighbors, cfg.outlier_sigma);
  }
  return uniform_sample(merged, cfg.cloud_points,
                        derive_seed(cfg.seed, "sample"));
}

}  // namespace

Trajectory run_episode(const Scene& scene, const Episode& episode,
                       NavPolicy& policy, BeliefSource& belief,
                       const EngineConfig& config) {
  if (episode.scene_id != scene.id()) {
    throw EngineError("episode " + episode.id + " references scene " +
                      episode.scene_id + " but was given scene " + scene.id());
  }
  if (config.max_steps < 1) {
    throw EngineError("max_steps must be at least 1");
  }
  if (!scene.has(episode.start) || !scene.has(episode.goal)) {
    throw EngineError("episode " + episode.id +
                      " endpoints missing from scene");
  }

  const std::uint64_t episode_seed = derive_seed(config.seed, episode.id);
  const std::string task_info =
      episode.task_kind == TaskKind::SpatialQA ? episode.instruction : "";
  const PromptBundle request =
      build_3d_request(episode.task_kind, task_info);

  Trajectory traj;
  traj.episode_id = episode.id;
  traj.visited.push_back(episode.start);

  History history;
  std::string current = episode.start;
  int moves = 0;
  std::size_t t = 0;

  for (;;) {
    const Observation obs = make_observation(scene, current, t);

    PointCloud cloud;
    BeliefQuery query;
    query.request = &request;
    query.observation = &obs;
    query.step = t;
    if (belief.wants_cloud()) {
      try {
        cloud = build_step_cloud(
            scene, obs, config.sampling,
            derive_seed(episode_seed, "cloud:" + std::to_string(t)));
      } catch (const ImageError& e) {
        throw EpisodeAborted(episode.id, t, e.what());
      } catch (const CloudError& e) {
        throw EpisodeAborted(episode.id, t, e.what());
      }
      query.cloud = &cloud;
    }

    BeliefHypothesis hypothesis;
    PolicyDecision decision;
    try {
      hypothesis = belief.describe(query);
      const PromptBundle prompt = fmt(
          hypothesis, episode.instruction,
          render_candidates(scene, current, obs.candidates),
          render_history(history), episode.task_kind);
      decision = policy.act(prompt, obs, history);

      StepLog log;
      log.t = t;
      log.at = current;
      log.candidates = obs.candidates;
      log.hypothesis = hypothesis.text;
      log.prompt = prompt.rendered;
      log.prompt_sha256 = prompt.sha256;
      log.raw_output = decision.raw_output;
      log.action = decision.action;
      log.parse_failed = decision.parse_failed;
      traj.steps.push_back(std::move(log));
    } catch (const TransportError& e) {
      throw EpisodeAborted(episode.id, t, e.what());
    }

    if (decision.parse_failed) {
      traj.warnings.push_back("step " + std::to_string(t) +
                              ": unparseable policy output, treated as stop");
    }

    std::string next;
    try {
      next = step(scene, current, decision.action);
    } catch (const IllegalActionError& e) {
      // The offending move is not recorded as an action; the episode ends
      // here and is scored where it stands.
      traj.steps.back().action = Action::stop();
      traj.warnings.push_back("step " + std::to_string(t) + ": " + e.what());
      traj.terminal = Terminal::IllegalAction;
      break;
    }

    history.entries.push_back(
        {current, traj.steps.back().action, hypothesis.text});

    if (decision.action.is_stop()) {
      traj.terminal = Terminal::StoppedByPolicy;
      break;
    }

    traj.visited.push_back(next);
    current = next;
    ++moves;
    ++t;
    if (moves >= config.max_steps) {
      traj.terminal = Terminal::MaxSteps;
      break;
    }
  }

  traj.length_m = scene.path_length(traj.visited);
  return traj;
}

RunOutcome run_episodes(const SceneSet& scenes,
                        const std::vector<Episode>& episodes,
                        const PolicyFactory& make_policy,
                        const BeliefFactory& make_belief,
                        const EngineConfig& config, int jobs) {
  if (jobs < 1) {
    throw EngineError("jobs must be at least 1");
  }
  RunOutcome outcome;
  std::mutex collect_mutex;
  std::atomic<std::size_t> next_index{0};
  std::exception_ptr first_failure;

  const auto worker = [&]() {
    for (;;) {
      const std::size_t i = next_index.fetch_add(1);
      if (i >= episodes.size()) {
        return;
      }
      const Episode& episode = episodes[i];
      try {
        const Scene& scene = scenes.get(episode.scene_id);
        auto policy = make_policy(scene, episode);
        auto belief = make_belief(scene, episode);
        Trajectory traj =
            run_episode(scene, episode, *policy, *belief, config);
        const std::lock_guard<std::mutex> lock(collect_mutex);
        outcome.trajectories.push_back(std::move(traj));
      } catch (const EpisodeAborted& e) {
        const std::lock_guard<std::mutex> lock(collect_mutex);
        outcome.aborts.push_back({e.episode_id(), e.step(), e.reason()});
      } catch (...) {
        const std::lock_guard<std::mutex> lock(collect_mutex);
        if (!first_failure) {
          first_failure = std::current_exception();
        }
        return;
      }
    }
  };

  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    const auto n = static_cast<std::size_t>(jobs);
    pool.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
      pool.emplace_back(worker);
    }
    for (auto& th : pool) {
      th.join();
    }
  }
  if (first_failure) {
    std::rethrow_exception(first_failure);
  }

  std::sort(outcome.trajectories.begin(), outcome.trajectories.end(),
            [](const Trajectory& a, const Trajectory& b) {
              return a.episode_id < b.episode_id;
            });
  std::sort(outcome.aborts.begin(), outcome.aborts.end(),
            [](const AbortRecord& a, const AbortRecord& b) {
              return a.episode_id < b.episode_id;
            });
  return outcome;
}

std::string trajectory_to_jsonl(const Trajectory& trajectory) {
  std::string out;
  for (std::size_t i = 0; i < trajectory.steps.size(); ++i) {
    const StepLog& s = trajectory.steps[i];
    json record;
    record["episode_id"] = trajectory.episode_id;
    record["t"] = s.t;
    record["at"] = s.at;
    record["candidates"] = s.candidates;
    record["hypothesis"] = s.hypothesis;
    record["prompt_sha256"] = s.prompt_sha256;
    record["raw_output"] = s.raw_output;
    record["action"] = to_string(s.action);
    if (i + 1 == trajectory.steps.size()) {
      record["terminal"] = to_string(trajectory.terminal);
    }
    out += record.dump();
    out += '\n';
  }
  return out;
}

void write_trajectories(const std::string& path,
                        const std::vector<Trajectory>& trajectories) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw EngineError("cannot open " + path + " for writing");
  }
  for (const auto& t : trajectories) {
    out << trajectory_to_jsonl(t);
  }
  if (!out) {
    throw EngineError("short write to " + path);
  }
}

std::vector<Trajectory> read_trajectories(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw EngineError("cannot open " + path + " for reading");
  }
  std::vector<Trajectory> trajectories;
  std::map<std::string, std::size_t> index;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) {
      continue;
    }
    json record;
    try {
      record = json::parse(line);
    } catch (const json::exception& e) {
      throw EngineError(path + ":" + std::to_string(line_no) + ": " +
                        e.what());
    }
    const std::string episode_id = record.at("episode_id").get<std::string>();
    auto [it, inserted] = index.try_emplace(episode_id, trajectories.size());
    if (inserted) {
      trajectories.emplace_back();
      trajectories.back().episode_id = episode_id;
    }
    Trajectory& traj = trajectories[it->second];

    StepLog s;
    s.t = record.at("t").get<std::size_t>();
    s.at = record.at("at").get<std::string>();
    s.candidates = record.at("candidates").get<std::vector<std::string>>();
    s.hypothesis = record.at("hypothesis").get<std::string>();
    s.prompt_sha256 = record.at("prompt_sha256").get<std::string>();
    s.raw_output = record.at("raw_output").get<std::string>();
    s.action = action_from_string(record.at("action").get<std::string>());
    if (s.t != traj.steps.size()) {
      throw EngineError(path + ":" + std::to_string(line_no) +
                        ": non-contiguous step index for episode " +
                        episode_id);
    }
    if (traj.visited.empty()) {
      traj.visited.push_back(s.at);
    } else if (traj.visited.back() != s.at) {
      throw EngineError(path + ":" + std::to_string(line_no) +
                        ": step location disagrees with prior action for "
                        "episode " +
                        episode_id);
    }
    if (!s.action.is_stop()) {
      traj.visited.push_back(s.action.target);
    }
    if (record.contains("terminal")) {
      traj.terminal =
          terminal_from_string(record.at("terminal").get<std::string>());
    }
    traj.steps.push_back(std::move(s));
  }
  return trajectories;
}

EpisodeResult make_result(const Scene& scene, const Episode& episode,
                          const Trajectory& trajectory,
                          double success_threshold) {
  if (trajectory.episode_id != episode.id) {
    throw EngineError("trajectory " + trajectory.episode_id +
                      " does not belong to episode " + episode.id);
  }
  EpisodeResult result;
  result.episode_id = episode.id;
  result.scene = &scene;
  result.start = episode.start;
  result.goal = episode.goal;
  result.visited = trajectory.visited;
  result.t_pred = scene.path_length(trajectory.visited);
  result.t_gt = episode.gt_path_length;
  result.success_threshold = success_threshold;
  return result;
}

}  // namespace naveval
