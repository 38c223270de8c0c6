#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "naveval/action.hpp"
#include "naveval/comms.hpp"
#include "naveval/metrics.hpp"
#include "naveval/pointcloud.hpp"
#include "naveval/scene.hpp"

namespace naveval {

class EngineError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A policy asked to move somewhere that is not a current candidate.
class IllegalActionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Adapters throw this (or a subclass) for transport-level failures; the
/// engine converts it into EpisodeAborted at the failing step.
class TransportError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// An episode that could not run to termination. Other episodes in the same
/// run are unaffected; the runner records the abort and carries on.
class EpisodeAborted : public std::runtime_error {
 public:
  EpisodeAborted(std::string episode_id, std::size_t step, std::string reason)
      : std::runtime_error("episode " + episode_id + " aborted at step " +
                           std::to_string(step) + ": " + reason),
        episode_id_(std::move(episode_id)),
        step_(step),
        reason_(std::move(reason)) {}

  const std::string& episode_id() const { return episode_id_; }
  std::size_t step() const { return step_; }
  const std::string& reason() const { return reason_; }

 private:
  std::string episode_id_;
  std::size_t step_;
  std::string reason_;
};

/// What the agent sees at one step: its viewpoint, that viewpoint's frames,
/// and the candidate set V_t (always scene.navigable_from(at), in order).
struct Observation {
  std::string at;
  std::vector<FrameRef> frames;
  std::vector<std::string> candidates;
  std::size_t step_index = 0;
};

struct HistoryEntry {
  std::string at;
  Action action;
  std::string hypothesis;  // belief text seen at this step
};

/// Append-only record of the episode so far; length equals steps taken.
struct History {
  std::vector<HistoryEntry> entries;
};

enum class Terminal { StoppedByPolicy, MaxSteps, IllegalAction };

std::string to_string(Terminal terminal);
Terminal terminal_from_string(const std::string& text);

struct StepLog {
  std::size_t t = 0;
  std::string at;
  std::vector<std::string> candidates;
  std::string hypothesis;
  std::string prompt;  // rendered agent prompt; logs persist only its hash
  std::string prompt_sha256;
  std::string raw_output;
  Action action;  // the action actually applied, always in A_t
  bool parse_failed = false;
};

struct Trajectory {
  std::string episode_id;
  std::vector<std::string> visited;  // visited[0] is the episode start
  double length_m = 0.0;
  Terminal terminal = Terminal::StoppedByPolicy;
  std::vector<StepLog> steps;
  std::vector<std::string> warnings;
};

/// Raw model text plus the action it was parsed into. Scripted policies
/// synthesize `raw_output` from the action they chose.
struct PolicyDecision {
  std::string raw_output;
  Action action;
  bool parse_failed = false;
};

class NavPolicy {
 public:
  virtual ~NavPolicy() = default;
  virtual PolicyDecision act(const PromptBundle& prompt,
                             const Observation& observation,
                             const History& history) = 0;
};

struct BeliefQuery {
  const PromptBundle* request = nullptr;  // rendered belief-model prompt
  const Observation* observation = nullptr;
  const PointCloud* cloud = nullptr;  // built only when wants_cloud()
  std::size_t step = 0;
};

class BeliefSource {
 public:
  virtual ~BeliefSource() = default;
  /// When true the engine assembles the viewpoint's point cloud per step.
  virtual bool wants_cloud() const { return false; }
  virtual BeliefHypothesis describe(const BeliefQuery& query) = 0;
};

struct EngineConfig {
  int max_steps = 15;      // move budget; stop does not consume it
  std::uint64_t seed = 0;  // run seed, mixed with the episode id per episode
  SamplingConfig sampling;
};

/// Applies one action. GoTo returns its target, Stop returns `current`.
/// Throws IllegalActionError when the target is not navigable from here.
std::string step(const Scene& scene, const std::string& current,
                 const Action& action);

/// "Candidate 1: <id> (heading <h>); ..." with headings in radians from the
/// current viewpoint, or "None" when there are no candidates.
std::string render_candidates(const Scene& scene, const std::string& at,
                              const std::vector<std::string>& candidates);

/// "<at> -> <action>; ..." over the history entries, or "None".
std::string render_history(const History& history);

/// Runs the observe / describe / format / act loop until the policy stops,
/// the move budget runs out, or an illegal action ends the episode.
Trajectory run_episode(const Scene& scene, const Episode& episode,
                       NavPolicy& policy, BeliefSource& belief,
                       const EngineConfig& config);

using PolicyFactory =
    std::function<std::unique_ptr<NavPolicy>(const Scene&, const Episode&)>;
using BeliefFactory =
    std::function<std::unique_ptr<BeliefSource>(const Scene&, const Episode&)>;

struct AbortRecord {
  std::string episode_id;
  std::size_t step = 0;
  std::string reason;
};

struct RunOutcome {
  std::vector<Trajectory> trajectories;  // sorted by episode id
  std::vector<AbortRecord> aborts;       // sorted by episode id
};

/// Runs every episode, `jobs` at a time. Aborted episodes are recorded and
/// skipped; ordering of the outcome is by episode id, independent of
/// completion order.
RunOutcome run_episodes(const SceneSet& scenes,
                        const std::vector<Episode>& episodes,
                        const PolicyFactory& make_policy,
                        const BeliefFactory& make_belief,
                        const EngineConfig& config, int jobs = 1);

/// One JSON object per step, keys sorted, no floating-point fields:
/// {action, at, candidates, episode_id, hypothesis, prompt_sha256,
///  raw_output, t, terminal?}. `terminal` appears on final steps only.
std::string trajectory_to_jsonl(const Trajectory& trajectory);
void write_trajectories(const std::string& path,
                        const std::vector<Trajectory>& trajectories);

/// Rebuilds trajectories from a log. Prompts are not recoverable (only
/// their hashes were persisted) and lengths are left at zero; use
/// make_result() to rescore against a scene.
std::vector<Trajectory> read_trajectories(const std::string& path);

/// Joins a trajectory with its episode for scoring.
EpisodeResult make_result(const Scene& scene, const Episode& episode,
                          const Trajectory& trajectory,
                          double success_threshold);

}  // namespace naveval
