#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "naveval/engine.hpp"
#include "naveval/scene.hpp"

namespace naveval {

class DatagenError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Weighted multi-dataset sampling plan. Weights are positive integers;
/// the default mix draws R2R four times and REVERIE twice as often as the
/// other four sources.
struct MixtureSpec {
  std::vector<std::pair<std::string, std::uint64_t>> sources;
  std::uint64_t seed = 0;

  static MixtureSpec defaults();
};

/// Seeded weighted draw of n dataset names; empirical proportions converge
/// to weight / total.
std::vector<std::string> build_mixture(const MixtureSpec& spec,
                                       std::size_t n);

struct TrainingParams {
  double learning_rate = 0.0;
  std::string parallel;
  int batch_size = 0;
  int epochs = 0;
  std::string optimizer = "AdamW";
  double warmup_ratio = 0.03;
  std::string lr_schedule = "cosine";
  std::string precision = "bfloat16";

  friend bool operator==(const TrainingParams&,
                         const TrainingParams&) = default;
};

/// One pretraining stage: its datasets, task types, which components train,
/// and the hyperparameters recorded for provenance.
struct StageManifest {
  int stage = 0;
  std::vector<std::string> datasets;
  std::vector<std::string> tasks;
  bool train_encoder = false;
  bool train_projector = false;
  bool train_llm = false;
  TrainingParams training;

  friend bool operator==(const StageManifest&, const StageManifest&) = default;
};

/// The fixed three-stage schedule. Throws DatagenError outside {1,2,3}.
StageManifest stage_manifest(int stage);

std::string stage_manifest_to_json(const StageManifest& manifest);
StageManifest stage_manifest_from_json(const std::string& json_text);

/// Writes manifests/stage{1,2,3}.json under `dir`; returns the paths.
std::vector<std::string> write_stage_manifests(const std::string& dir);

/// One supervision tuple: the state at a ground-truth step plus the action
/// the agent should have taken there.
struct TripleRecord {
  std::string episode_id;
  std::string scene_id;
  std::size_t t = 0;
  std::string at;
  std::vector<std::string> rgb_refs;
  std::string cloud_ref;
  std::vector<std::string> history;  // "<at> -> <action>" per earlier step
  std::string instruction;
  std::vector<std::string> candidates;
  Action gt_action;
  std::string prompt_sha256;
};

struct ExportOptions {
  std::string cloud_dir;  // directory of per-viewpoint cloud files
  std::string out_path;
  /// When set, history lines carry the hypothesis text recorded in the
  /// trajectory at steps where the executed path matches the gt path.
  bool include_hypotheses = false;
};

struct ExportReport {
  std::size_t written = 0;
  std::size_t skipped = 0;
  std::vector<std::string> warnings;
};

/// Canonical per-viewpoint cloud filename within a cloud directory.
std::string cloud_ref_name(const std::string& scene_id,
                           const std::string& viewpoint_id);

/// Walks each episode's ground-truth path and emits one record per GT
/// action: a move per edge plus the final Stop. Records whose viewpoint
/// cloud file is missing are skipped with a warning. Trajectories supply
/// recorded hypotheses when include_hypotheses is set.
ExportReport export_alignment_records(
    const SceneSet& scenes, const std::vector<Episode>& episodes,
    const std::vector<Trajectory>& trajectories, const ExportOptions& options);

}  // namespace naveval
