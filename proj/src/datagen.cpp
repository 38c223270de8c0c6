#include "naveval/datagen.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <fstream>
#include <unordered_map>

#include "naveval/rng.hpp"

namespace naveval {

namespace fs = std::filesystem;
using nlohmann::json;

MixtureSpec MixtureSpec::defaults() {
  MixtureSpec spec;
  spec.sources = {{"R2R", 4},  {"CVDN", 1},   {"REVERIE", 2},
                  {"SOON", 1}, {"ScanQA", 1}, {"SQA", 1}};
  return spec;
}

std::vector<std::string> build_mixture(const MixtureSpec& spec,
                                       std::size_t n) {
  if (spec.sources.empty()) {
    throw DatagenError("mixture has no sources");
  }
  std::uint64_t total = 0;
  for (const auto& [name, weight] : spec.sources) {
    if (weight == 0) {
      throw DatagenError("mixture weight for " + name + " must be positive");
    }
    total += weight;
  }
  std::mt19937_64 rng(spec.seed);
  std::vector<std::string> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::uint64_t r = bounded_rand(rng, total);
    for (const auto& [name, weight] : spec.sources) {
      if (r < weight) {
        out.push_back(name);
        break;
      }
      r -= weight;
    }
  }
  return out;
}

StageManifest stage_manifest(int stage) {
  StageManifest m;
  m.stage = stage;
  switch (stage) {
    case 1:
      m.datasets = {"Cap3D"};
      m.tasks = {"Brief Description"};
      m.train_projector = true;
      m.training = {2e-5, "DDP", 16, 3, "AdamW", 0.03, "cosine", "bfloat16"};
      return m;
    case 2:
      m.datasets = {"3D-FRONT"};
      m.tasks = {"Detailed Description", "Spatial Relation QA"};
      m.train_llm = true;
      m.training = {1e-6,     "FSDP (full shard auto wrap)",
                    4,        1,
                    "AdamW",  0.03,
                    "cosine", "bfloat16"};
      return m;
    case 3:
      m.datasets = {"R2R point", "ScanQA"};
      m.tasks = {"Brief Description", "3D QA"};
      m.train_encoder = true;
      m.train_projector = true;
      m.training = {2e-5, "DDP", 8, 3, "AdamW", 0.03, "cosine", "bfloat16"};
      return m;
    default:
      throw DatagenError("stage must be 1, 2, or 3; got " +
                         std::to_string(stage));
  }
}

std::string stage_manifest_to_json(const StageManifest& manifest) {
  json doc;
  doc["stage"] = manifest.stage;
  doc["datasets"] = manifest.datasets;
  doc["tasks"] = manifest.tasks;
  doc["trainable"]["encoder"] = manifest.train_encoder;
  doc["trainable"]["projector"] = manifest.train_projector;
  doc["trainable"]["llm"] = manifest.train_llm;
  doc["training"]["learning_rate"] = manifest.training.learning_rate;
  doc["training"]["parallel"] = manifest.training.parallel;
  doc["training"]["batch_size"] = manifest.training.batch_size;
  doc["training"]["epochs"] = manifest.training.epochs;
  doc["training"]["optimizer"] = manifest.training.optimizer;
  doc["training"]["warmup_ratio"] = manifest.training.warmup_ratio;
  doc["training"]["lr_schedule"] = manifest.training.lr_schedule;
  doc["training"]["precision"] = manifest.training.precision;
  return doc.dump(2);
}

StageManifest stage_manifest_from_json(const std::string& json_text) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::exception& e) {
    throw DatagenError(std::string("bad stage manifest: ") + e.what());
  }
  StageManifest m;
  try {
    m.stage = doc.at("stage").get<int>();
    m.datasets = doc.at("datasets").get<std::vector<std::string>>();
    m.tasks = doc.at("tasks").get<std::vector<std::string>>();
    const auto& t = doc.at("trainable");
    m.train_encoder = t.at("encoder").get<bool>();
    m.train_projector = t.at("projector").get<bool>();
    m.train_llm = t.at("llm").get<bool>();
    const auto& tr = doc.at("training");
    m.training.learning_rate = tr.at("learning_rate").get<double>();
    m.training.parallel = tr.at("parallel").get<std::string>();
    m.training.batch_size = tr.at("batch_size").get<int>();
    m.training.epochs = tr.at("epochs").get<int>();
    m.training.optimizer = tr.at("optimizer").get<std::string>();
    m.training.warmup_ratio = tr.at("warmup_ratio").get<double>();
    m.training.lr_schedule = tr.at("lr_schedule").get<std::string>();
    m.training.precision = tr.at("precision").get<std::string>();
  } catch (const json::exception& e) {
    throw DatagenError(std::string("bad stage manifest: ") + e.what());
  }
  return m;
}

std::vector<std::string> write_stage_manifests(const std::string& dir) {
  fs::create_directories(dir);
  std::vector<std::string> paths;
  for (int stage = 1; stage <= 3; ++stage) {
    const std::string path =
        (fs::path(dir) / ("stage" + std::to_string(stage) + ".json")).string();
    std::ofstream out(path, std::ios::trunc);
    if (!out) {
      throw DatagenError("cannot open " + path + " for writing");
    }
    out << stage_manifest_to_json(stage_manifest(stage)) << "\n";
    paths.push_back(path);
  }
  return paths;
}

std::string cloud_ref_name(const std::string& scene_id,
                           const std::string& viewpoint_id) {
  return scene_id + "__" + viewpoint_id + ".pc6";
}

ExportReport export_alignment_records(
    const SceneSet& scenes, const std::vector<Episode>& episodes,
    const std::vector<Trajectory>& trajectories,
    const ExportOptions& options) {
  if (options.out_path.empty()) {
    throw DatagenError("export needs an output path");
  }
  std::ofstream out(options.out_path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw DatagenError("cannot open " + options.out_path + " for writing");
  }

  std::unordered_map<std::string, const Trajectory*> by_episode;
  for (const auto& t : trajectories) {
    by_episode[t.episode_id] = &t;
  }

  ExportReport report;
  for (const auto& episode : episodes) {
    const Scene& scene = scenes.get(episode.scene_id);
    const Trajectory* traj = nullptr;
    if (const auto it = by_episode.find(episode.id);
        it != by_episode.end()) {
      traj = it->second;
    }

    // Hypothesis recorded at gt step j, if the executed path was still on
    // the gt path there.
    const auto hypothesis_at = [&](std::size_t j) -> std::string {
      if (!traj || j >= traj->steps.size() ||
          traj->steps[j].at != episode.gt_path[j]) {
        return "";
      }
      return traj->steps[j].hypothesis;
    };

    History history;
    for (std::size_t i = 0; i < episode.gt_path.size(); ++i) {
      const std::string& at = episode.gt_path[i];
      const Action gt_action =
          i + 1 < episode.gt_path.size()
              ? Action::go_to(episode.gt_path[i + 1])
              : Action::stop();

      const std::string cloud_ref =
          (fs::path(options.cloud_dir) / cloud_ref_name(scene.id(), at))
              .string();
      if (!fs::exists(cloud_ref)) {
        ++report.skipped;
        report.warnings.push_back("episode " + episode.id + " step " +
                                  std::to_string(i) + ": missing cloud " +
                                  cloud_ref);
        history.entries.push_back({at, gt_action, hypothesis_at(i)});
        continue;
      }

      const BeliefHypothesis hyp{hypothesis_at(i), i, false};
      const PromptBundle prompt =
          fmt(hyp, episode.instruction,
              render_candidates(scene, at, scene.navigable_from(at)),
              render_history(history), episode.task_kind);

      json record;
      record["episode_id"] = episode.id;
      record["scene_id"] = scene.id();
      record["t"] = i;
      record["at"] = at;
      std::vector<std::string> rgb_refs;
      for (const auto& frame : scene.viewpoint(at).frames) {
        if (!frame.rgb_path.empty()) {
          rgb_refs.push_back(frame.rgb_path);
        }
      }
      record["rgb_refs"] = rgb_refs;
      record["cloud_ref"] = cloud_ref;
      std::vector<std::string> history_lines;
      for (const auto& entry : history.entries) {
        std::string line = entry.at + " -> " + to_string(entry.action);
        if (options.include_hypotheses) {
          line += " | " +
                  (entry.hypothesis.empty() ? "None" : entry.hypothesis);
        }
        history_lines.push_back(std::move(line));
      }
      record["history"] = history_lines;
      record["instruction"] = episode.instruction;
      record["candidates"] = scene.navigable_from(at);
      record["gt_action"] = to_string(gt_action);
      record["prompt_sha256"] = prompt.sha256;
      out << record.dump() << "\n";
      ++report.written;

      history.entries.push_back({at, gt_action, hyp.text});
    }
  }
  if (!out) {
    throw DatagenError("short write to " + options.out_path);
  }
  return report;
}

}  // namespace naveval
