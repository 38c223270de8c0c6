#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <random>
#include <string>

#include "naveval/engine.hpp"

namespace naveval {

/// Text-generation decoding parameters sent with every remote request.
struct GenerationParams {
  int max_new_tokens = 64;
  double top_p = 0.95;
  double temperature = 0.2;
  bool do_sample = true;

  /// Defaults for the 3D belief model.
  static GenerationParams belief_defaults() { return {64, 0.95, 0.2, true}; }
  /// Defaults for the navigation agent.
  static GenerationParams nav_defaults() { return {20, 0.95, 0.1, true}; }

  void validate() const;
};

struct EndpointConfig {
  std::string base_url;  // e.g. "http://127.0.0.1:8600"
  std::string model;
  double timeout_s = 30.0;
  int max_retries = 2;           // total attempts = max_retries + 1
  int backoff_base_ms = 50;      // doubled per retry
  int max_inflight = 8;          // concurrent requests to this endpoint
  std::string auth_token_env;    // env var holding a bearer token, optional

  void validate() const;
};

enum class RemoteErrorKind { Connect, Timeout, HttpStatus, MalformedBody };

std::string to_string(RemoteErrorKind kind);

class RemoteError : public TransportError {
 public:
  RemoteError(RemoteErrorKind kind, const std::string& message)
      : TransportError(to_string(kind) + ": " + message), kind_(kind) {}
  RemoteErrorKind kind() const { return kind_; }

 private:
  RemoteErrorKind kind_;
};

struct GenStats {
  int attempts = 0;
  double latency_ms = 0.0;
  std::size_t prompt_tokens = 0;      // whitespace-token estimate
  std::size_t completion_tokens = 0;  // whitespace-token estimate
};

struct GenResult {
  std::string text;
  bool truncated = false;
  GenStats stats;
};

/// HTTP client for a text-generation endpoint. Wire format:
/// POST /generate {"model","prompt","max_new_tokens","top_p","temperature",
/// "do_sample"} -> {"text", "truncated"?}. Retries connect/timeout/5xx with
/// exponential backoff; 4xx and malformed bodies fail immediately. Safe for
/// concurrent use; at most max_inflight requests run at once.
class RemoteClient {
 public:
  explicit RemoteClient(EndpointConfig config);
  ~RemoteClient();
  RemoteClient(const RemoteClient&) = delete;
  RemoteClient& operator=(const RemoteClient&) = delete;

  GenResult generate(const std::string& prompt,
                     const GenerationParams& params);
  const EndpointConfig& config() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// One-shot convenience wrapper around RemoteClient::generate.
std::string remote_generate(const EndpointConfig& endpoint,
                            const std::string& prompt,
                            const GenerationParams& params,
                            GenStats* stats = nullptr);

/// Walks the episode's ground-truth path and stops at its end. Raw output
/// is the chosen viewpoint id (or "stop"), so logs read like model output.
class OraclePolicy : public NavPolicy {
 public:
  OraclePolicy(const Scene& scene, const Episode& episode);
  PolicyDecision act(const PromptBundle& prompt, const Observation& obs,
                     const History& history) override;

 private:
  Episode episode_;
  std::size_t cursor_ = 0;
};

/// Moves to the candidate nearest the goal by shortest-path distance; stops
/// once within the threshold or when the goal is unreachable. Ties resolve
/// to the earlier candidate.
class GreedyPolicy : public NavPolicy {
 public:
  GreedyPolicy(const Scene& scene, std::string goal, double threshold);
  PolicyDecision act(const PromptBundle& prompt, const Observation& obs,
                     const History& history) override;

 private:
  const Scene& scene_;
  std::string goal_;
  double threshold_;
};

/// Uniform draw over candidates plus stop, from a private seeded stream.
class RandomPolicy : public NavPolicy {
 public:
  explicit RandomPolicy(std::uint64_t seed) : rng_(seed) {}
  PolicyDecision act(const PromptBundle& prompt, const Observation& obs,
                     const History& history) override;

 private:
  std::mt19937_64 rng_;
};

/// Adapter over an arbitrary callable, mainly for tests.
class FunctionPolicy : public NavPolicy {
 public:
  using Fn = std::function<PolicyDecision(const PromptBundle&,
                                          const Observation&, const History&)>;
  explicit FunctionPolicy(Fn fn) : fn_(std::move(fn)) {}
  PolicyDecision act(const PromptBundle& prompt, const Observation& obs,
                     const History& history) override {
    return fn_(prompt, obs, history);
  }

 private:
  Fn fn_;
};

/// Queries the remote endpoint with the rendered prompt and parses the
/// reply against the candidate set; unparseable replies become Stop with
/// the parse_failed flag set.
class RemotePolicy : public NavPolicy {
 public:
  RemotePolicy(std::shared_ptr<RemoteClient> client,
               GenerationParams params = GenerationParams::nav_defaults());
  PolicyDecision act(const PromptBundle& prompt, const Observation& obs,
                     const History& history) override;

 private:
  std::shared_ptr<RemoteClient> client_;
  GenerationParams params_;
};

/// Fixed step -> hypothesis map; steps without an entry yield an empty
/// hypothesis (rendered as "None" downstream).
class ScriptedBeliefSource : public BeliefSource {
 public:
  explicit ScriptedBeliefSource(std::map<std::size_t, std::string> script)
      : script_(std::move(script)) {}
  BeliefHypothesis describe(const BeliefQuery& query) override;

 private:
  std::map<std::size_t, std::string> script_;
};

/// Always-empty hypothesis; the engine also skips cloud assembly for it.
class NullBeliefSource : public BeliefSource {
 public:
  BeliefHypothesis describe(const BeliefQuery& query) override {
    return {"", query.step, false};
  }
};

/// Sends the belief request to the remote endpoint. Requests the per-step
/// point cloud so callers exercise the full geometry path.
class RemoteBeliefSource : public BeliefSource {
 public:
  RemoteBeliefSource(
      std::shared_ptr<RemoteClient> client,
      GenerationParams params = GenerationParams::belief_defaults());
  bool wants_cloud() const override { return true; }
  BeliefHypothesis describe(const BeliefQuery& query) override;

 private:
  std::shared_ptr<RemoteClient> client_;
  GenerationParams params_;
};

/// Per-episode scripted hypotheses with a shared fallback script, loaded
/// from JSON: {"default": {"0": "..."}, "episodes": {"ep": {"1": "..."}}}.
struct ScriptedBeliefBook {
  std::map<std::size_t, std::string> default_script;
  std::map<std::string, std::map<std::size_t, std::string>> per_episode;

  std::map<std::size_t, std::string> script_for(
      const std::string& episode_id) const;
};

ScriptedBeliefBook load_scripted_beliefs(const std::string& path);

}  // namespace naveval
