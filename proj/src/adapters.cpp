#include "naveval/adapters.hpp"

#include <httplib.h>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <chrono>
#include <fstream>
#include <limits>
#include <semaphore>
#include <sstream>
#include <thread>

#include "naveval/rng.hpp"

namespace naveval {

using nlohmann::json;

void GenerationParams::validate() const {
  if (max_new_tokens < 1) {
    throw std::invalid_argument("max_new_tokens must be at least 1");
  }
  if (!(top_p > 0.0 && top_p <= 1.0)) {
    throw std::invalid_argument("top_p must be in (0, 1]");
  }
  if (!(temperature > 0.0)) {
    throw std::invalid_argument("temperature must be positive");
  }
}

void EndpointConfig::validate() const {
  if (base_url.empty()) {
    throw std::invalid_argument("endpoint base_url is empty");
  }
  if (!(timeout_s > 0.0)) {
    throw std::invalid_argument("endpoint timeout must be positive");
  }
  if (max_retries < 0) {
    throw std::invalid_argument("endpoint max_retries must be >= 0");
  }
  if (max_inflight < 1) {
    throw std::invalid_argument("endpoint max_inflight must be >= 1");
  }
}

std::string to_string(RemoteErrorKind kind) {
  switch (kind) {
    case RemoteErrorKind::Connect:
      return "connect error";
    case RemoteErrorKind::Timeout:
      return "timeout";
    case RemoteErrorKind::HttpStatus:
      return "http status error";
    case RemoteErrorKind::MalformedBody:
      return "malformed response body";
  }
  return "unknown error";
}

namespace {

std::size_t count_tokens(const std::string& text) {
  std::istringstream in(text);
  std::string word;
  std::size_t n = 0;
  while (in >> word) {
    ++n;
  }
  return n;
}

}  // namespace

struct RemoteClient::Impl {
  EndpointConfig config;
  std::counting_semaphore<4096> inflight;

  explicit Impl(EndpointConfig cfg)
      : config(std::move(cfg)), inflight(config.max_inflight) {}
};

RemoteClient::RemoteClient(EndpointConfig config) {
  config.validate();
  impl_ = std::make_unique<Impl>(std::move(config));
}

RemoteClient::~RemoteClient() = default;

const EndpointConfig& RemoteClient::config() const { return impl_->config; }

GenResult RemoteClient::generate(const std::string& prompt,
                                 const GenerationParams& params) {
  params.validate();
  const EndpointConfig& cfg = impl_->config;

  json body;
  body["model"] = cfg.model;
  body["prompt"] = prompt;
  body["max_new_tokens"] = params.max_new_tokens;
  body["top_p"] = params.top_p;
  body["temperature"] = params.temperature;
  body["do_sample"] = params.do_sample;
  const std::string payload = body.dump();

  std::string bearer;
  if (!cfg.auth_token_env.empty()) {
    if (const char* token = std::getenv(cfg.auth_token_env.c_str())) {
      bearer = token;
    }
  }

  impl_->inflight.acquire();
  struct Release {
    std::counting_semaphore<4096>& sem;
    ~Release() { sem.release(); }
  } release{impl_->inflight};

  const auto started = std::chrono::steady_clock::now();
  std::string last_error = "no attempts made";
  RemoteErrorKind last_kind = RemoteErrorKind::Connect;

  for (int attempt = 0; attempt <= cfg.max_retries; ++attempt) {
    if (attempt > 0) {
      const auto backoff = std::chrono::milliseconds(
          static_cast<long>(cfg.backoff_base_ms) * (1L << (attempt - 1)));
      std::this_thread::sleep_for(backoff);
    }

    // One client per request: keep-alive is not worth sharing mutable
    // connection state across episode threads.
    httplib::Client http(cfg.base_url);
    const auto timeout_ms =
        std::chrono::milliseconds(static_cast<long>(cfg.timeout_s * 1000.0));
    http.set_connection_timeout(timeout_ms);
    http.set_read_timeout(timeout_ms);
    http.set_write_timeout(timeout_ms);
    if (!bearer.empty()) {
      http.set_bearer_token_auth(bearer);
    }

    auto res = http.Post("/generate", payload, "application/json");
    if (!res) {
      const auto err = res.error();
      const bool timed_out = err == httplib::Error::ConnectionTimeout ||
                             err == httplib::Error::Read ||
                             err == httplib::Error::Write;
      last_kind =
          timed_out ? RemoteErrorKind::Timeout : RemoteErrorKind::Connect;
      last_error = httplib::to_string(err);
      continue;  // transient, retry
    }
    if (res->status >= 500) {
      last_kind = RemoteErrorKind::HttpStatus;
      last_error = "status " + std::to_string(res->status);
      continue;  // transient, retry
    }
    if (res->status != 200) {
      throw RemoteError(RemoteErrorKind::HttpStatus,
                        "status " + std::to_string(res->status) + " from " +
                            cfg.base_url);
    }

    GenResult result;
    try {
      const json reply = json::parse(res->body);
      result.text = reply.at("text").get<std::string>();
      result.truncated = reply.value("truncated", false);
    } catch (const json::exception& e) {
      throw RemoteError(RemoteErrorKind::MalformedBody, e.what());
    }
    const auto elapsed = std::chrono::steady_clock::now() - started;
    result.stats.attempts = attempt + 1;
    result.stats.latency_ms =
        std::chrono::duration<double, std::milli>(elapsed).count();
    result.stats.prompt_tokens = count_tokens(prompt);
    result.stats.completion_tokens = count_tokens(result.text);
    return result;
  }

  throw RemoteError(last_kind, last_error + " after " +
                                   std::to_string(cfg.max_retries + 1) +
                                   " attempts to " + cfg.base_url);
}

std::string remote_generate(const EndpointConfig& endpoint,
                            const std::string& prompt,
                            const GenerationParams& params, GenStats* stats) {
  RemoteClient client(endpoint);
  GenResult result = client.generate(prompt, params);
  if (stats) {
    *stats = result.stats;
  }
  return std::move(result.text);
}

OraclePolicy::OraclePolicy(const Scene& scene, const Episode& episode)
    : episode_(episode) {
  if (episode.gt_path.empty()) {
    throw std::invalid_argument("episode " + episode.id +
                                " has no ground-truth path");
  }
  if (episode.scene_id != scene.id()) {
    throw std::invalid_argument("episode " + episode.id +
                                " does not belong to scene " + scene.id());
  }
}

PolicyDecision OraclePolicy::act(const PromptBundle&, const Observation& obs,
                                 const History&) {
  const auto& path = episode_.gt_path;
  if (cursor_ >= path.size() || path[cursor_] != obs.at) {
    throw std::logic_error("oracle policy is off the ground-truth path at " +
                           obs.at + " (episode " + episode_.id + ")");
  }
  if (cursor_ + 1 == path.size()) {
    return {"stop", Action::stop(), false};
  }
  const std::string& next = path[cursor_ + 1];
  ++cursor_;
  return {next, Action::go_to(next), false};
}

GreedyPolicy::GreedyPolicy(const Scene& scene, std::string goal,
                           double threshold)
    : scene_(scene), goal_(std::move(goal)), threshold_(threshold) {
  if (!scene_.has(goal_)) {
    throw std::invalid_argument("greedy policy goal " + goal_ +
                                " is not in scene " + scene_.id());
  }
}

PolicyDecision GreedyPolicy::act(const PromptBundle&, const Observation& obs,
                                 const History&) {
  const auto here = scene_.geodesic(obs.at, goal_);
  if (!here || *here <= threshold_ || obs.candidates.empty()) {
    return {"stop", Action::stop(), false};
  }
  double best = std::numeric_limits<double>::infinity();
  std::size_t best_i = obs.candidates.size();
  for (std::size_t i = 0; i < obs.candidates.size(); ++i) {
    const auto d = scene_.geodesic(obs.candidates[i], goal_);
    if (d && *d < best) {
      best = *d;
      best_i = i;
    }
  }
  if (best_i == obs.candidates.size()) {
    return {"stop", Action::stop(), false};
  }
  const std::string& pick = obs.candidates[best_i];
  return {pick, Action::go_to(pick), false};
}

PolicyDecision RandomPolicy::act(const PromptBundle&, const Observation& obs,
                                 const History&) {
  const std::size_t k = obs.candidates.size();
  const std::uint64_t draw = bounded_rand(rng_, k + 1);
  if (draw == k) {
    return {"stop", Action::stop(), false};
  }
  const std::string& pick = obs.candidates[draw];
  return {pick, Action::go_to(pick), false};
}

RemotePolicy::RemotePolicy(std::shared_ptr<RemoteClient> client,
                           GenerationParams params)
    : client_(std::move(client)), params_(params) {
  if (!client_) {
    throw std::invalid_argument("remote policy needs a client");
  }
}

PolicyDecision RemotePolicy::act(const PromptBundle& prompt,
                                 const Observation& obs, const History&) {
  GenResult reply = client_->generate(prompt.rendered, params_);
  if (obs.candidates.empty()) {
    // Stop is the only legal action here regardless of what came back.
    return {std::move(reply.text), Action::stop(), false};
  }
  auto parsed = parse_action(reply.text, obs.candidates);
  if (std::holds_alternative<ParseFailure>(parsed)) {
    return {std::move(reply.text), Action::stop(), true};
  }
  return {std::move(reply.text), std::get<Action>(parsed), false};
}

BeliefHypothesis ScriptedBeliefSource::describe(const BeliefQuery& query) {
  const auto it = script_.find(query.step);
  if (it == script_.end()) {
    return {"", query.step, false};
  }
  return {it->second, query.step, false};
}

RemoteBeliefSource::RemoteBeliefSource(std::shared_ptr<RemoteClient> client,
                                       GenerationParams params)
    : client_(std::move(client)), params_(params) {
  if (!client_) {
    throw std::invalid_argument("remote belief source needs a client");
  }
}

BeliefHypothesis RemoteBeliefSource::describe(const BeliefQuery& query) {
  if (!query.request) {
    throw std::invalid_argument("belief query has no rendered request");
  }
  GenResult reply = client_->generate(query.request->rendered, params_);
  return {std::move(reply.text), query.step, reply.truncated};
}

std::map<std::size_t, std::string> ScriptedBeliefBook::script_for(
    const std::string& episode_id) const {
  const auto it = per_episode.find(episode_id);
  return it != per_episode.end() ? it->second : default_script;
}

ScriptedBeliefBook load_scripted_beliefs(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw std::invalid_argument("cannot open scripted beliefs file " + path);
  }
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& e) {
    throw std::invalid_argument(path + ": " + e.what());
  }

  const auto parse_script = [&](const json& node) {
    std::map<std::size_t, std::string> script;
    for (const auto& [key, value] : node.items()) {
      std::size_t step = 0;
      try {
        step = std::stoull(key);
      } catch (const std::exception&) {
        throw std::invalid_argument(path + ": step key '" + key +
                                    "' is not an integer");
      }
      script[step] = value.get<std::string>();
    }
    return script;
  };

  ScriptedBeliefBook book;
  if (doc.contains("default")) {
    book.default_script = parse_script(doc.at("default"));
  }
  if (doc.contains("episodes")) {
    for (const auto& [episode_id, node] : doc.at("episodes").items()) {
      book.per_episode[episode_id] = parse_script(node);
    }
  }
  return book;
}

}  // namespace naveval
