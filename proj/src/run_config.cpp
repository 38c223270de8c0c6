#include "naveval/run_config.hpp"

#include <nlohmann/json.hpp>

#include <cctype>
#include <fstream>
#include <sstream>

#include "naveval/comms.hpp"

namespace naveval {

using nlohmann::json;

const char kHarnessVersion[] = "0.1.0";

namespace {

std::string trim(const std::string& text) {
  std::size_t b = 0, e = text.size();
  while (b < e && std::isspace(static_cast<unsigned char>(text[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(text[e - 1]))) --e;
  return text.substr(b, e - b);
}

std::string unquote(const std::string& text) {
  if (text.size() >= 2 && text.front() == '"' && text.back() == '"') {
    return text.substr(1, text.size() - 2);
  }
  return text;
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    item = trim(item);
    if (!item.empty()) {
      out.push_back(unquote(item));
    }
  }
  return out;
}

long parse_int(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const long v = std::stol(value, &used);
    if (used != value.size()) {
      throw std::invalid_argument("trailing characters");
    }
    return v;
  } catch (const std::exception&) {
    throw ConfigError(key + ": expected an integer, got '" + value + "'");
  }
}

std::uint64_t parse_u64(const std::string& key, const std::string& value) {
  // stoull would wrap a leading minus instead of rejecting it.
  if (!value.empty() && value[0] == '-') {
    throw ConfigError(key + ": expected an unsigned integer, got '" + value +
                      "'");
  }
  try {
    std::size_t used = 0;
    const unsigned long long v = std::stoull(value, &used);
    if (used != value.size()) {
      throw std::invalid_argument("trailing characters");
    }
    return v;
  } catch (const std::exception&) {
    throw ConfigError(key + ": expected an unsigned integer, got '" + value +
                      "'");
  }
}

double parse_double(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const double v = std::stod(value, &used);
    if (used != value.size()) {
      throw std::invalid_argument("trailing characters");
    }
    return v;
  } catch (const std::exception&) {
    throw ConfigError(key + ": expected a number, got '" + value + "'");
  }
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  throw ConfigError(key + ": expected true/false, got '" + value + "'");
}

MixtureSpec parse_mixture(const std::string& key, const std::string& value) {
  MixtureSpec spec;
  for (const auto& part : split_list(value)) {
    const auto colon = part.find(':');
    if (colon == std::string::npos) {
      throw ConfigError(key + ": expected name:weight entries, got '" + part +
                        "'");
    }
    spec.sources.emplace_back(
        trim(part.substr(0, colon)),
        parse_u64(key, trim(part.substr(colon + 1))));
  }
  if (spec.sources.empty()) {
    throw ConfigError(key + ": empty mixture");
  }
  return spec;
}

}  // namespace

void set_config_value(RunConfig& config, const std::string& key,
                      const std::string& value) {
  if (key == "scenes") {
    config.scene_paths = split_list(value);
  } else if (key == "episodes") {
    config.episodes_path = unquote(value);
  } else if (key == "policy") {
    config.policy = unquote(value);
  } else if (key == "belief") {
    config.belief = unquote(value);
  } else if (key == "scripted_beliefs") {
    config.scripted_beliefs_path = unquote(value);
  } else if (key == "max_steps") {
    config.max_steps = static_cast<int>(parse_int(key, value));
  } else if (key == "success_threshold") {
    config.success_threshold = parse_double(key, value);
  } else if (key == "seed") {
    config.seed = parse_u64(key, value);
  } else if (key == "jobs") {
    config.jobs = static_cast<int>(parse_int(key, value));
  } else if (key == "out_dir") {
    config.out_dir = unquote(value);
  } else if (key == "metric_distance") {
    config.metric_distance = distance_mode_from_string(unquote(value));
  } else if (key == "cloud_points") {
    config.sampling.cloud_points =
        static_cast<std::size_t>(parse_u64(key, value));
  } else if (key == "group_centers") {
    config.sampling.group_centers =
        static_cast<std::size_t>(parse_u64(key, value));
  } else if (key == "group_size") {
    config.sampling.group_size =
        static_cast<std::size_t>(parse_u64(key, value));
  } else if (key == "drop_outliers") {
    config.sampling.drop_outliers = parse_bool(key, value);
  } else if (key == "outlier_neighbors") {
    config.sampling.outlier_neighbors =
        static_cast<std::size_t>(parse_u64(key, value));
  } else if (key == "outlier_sigma") {
    config.sampling.outlier_sigma = parse_double(key, value);
  } else if (key == "belief_max_new_tokens") {
    config.belief_decoding.max_new_tokens =
        static_cast<int>(parse_int(key, value));
  } else if (key == "belief_top_p") {
    config.belief_decoding.top_p = parse_double(key, value);
  } else if (key == "belief_temperature") {
    config.belief_decoding.temperature = parse_double(key, value);
  } else if (key == "belief_do_sample") {
    config.belief_decoding.do_sample = parse_bool(key, value);
  } else if (key == "nav_max_new_tokens") {
    config.nav_decoding.max_new_tokens =
        static_cast<int>(parse_int(key, value));
  } else if (key == "nav_top_p") {
    config.nav_decoding.top_p = parse_double(key, value);
  } else if (key == "nav_temperature") {
    config.nav_decoding.temperature = parse_double(key, value);
  } else if (key == "nav_do_sample") {
    config.nav_decoding.do_sample = parse_bool(key, value);
  } else if (key == "policy_url") {
    config.policy_endpoint.base_url = unquote(value);
  } else if (key == "policy_model") {
    config.policy_endpoint.model = unquote(value);
  } else if (key == "policy_timeout_s") {
    config.policy_endpoint.timeout_s = parse_double(key, value);
  } else if (key == "policy_max_retries") {
    config.policy_endpoint.max_retries =
        static_cast<int>(parse_int(key, value));
  } else if (key == "policy_max_inflight") {
    config.policy_endpoint.max_inflight =
        static_cast<int>(parse_int(key, value));
  } else if (key == "policy_auth_env") {
    config.policy_endpoint.auth_token_env = unquote(value);
  } else if (key == "belief_url") {
    config.belief_endpoint.base_url = unquote(value);
  } else if (key == "belief_model") {
    config.belief_endpoint.model = unquote(value);
  } else if (key == "belief_timeout_s") {
    config.belief_endpoint.timeout_s = parse_double(key, value);
  } else if (key == "belief_max_retries") {
    config.belief_endpoint.max_retries =
        static_cast<int>(parse_int(key, value));
  } else if (key == "belief_max_inflight") {
    config.belief_endpoint.max_inflight =
        static_cast<int>(parse_int(key, value));
  } else if (key == "belief_auth_env") {
    config.belief_endpoint.auth_token_env = unquote(value);
  } else if (key == "mixture") {
    const auto seed = config.mixture.seed;
    config.mixture = parse_mixture(key, value);
    config.mixture.seed = seed;
  } else if (key == "mixture_seed") {
    config.mixture.seed = parse_u64(key, value);
  } else {
    throw ConfigError("unknown config key: " + key);
  }
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw ConfigError("cannot open config file " + path);
  }
  RunConfig config;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) {
      line = line.substr(0, hash);
    }
    line = trim(line);
    if (line.empty()) {
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(path + ":" + std::to_string(line_no) +
                        ": expected key = value");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) {
      throw ConfigError(path + ":" + std::to_string(line_no) + ": empty key");
    }
    try {
      set_config_value(config, key, value);
    } catch (const ConfigError& e) {
      throw ConfigError(path + ":" + std::to_string(line_no) + ": " +
                        e.what());
    }
  }
  return config;
}

std::string config_snapshot_json(const RunConfig& config) {
  json doc;
  doc["harness_version"] = kHarnessVersion;
  doc["seed"] = config.seed;
  doc["max_steps"] = config.max_steps;
  doc["success_threshold"] = config.success_threshold;
  doc["metric_distance"] = to_string(config.metric_distance);
  doc["jobs"] = config.jobs;
  doc["out_dir"] = config.out_dir;
  doc["scenes"] = config.scene_paths;
  doc["episodes"] = config.episodes_path;
  doc["policy"] = config.policy;
  doc["belief"] = config.belief;
  if (!config.scripted_beliefs_path.empty()) {
    doc["scripted_beliefs"] = config.scripted_beliefs_path;
  }

  doc["sampling"]["cloud_points"] = config.sampling.cloud_points;
  doc["sampling"]["group_centers"] = config.sampling.group_centers;
  doc["sampling"]["group_size"] = config.sampling.group_size;
  doc["sampling"]["drop_outliers"] = config.sampling.drop_outliers;
  doc["sampling"]["outlier_neighbors"] = config.sampling.outlier_neighbors;
  doc["sampling"]["outlier_sigma"] = config.sampling.outlier_sigma;

  const auto decoding = [](const GenerationParams& p) {
    json d;
    d["max_new_tokens"] = p.max_new_tokens;
    d["top_p"] = p.top_p;
    d["temperature"] = p.temperature;
    d["do_sample"] = p.do_sample;
    return d;
  };
  doc["decoding"]["belief"] = decoding(config.belief_decoding);
  doc["decoding"]["nav"] = decoding(config.nav_decoding);

  json mixture = json::object();
  json mixture_order = json::array();
  for (const auto& [name, weight] : config.mixture.sources) {
    mixture[name] = weight;
    mixture_order.push_back(name);
  }
  doc["mixture"]["weights"] = mixture;
  doc["mixture"]["order"] = mixture_order;
  doc["mixture"]["seed"] = config.mixture.seed;

  doc["templates"]["version"] = kTemplateVersion;
  for (const auto& [name, hash] : template_hashes()) {
    doc["templates"]["sha256"][name] = hash;
  }

  const auto endpoint = [](const EndpointConfig& e) {
    json d;
    d["base_url"] = e.base_url;
    d["model"] = e.model;
    d["timeout_s"] = e.timeout_s;
    d["max_retries"] = e.max_retries;
    d["max_inflight"] = e.max_inflight;
    d["auth_token_env"] = e.auth_token_env;
    return d;
  };
  if (!config.policy_endpoint.base_url.empty()) {
    doc["endpoints"]["policy"] = endpoint(config.policy_endpoint);
  }
  if (!config.belief_endpoint.base_url.empty()) {
    doc["endpoints"]["belief"] = endpoint(config.belief_endpoint);
  }
  return doc.dump(2);
}

}  // namespace naveval
