#pragma once

#include <string>

namespace naveval {

/// Agent action: move to an adjacent viewpoint or end the episode.
struct Action {
  enum class Kind { GoTo, Stop };

  Kind kind = Kind::Stop;
  std::string target;  // viewpoint id, meaningful for GoTo only

  static Action stop() { return {}; }
  static Action go_to(std::string viewpoint_id) {
    return {Kind::GoTo, std::move(viewpoint_id)};
  }
  bool is_stop() const { return kind == Kind::Stop; }

  friend bool operator==(const Action& a, const Action& b) {
    return a.kind == b.kind && (a.is_stop() || a.target == b.target);
  }
};

/// Flat wire form: "stop" or "goto:<viewpoint-id>".
std::string to_string(const Action& action);
Action action_from_string(const std::string& text);

}  // namespace naveval
