#pragma once

#include <map>
#include <stdexcept>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "naveval/action.hpp"
#include "naveval/scene.hpp"

namespace naveval {

class CommsError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Textual spatial hypothesis produced by the belief source at one step.
struct BeliefHypothesis {
  std::string text;
  std::size_t source_step = 0;
  bool truncated = false;  // generation hit its token budget
};

enum class PromptKind { For3DModel, ForNavAgent };

/// A fully rendered prompt plus the raw values that went into its slots.
/// `rendered` is byte-stable for fixed inputs; `sha256` hashes it.
struct PromptBundle {
  PromptKind kind = PromptKind::ForNavAgent;
  TaskKind task_kind = TaskKind::VLN;
  std::string rendered;
  std::vector<std::pair<std::string, std::string>> slots;  // name -> raw value
  std::string sha256;
};

/// Slot values are folded to a single line before insertion: backslash,
/// newline, and carriage return become \\, \n, \r. This keeps every
/// template line-structured, so extraction is exact and distinct values
/// always render distinct prompts.
std::string escape_slot(const std::string& value);
std::string unescape_slot(const std::string& value);

/// Renders the request sent to the belief model. For navigation tasks
/// task_info is optional extra context (empty omits its line); for question
/// tasks task_info is the question itself and must be nonempty.
PromptBundle build_3d_request(TaskKind task_kind, const std::string& task_info);

/// Renders the navigation-agent prompt. The observation summary fills the
/// Candidate slot on navigation tasks and the Observation slot on question
/// tasks. An empty hypothesis renders as the literal "None".
PromptBundle fmt(const BeliefHypothesis& hypothesis,
                 const std::string& instruction,
                 const std::string& observation_summary,
                 const std::string& history_summary, TaskKind task_kind);

/// Raw text the model produced when no action rule matched it.
struct ParseFailure {
  std::string raw;
};

/// Maps raw model output onto the action space. Rules, in priority order:
///   1. any "stop" token                        -> Stop
///   2. an index: a lone letter ("A"), a lone
///      integer ("2"), or keyword+integer
///      ("option 2", "candidate3"), 1-based     -> that candidate
///   3. longest candidate id appearing in the
///      text, ties to earliest candidate        -> that candidate
///   4. otherwise                               -> ParseFailure
/// Matching is case-insensitive. Never yields a move outside `candidates`.
std::variant<Action, ParseFailure> parse_action(
    const std::string& raw, const std::vector<std::string>& candidates);

/// Inverse of rendering: recovers the raw slot values from a rendered
/// prompt. Throws CommsError if the prompt does not match its template.
std::map<std::string, std::string> extract_slots(const PromptBundle& bundle);

/// Template resource version; bumped whenever any template text changes.
inline constexpr const char* kTemplateVersion = "1";

/// name -> sha256 of the raw (unsubstituted) template text.
std::map<std::string, std::string> template_hashes();

/// JSON document with every template's text, hash, and the version; the
/// `templates dump` subcommand prints this for auditing.
std::string templates_dump();

}  // namespace naveval
