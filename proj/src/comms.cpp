#include "naveval/comms.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <array>
#include <cctype>

#include "naveval/sha256.hpp"

namespace naveval {

namespace {

constexpr char kChatPreamble[] =
    "A chat between a curious user and an artificial intelligence assistant. "
    "The assistant gives helpful, detailed, and polite answers to the user's "
    "questions.";

constexpr char kPointPlaceholder[] =
    "USER: <point_start> <point_patch> <point_patch> ... <point_patch> "
    "<point_patch> <point_end>";

constexpr char kNavTaskSentence[] =
    "Here is your task: Illustrate the spatial relationships of each object "
    "based on the task requirements and the point cloud accurately.";

// Belief-model request, navigation task, no extra context.
const std::string kBeliefNavTemplate = std::string(kChatPreamble) + "\n" +
                                       kPointPlaceholder + "\n" +
                                       kNavTaskSentence + "\nASSISTANT:";

// Belief-model request, navigation task, with extra context.
const std::string kBeliefNavInfoTemplate =
    std::string(kChatPreamble) + "\n" + kPointPlaceholder +
    "\nHere are some additional task descriptions: {task_info}\n" +
    kNavTaskSentence + "\nASSISTANT:";

// Belief-model request, question task: the question is the task.
const std::string kBeliefQaTemplate =
    std::string(kChatPreamble) + "\n" + kPointPlaceholder +
    "\nHere is your task: {task_info}\nASSISTANT:";

constexpr char kNavVlnTemplate[] =
    "Navigate following the instruction.\n"
    "Instruction: {instruction}\n"
    "Following is the History, which contains the visual information of your "
    "previous observation.\n"
    "History: {history}\n"
    "Following is the Candidate, which contains several directions you can "
    "go to at the current position.\n"
    "Candidate: {candidate}\n"
    "Following is the 3D Spatial Description of the current location.\n"
    "Spatial Information: {hypothesis}\n"
    "Output hint: Select the correct direction from the candidates to go "
    "based on the Instruction, Observation and Spatial Information.";

constexpr char kNavQaTemplate[] =
    "Please answer questions based on the 3D Spatial Information and "
    "Observation.\n"
    "Question: {question}\n"
    "Following is the 3D Spatial Information or the answers to the question "
    "given by a 3D assistant.\n"
    "Spatial Information: {hypothesis}\n"
    "Following is the Observation, which includes multiple images from "
    "different locations:\n"
    "Observation: {observation}\n"
    "Output hint: Compare the data obtained from 3D assistant and "
    "Observation to determine the final answer.\n"
    "Your Answer:";

/// Substitutes one "{name}" placeholder, which must occur exactly once.
void substitute(std::string& text, const std::string& name,
                const std::string& escaped_value) {
  const std::string marker = "{" + name + "}";
  const auto pos = text.find(marker);
  if (pos == std::string::npos ||
      text.find(marker, pos + 1) != std::string::npos) {
    throw CommsError("template slot {" + name +
                     "} missing or duplicated in template");
  }
  text.replace(pos, marker.size(), escaped_value);
}

PromptBundle finish(PromptBundle bundle) {
  bundle.sha256 = sha256_hex(bundle.rendered);
  return bundle;
}

std::string lowercase(const std::string& text) {
  std::string out = text;
  std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) {
    return static_cast<char>(std::tolower(c));
  });
  return out;
}

std::string trim(const std::string& text) {
  std::size_t b = 0, e = text.size();
  while (b < e && std::isspace(static_cast<unsigned char>(text[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(text[e - 1]))) --e;
  return text.substr(b, e - b);
}

std::vector<std::string> tokenize_lower(const std::string& raw) {
  std::vector<std::string> tokens;
  std::string cur;
  for (char ch : raw) {
    const auto c = static_cast<unsigned char>(ch);
    if (std::isalnum(c)) {
      cur.push_back(static_cast<char>(std::tolower(c)));
    } else if (!cur.empty()) {
      tokens.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) {
    tokens.push_back(std::move(cur));
  }
  return tokens;
}

// Length cap keeps std::stoull in range; no candidate list is that large.
bool all_digits(const std::string& s) {
  return !s.empty() && s.size() <= 9 &&
         std::all_of(s.begin(), s.end(), [](unsigned char c) {
           return std::isdigit(c) != 0;
         });
}

bool is_index_keyword(const std::string& token) {
  return token == "option" || token == "candidate" || token == "choice" ||
         token == "direction";
}

/// "option3" -> 3, "candidate12" -> 12, otherwise 0.
std::size_t fused_keyword_index(const std::string& token) {
  for (const char* kw : {"option", "candidate", "choice", "direction"}) {
    const std::size_t len = std::char_traits<char>::length(kw);
    if (token.size() > len && token.compare(0, len, kw) == 0 &&
        all_digits(token.substr(len))) {
      return static_cast<std::size_t>(std::stoull(token.substr(len)));
    }
  }
  return 0;
}

std::pair<std::string, std::string> split_label_line(
    const std::string& line, const std::string& path_context) {
  const auto pos = line.find(": ");
  if (pos == std::string::npos) {
    throw CommsError("prompt line lacks a 'Label: value' shape: " +
                     path_context);
  }
  return {line.substr(0, pos), line.substr(pos + 2)};
}

std::vector<std::string> split_lines(const std::string& text) {
  std::vector<std::string> lines;
  std::size_t start = 0;
  for (;;) {
    const auto nl = text.find('\n', start);
    if (nl == std::string::npos) {
      lines.push_back(text.substr(start));
      return lines;
    }
    lines.push_back(text.substr(start, nl - start));
    start = nl + 1;
  }
}

std::string value_after(const std::string& line, const std::string& prefix,
                        const char* what) {
  if (line.rfind(prefix, 0) != 0) {
    throw CommsError(std::string("prompt does not match template at the ") +
                     what + " line");
  }
  return line.substr(prefix.size());
}

}  // namespace


std::string escape_slot(const std::string& value) {
  std::string out;
  out.reserve(value.size());
  for (char c : value) {
    switch (c) {
      case '\\':
        out += "\\\\";
        break;
      case '\n':
        out += "\\n";
        break;
      case '\r':
        out += "\\r";
        break;
      default:
        out.push_back(c);
    }
  }
  return out;
}

std::string unescape_slot(const std::string& value) {
  std::string out;
  out.reserve(value.size());
  for (std::size_t i = 0; i < value.size(); ++i) {
    if (value[i] != '\\') {
      out.push_back(value[i]);
      continue;
    }
    if (i + 1 >= value.size()) {
      throw CommsError("dangling escape in slot value");
    }
    switch (value[++i]) {
      case '\\':
        out.push_back('\\');
        break;
      case 'n':
        out.push_back('\n');
        break;
      case 'r':
        out.push_back('\r');
        break;
      default:
        throw CommsError("unknown escape in slot value");
    }
  }
  return out;
}

PromptBundle build_3d_request(TaskKind task_kind,
                              const std::string& task_info) {
  PromptBundle bundle;
  bundle.kind = PromptKind::For3DModel;
  bundle.task_kind = task_kind;
  if (task_kind == TaskKind::VLN) {
    if (task_info.empty()) {
      bundle.rendered = kBeliefNavTemplate;
      return finish(std::move(bundle));
    }
    bundle.rendered = kBeliefNavInfoTemplate;
  } else {
    if (task_info.empty()) {
      throw CommsError("question task requires nonempty task_info");
    }
    bundle.rendered = kBeliefQaTemplate;
  }
  substitute(bundle.rendered, "task_info", escape_slot(task_info));
  bundle.slots.emplace_back("Task Info", task_info);
  return finish(std::move(bundle));
}

PromptBundle fmt(const BeliefHypothesis& hypothesis,
                 const std::string& instruction,
                 const std::string& observation_summary,
                 const std::string& history_summary, TaskKind task_kind) {
  if (instruction.empty()) {
    throw CommsError("fmt: instruction must be nonempty");
  }
  const std::string spatial =
      hypothesis.text.empty() ? "None" : hypothesis.text;

  PromptBundle bundle;
  bundle.kind = PromptKind::ForNavAgent;
  bundle.task_kind = task_kind;
  if (task_kind == TaskKind::VLN) {
    bundle.rendered = kNavVlnTemplate;
    substitute(bundle.rendered, "instruction", escape_slot(instruction));
    substitute(bundle.rendered, "history", escape_slot(history_summary));
    substitute(bundle.rendered, "candidate", escape_slot(observation_summary));
    substitute(bundle.rendered, "hypothesis", escape_slot(spatial));
    bundle.slots.emplace_back("Instruction", instruction);
    bundle.slots.emplace_back("History", history_summary);
    bundle.slots.emplace_back("Candidate", observation_summary);
    bundle.slots.emplace_back("Spatial Information", spatial);
  } else {
    bundle.rendered = kNavQaTemplate;
    substitute(bundle.rendered, "question", escape_slot(instruction));
    substitute(bundle.rendered, "hypothesis", escape_slot(spatial));
    substitute(bundle.rendered, "observation",
               escape_slot(observation_summary));
    bundle.slots.emplace_back("Question", instruction);
    bundle.slots.emplace_back("Spatial Information", spatial);
    bundle.slots.emplace_back("Observation", observation_summary);
  }
  return finish(std::move(bundle));
}

std::variant<Action, ParseFailure> parse_action(
    const std::string& raw, const std::vector<std::string>& candidates) {
  if (candidates.empty()) {
    throw CommsError("parse_action: empty candidate set");
  }
  const auto tokens = tokenize_lower(raw);
  for (const auto& t : tokens) {
    if (t == "stop") {
      return Action::stop();
    }
  }

  const auto by_index = [&](std::size_t one_based) -> std::variant<Action,
                                                                   ParseFailure> {
    return Action::go_to(candidates[one_based - 1]);
  };
  const auto in_range = [&](std::size_t one_based) {
    return one_based >= 1 && one_based <= candidates.size();
  };

  const std::string whole = trim(raw);
  if (whole.size() == 1 &&
      std::isalpha(static_cast<unsigned char>(whole[0]))) {
    const auto idx = static_cast<std::size_t>(
        std::tolower(static_cast<unsigned char>(whole[0])) - 'a' + 1);
    if (in_range(idx)) {
      return by_index(idx);
    }
  }
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i + 1 < tokens.size() && is_index_keyword(tokens[i]) &&
        all_digits(tokens[i + 1])) {
      const auto idx =
          static_cast<std::size_t>(std::stoull(tokens[i + 1]));
      if (in_range(idx)) {
        return by_index(idx);
      }
    }
    if (const auto idx = fused_keyword_index(tokens[i]);
        idx != 0 && in_range(idx)) {
      return by_index(idx);
    }
  }
  if (all_digits(whole)) {
    const auto idx = static_cast<std::size_t>(std::stoull(whole));
    if (in_range(idx)) {
      return by_index(idx);
    }
  }

  const std::string haystack = lowercase(raw);
  std::size_t best = candidates.size();
  std::size_t best_len = 0;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const std::string needle = lowercase(candidates[i]);
    if (needle.empty() || haystack.find(needle) == std::string::npos) {
      continue;
    }
    if (needle.size() > best_len) {
      best_len = needle.size();
      best = i;
    }
  }
  if (best < candidates.size()) {
    return Action::go_to(candidates[best]);
  }
  return ParseFailure{raw};
}

std::map<std::string, std::string> extract_slots(const PromptBundle& bundle) {
  const auto lines = split_lines(bundle.rendered);
  std::map<std::string, std::string> out;
  const auto grab = [&](std::size_t line_idx, const std::string& prefix,
                        const std::string& slot_name) {
    if (line_idx >= lines.size()) {
      throw CommsError("prompt shorter than its template");
    }
    out[slot_name] =
        unescape_slot(value_after(lines[line_idx], prefix, slot_name.c_str()));
  };

  if (bundle.kind == PromptKind::ForNavAgent) {
    if (bundle.task_kind == TaskKind::VLN) {
      if (lines.size() != 9) {
        throw CommsError("navigation prompt must have 9 lines");
      }
      grab(1, "Instruction: ", "Instruction");
      grab(3, "History: ", "History");
      grab(5, "Candidate: ", "Candidate");
      grab(7, "Spatial Information: ", "Spatial Information");
    } else {
      if (lines.size() != 8) {
        throw CommsError("question prompt must have 8 lines");
      }
      grab(1, "Question: ", "Question");
      grab(3, "Spatial Information: ", "Spatial Information");
      grab(5, "Observation: ", "Observation");
    }
    return out;
  }

  // Belief-model request: the optional context line distinguishes layouts.
  if (bundle.task_kind == TaskKind::VLN) {
    if (lines.size() == 4) {
      return out;  // no Task Info slot
    }
    if (lines.size() != 5) {
      throw CommsError("belief request must have 4 or 5 lines");
    }
    grab(2, "Here are some additional task descriptions: ", "Task Info");
    return out;
  }
  if (lines.size() != 4) {
    throw CommsError("belief request must have 4 lines");
  }
  grab(2, "Here is your task: ", "Task Info");
  return out;
}

std::map<std::string, std::string> template_hashes() {
  return {
      {"belief_request_nav", sha256_hex(kBeliefNavTemplate)},
      {"belief_request_nav_with_info", sha256_hex(kBeliefNavInfoTemplate)},
      {"belief_request_qa", sha256_hex(kBeliefQaTemplate)},
      {"nav_agent_vln", sha256_hex(std::string(kNavVlnTemplate))},
      {"nav_agent_qa", sha256_hex(std::string(kNavQaTemplate))},
  };
}

std::string templates_dump() {
  nlohmann::json doc;
  doc["version"] = kTemplateVersion;
  const std::array<std::pair<const char*, std::string>, 5> entries = {{
      {"belief_request_nav", kBeliefNavTemplate},
      {"belief_request_nav_with_info", kBeliefNavInfoTemplate},
      {"belief_request_qa", kBeliefQaTemplate},
      {"nav_agent_vln", std::string(kNavVlnTemplate)},
      {"nav_agent_qa", std::string(kNavQaTemplate)},
  }};
  for (const auto& [name, text] : entries) {
    doc["templates"][name]["text"] = text;
    doc["templates"][name]["sha256"] = sha256_hex(text);
  }
  return doc.dump(2);
}

}  // namespace naveval
