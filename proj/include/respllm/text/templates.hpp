#pragma once

#include <optional>
#include <string>
#include <vector>

namespace respllm::text {

// Fields of the diagnostic task prompt. All five are required.
struct TaskSpec {
  std::string dataset;      // D
  std::string sound_type;   // T
  std::string condition;    // C
  std::string positive;     // C1, the answer "1"
  std::string negative;     // C2, the answer "0"
};

// Demographics, medical history and symptoms. Absent fields produce no text;
// an empty list counts as absent.
struct DmsRecord {
  std::optional<std::string> gender;
  std::optional<int> age;
  std::optional<std::vector<std::string>> medical_history;
  std::optional<std::vector<std::string>> symptoms;
  std::optional<std::string> location;

  bool operator==(const DmsRecord&) const = default;
};

std::string render_task_prompt(const TaskSpec& task);

// Sentences for the present fields in the order gender, age, medical history,
// symptoms, location, separated by one space. Lists are joined with ", ".
std::string render_dms(const DmsRecord& record);

std::string join(const std::vector<std::string>& items, const std::string& sep);

}  // namespace respllm::text
