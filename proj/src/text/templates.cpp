#include "respllm/text/templates.hpp"

#include "respllm/core/matrix.hpp"

namespace respllm::text {

std::string join(const std::vector<std::string>& items, const std::string& sep) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i > 0) out += sep;
    out += items[i];
  }
  return out;
}

std::string render_task_prompt(const TaskSpec& t) {
  auto require = [](const std::string& v, const char* field) {
    if (v.empty()) throw InputError(std::string("render_task_prompt: empty field ") + field);
  };
  require(t.dataset, "D (dataset)");
  require(t.sound_type, "T (sound type)");
  require(t.condition, "C (condition)");
  require(t.positive, "C1 (positive class)");
  require(t.negative, "C2 (negative class)");
  return "Dataset description: This data comes from the " + t.dataset +
         ". Task description: classify whether the participant has " + t.condition +
         " given the following information and audio of the person's " + t.sound_type +
         " sounds. Please output 1 for " + t.positive + ", and 0 for " + t.negative + ".";
}

std::string render_dms(const DmsRecord& r) {
  std::vector<std::string> sentences;
  if (r.gender && !r.gender->empty()) sentences.push_back("Gender: " + *r.gender + ".");
  if (r.age) sentences.push_back("Age: " + std::to_string(*r.age) + ".");
  if (r.medical_history && !r.medical_history->empty())
    sentences.push_back("Patient presents with " + join(*r.medical_history, ", ") +
                        " medical history conditions.");
  if (r.symptoms && !r.symptoms->empty())
    sentences.push_back("Patient presents with the following respiratory symptoms: " +
                        join(*r.symptoms, ", ") + ".");
  if (r.location && !r.location->empty())
    sentences.push_back("Recorded location: " + *r.location + ".");
  return join(sentences, " ");
}

}  // namespace respllm::text
