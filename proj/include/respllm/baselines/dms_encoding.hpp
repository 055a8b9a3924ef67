#pragma once

#include "respllm/core/matrix.hpp"
#include "respllm/text/templates.hpp"

#include <nlohmann/json.hpp>

#include <span>
#include <string>
#include <vector>

namespace respllm::baselines {

// Fixed dictionary behind the hard DMS vector:
//   gender one-hot (male, female, unknown) | age / 100 | medical-history multi-hot |
//   symptom multi-hot | location one-hot (known locations + "unknown").
// Absent fields and values outside the dictionary leave their block at zero.
struct DmsSchema {
  std::vector<std::string> genders{"male", "female", "unknown"};
  std::vector<std::string> medical_history;
  std::vector<std::string> symptoms;
  std::vector<std::string> locations;  // last entry is "unknown"

  // Union of every value seen in `records`, each block sorted.
  static DmsSchema build(std::span<const text::DmsRecord> records);

  std::size_t dimension() const;
  std::size_t age_offset() const { return genders.size(); }
  std::size_t medical_offset() const { return age_offset() + 1; }
  std::size_t symptom_offset() const { return medical_offset() + medical_history.size(); }
  std::size_t location_offset() const { return symptom_offset() + symptoms.size(); }

  nlohmann::json to_json() const;
  static DmsSchema from_json(const nlohmann::json& j);
  bool operator==(const DmsSchema&) const = default;
};

RowVector dms_hard_encode(const text::DmsRecord& record, const DmsSchema& schema);

// Masked mean of frozen token embeddings of the rendered DMS text; zeros when empty.
RowVector dms_soft_encode(std::span<const int> dms_ids, const Matrix& embedding_table);

}  // namespace respllm::baselines
