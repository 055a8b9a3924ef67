#include "respllm/baselines/dms_encoding.hpp"

#include <algorithm>
#include <set>

namespace respllm::baselines {
namespace {

std::ptrdiff_t index_of(const std::vector<std::string>& v, const std::string& x) {
  auto it = std::find(v.begin(), v.end(), x);
  return it == v.end() ? -1 : it - v.begin();
}

}  // namespace

DmsSchema DmsSchema::build(std::span<const text::DmsRecord> records) {
  std::set<std::string> med, sym, loc;
  for (const text::DmsRecord& r : records) {
    if (r.medical_history) med.insert(r.medical_history->begin(), r.medical_history->end());
    if (r.symptoms) sym.insert(r.symptoms->begin(), r.symptoms->end());
    if (r.location && *r.location != "unknown") loc.insert(*r.location);
  }
  DmsSchema s;
  s.medical_history.assign(med.begin(), med.end());
  s.symptoms.assign(sym.begin(), sym.end());
  s.locations.assign(loc.begin(), loc.end());
  s.locations.push_back("unknown");
  return s;
}

std::size_t DmsSchema::dimension() const {
  return genders.size() + 1 + medical_history.size() + symptoms.size() + locations.size();
}

nlohmann::json DmsSchema::to_json() const {
  return {{"genders", genders},
          {"medical_history", medical_history},
          {"symptoms", symptoms},
          {"locations", locations}};
}

DmsSchema DmsSchema::from_json(const nlohmann::json& j) {
  DmsSchema s;
  s.genders = j.at("genders").get<std::vector<std::string>>();
  s.medical_history = j.at("medical_history").get<std::vector<std::string>>();
  s.symptoms = j.at("symptoms").get<std::vector<std::string>>();
  s.locations = j.at("locations").get<std::vector<std::string>>();
  return s;
}

RowVector dms_hard_encode(const text::DmsRecord& r, const DmsSchema& schema) {
  RowVector v = RowVector::Zero(static_cast<Eigen::Index>(schema.dimension()));
  if (r.gender) {
    const auto g = index_of(schema.genders, *r.gender);
    if (g >= 0) v(g) = 1.0;
  }
  if (r.age) v(static_cast<Eigen::Index>(schema.age_offset())) = *r.age / 100.0;
  if (r.medical_history)
    for (const std::string& m : *r.medical_history) {
      const auto i = index_of(schema.medical_history, m);
      if (i >= 0) v(static_cast<Eigen::Index>(schema.medical_offset()) + i) = 1.0;
    }
  if (r.symptoms)
    for (const std::string& s : *r.symptoms) {
      const auto i = index_of(schema.symptoms, s);
      if (i >= 0) v(static_cast<Eigen::Index>(schema.symptom_offset()) + i) = 1.0;
    }
  if (r.location) {
    const auto i = index_of(schema.locations, *r.location);
    if (i >= 0) v(static_cast<Eigen::Index>(schema.location_offset()) + i) = 1.0;
  }
  return v;
}

RowVector dms_soft_encode(std::span<const int> ids, const Matrix& table) {
  RowVector v = RowVector::Zero(table.cols());
  if (ids.empty()) return v;
  for (int id : ids) {
    if (id < 0 || id >= table.rows())
      throw InputError("dms_soft_encode: id " + std::to_string(id) + " outside table");
    v += table.row(id);
  }
  return v / static_cast<double>(ids.size());
}

}  // namespace respllm::baselines
