#pragma once

#include <map>
#include <optional>
#include <string>

#include "asthmarisk/records.hpp"

namespace asthmarisk {

// Translates raw extract code strings into the abstract enums. Keeping the
// mapping in a config file isolates coding-system churn from the pipeline:
// new raw codes only ever touch the map.
struct CodeMap {
  std::map<std::string, Gender> genders;
  std::map<std::string, Setting> settings;
  std::map<std::string, Comorbidity> comorbidities;
  std::map<std::string, MedClass> med_classes;

  std::optional<Gender> map_gender(const std::string& raw) const;
  std::optional<Setting> map_setting(const std::string& raw) const;
  std::optional<Comorbidity> map_comorbidity(const std::string& raw) const;
  std::optional<MedClass> map_med_class(const std::string& raw) const;

  // Identity mappings for every canonical enum name, plus common aliases
  // ("ER" -> ED, "IP" -> Inpatient, ...).
  static CodeMap defaults();

  static CodeMap load_json(const std::string& path);
  void save_json(const std::string& path) const;
};

}  // namespace asthmarisk
