#include "asthmarisk/codemap.hpp"

#include <fstream>
#include <stdexcept>

#include <json.hpp>

namespace asthmarisk {

namespace {

template <typename E>
std::optional<E> find(const std::map<std::string, E>& m, const std::string& raw) {
  auto it = m.find(raw);
  if (it == m.end()) return std::nullopt;
  return it->second;
}

template <typename E>
void load_section(const nlohmann::json& j, const char* key, std::map<std::string, E>& out,
                  std::optional<E> (*parse)(const std::string&)) {
  if (!j.contains(key)) return;
  for (const auto& [raw, canonical] : j.at(key).items()) {
    auto e = parse(canonical.template get<std::string>());
    if (!e) {
      throw std::runtime_error(std::string("code map: unknown target '") +
                               canonical.template get<std::string>() + "' under " + key);
    }
    out[raw] = *e;
  }
}

template <typename E>
nlohmann::json dump_section(const std::map<std::string, E>& m) {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [raw, e] : m) j[raw] = to_string(e);
  return j;
}

}  // namespace

std::optional<Gender> CodeMap::map_gender(const std::string& raw) const {
  return find(genders, raw);
}
std::optional<Setting> CodeMap::map_setting(const std::string& raw) const {
  return find(settings, raw);
}
std::optional<Comorbidity> CodeMap::map_comorbidity(const std::string& raw) const {
  return find(comorbidities, raw);
}
std::optional<MedClass> CodeMap::map_med_class(const std::string& raw) const {
  return find(med_classes, raw);
}

CodeMap CodeMap::defaults() {
  CodeMap cm;
  cm.genders = {{"F", Gender::F},       {"M", Gender::M},       {"Unknown", Gender::Unknown},
                {"Female", Gender::F},  {"Male", Gender::M},    {"U", Gender::Unknown}};
  cm.settings = {{"ED", Setting::ED},           {"Inpatient", Setting::Inpatient},
                 {"Outpatient", Setting::Outpatient},
                 {"ER", Setting::ED},           {"IP", Setting::Inpatient},
                 {"OP", Setting::Outpatient}};
  cm.comorbidities = {{"Obesity", Comorbidity::Obesity},
                      {"SleepApnea", Comorbidity::SleepApnea},
                      {"AllergicRhinitis", Comorbidity::AllergicRhinitis},
                      {"AtopicDermatitis", Comorbidity::AtopicDermatitis},
                      {"GERD", Comorbidity::GERD},
                      {"AnxietyDepression", Comorbidity::AnxietyDepression},
                      {"OSA", Comorbidity::SleepApnea},
                      {"Eczema", Comorbidity::AtopicDermatitis},
                      {"Reflux", Comorbidity::GERD}};
  cm.med_classes = {{"Controller", MedClass::Controller},
                    {"Reliever", MedClass::Reliever},
                    {"OralCorticosteroid", MedClass::OralCorticosteroid},
                    {"OtherAsthma", MedClass::OtherAsthma},
                    {"ICS", MedClass::Controller},
                    {"SABA", MedClass::Reliever},
                    {"OCS", MedClass::OralCorticosteroid}};
  return cm;
}

CodeMap CodeMap::load_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open code map: " + path);
  nlohmann::json j;
  in >> j;
  CodeMap cm;
  load_section(j, "genders", cm.genders, &gender_from_string);
  load_section(j, "settings", cm.settings, &setting_from_string);
  load_section(j, "comorbidity_codes", cm.comorbidities, &comorbidity_from_string);
  load_section(j, "med_classes", cm.med_classes, &med_class_from_string);
  return cm;
}

void CodeMap::save_json(const std::string& path) const {
  nlohmann::json j;
  j["genders"] = dump_section(genders);
  j["settings"] = dump_section(settings);
  j["comorbidity_codes"] = dump_section(comorbidities);
  j["med_classes"] = dump_section(med_classes);
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write code map: " + path);
  out << j.dump(2) << "\n";
}

}  // namespace asthmarisk
