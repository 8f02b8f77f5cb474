#include "shieldscan/study_io.hpp"

#include <iomanip>
#include <ostream>
#include <set>

#include "shieldscan/errors.hpp"

namespace shieldscan {

namespace {

const std::set<std::string> kConfigKeys{
    "name",     "b",           "tau",          "true_materials",     "grid_x_g_per_cm2", "presumed",
    "replicates", "level",     "seed",         "drf_error_sd",       "perturb_background", "method",
    "threads",  "keep_samples", "note"};

Vector vector_from(const json& j, const char* what) {
  if (!j.is_array()) throw UsageError(std::string(what) + " must be an array of numbers");
  Vector v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) v[static_cast<Eigen::Index>(i)] = j[i].get<double>();
  return v;
}

}  // namespace

std::string test_label(const std::vector<std::string>& materials) {
  std::string s;
  for (const auto& m : materials) s += (s.empty() ? "" : "+") + m;
  return s;
}

StudyConfig study_config_from_json(const json& j) {
  if (!j.is_object()) throw UsageError("study config must be a JSON object");
  for (const auto& [k, v] : j.items()) {
    if (!kConfigKeys.count(k)) throw UsageError("unknown study config key '" + k + "'");
  }
  try {
    StudyConfig c;
    c.name = j.value("name", std::string("study"));
    if (j.contains("b")) {
      c.b = vector_from(j.at("b"), "b");
    } else {
      c.b = Vector(3);
      c.b << 1.0, 0.15, 1.0;
    }
    c.tau = j.value("tau", 1.0);
    c.true_materials = j.value("true_materials", std::vector<std::string>{});
    if (!j.contains("grid_x_g_per_cm2")) throw UsageError("study config needs grid_x_g_per_cm2");
    for (const auto& x : j.at("grid_x_g_per_cm2")) c.grid.push_back(vector_from(x, "grid point"));
    if (!j.contains("presumed")) throw UsageError("study config needs presumed");
    c.presumed = j.at("presumed").get<std::vector<std::vector<std::string>>>();
    c.replicates = j.value("replicates", c.replicates);
    c.level = j.value("level", c.level);
    c.seed = j.value("seed", c.seed);
    c.drf_error_sd = j.value("drf_error_sd", c.drf_error_sd);
    c.perturb_background = j.value("perturb_background", c.perturb_background);
    c.method = parse_test_kind(j.value("method", std::string("lm")));
    c.threads = j.value("threads", c.threads);
    c.keep_samples = j.value("keep_samples", c.keep_samples);
    c.note = j.value("note", std::string{});
    c.validate();
    return c;
  } catch (const json::exception& e) {
    throw UsageError(std::string("malformed study config: ") + e.what());
  }
}

json study_config_to_json(const StudyConfig& c) {
  json grid = json::array();
  for (const auto& x : c.grid) grid.push_back(to_json(x));
  json j{{"name", c.name},
         {"b", to_json(c.b)},
         {"tau", c.tau},
         {"true_materials", c.true_materials},
         {"grid_x_g_per_cm2", grid},
         {"presumed", c.presumed},
         {"replicates", c.replicates},
         {"level", c.level},
         {"seed", c.seed},
         {"drf_error_sd", c.drf_error_sd},
         {"perturb_background", c.perturb_background},
         {"method", to_string(c.method)},
         {"keep_samples", c.keep_samples}};
  if (!c.note.empty()) j["note"] = c.note;
  return j;
}

json study_result_to_json(const StudyResult& r) {
  json tests = json::array();
  for (std::size_t t = 0; t < r.cells.size(); ++t) {
    json cells = json::array();
    for (std::size_t g = 0; g < r.cells[t].size(); ++g) {
      const CellResult& c = r.cells[t][g];
      json cell{{"grid_index", g},          {"rejections", c.rejections}, {"replicates", c.valid},
                {"failures", c.failures},   {"rate", c.rate},             {"se", c.se},
                {"mean_statistic", c.mean_statistic}};
      if (!r.corrected_rate.empty()) cell["corrected_rate"] = r.corrected_rate[t][g];
      if (!c.statistics.empty()) {
        cell["statistics"] = c.statistics;
        cell["p_values"] = c.p_values;
      }
      cells.push_back(cell);
    }
    json entry{{"presumed", test_label(r.config.presumed[t])}, {"cells", cells}};
    if (!r.corrected_cutoff.empty()) entry["corrected_cutoff"] = r.corrected_cutoff[t];
    tests.push_back(entry);
  }
  return {{"config", study_config_to_json(r.config)}, {"tests", tests}, {"seconds", r.seconds}};
}

void write_study_csv(std::ostream& out, const StudyResult& r) {
  const bool corrected = !r.corrected_rate.empty();
  out << "grid_index";
  for (const auto& m : r.config.true_materials) out << ",x_" << m << "_g_per_cm2";
  out << ",test,rejections,replicates,failures,rate,se,mean_statistic";
  if (corrected) out << ",corrected_rate";
  out << '\n';
  out << std::setprecision(10);
  for (std::size_t g = 0; g < r.config.grid.size(); ++g) {
    for (std::size_t t = 0; t < r.cells.size(); ++t) {
      const CellResult& c = r.cells[t][g];
      out << g;
      for (Eigen::Index m = 0; m < r.config.grid[g].size(); ++m) out << ',' << r.config.grid[g][m];
      out << ',' << test_label(r.config.presumed[t]) << ',' << c.rejections << ',' << c.valid << ',' << c.failures
          << ',' << c.rate << ',' << c.se << ',' << c.mean_statistic;
      if (corrected) out << ',' << r.corrected_rate[t][g];
      out << '\n';
    }
  }
}

}  // namespace shieldscan
