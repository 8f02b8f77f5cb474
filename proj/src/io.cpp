#include "shieldscan/io.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "shieldscan/errors.hpp"

namespace shieldscan {

namespace {

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) {
    const auto b = cell.find_first_not_of(" \t");
    const auto e = cell.find_last_not_of(" \t\r");
    out.push_back(b == std::string::npos ? std::string{} : cell.substr(b, e - b + 1));
  }
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

double parse_double(const std::string& s, const std::string& where) {
  std::size_t pos = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &pos);
  } catch (const std::exception&) {
    throw UsageError(where + ": '" + s + "' is not a number");
  }
  if (pos != s.size()) throw UsageError(where + ": '" + s + "' is not a number");
  return v;
}

std::int64_t parse_count(const std::string& s, const std::string& where) {
  std::size_t pos = 0;
  long long v = 0;
  try {
    v = std::stoll(s, &pos);
  } catch (const std::exception&) {
    throw UsageError(where + ": '" + s + "' is not an integer count");
  }
  if (pos != s.size()) throw UsageError(where + ": '" + s + "' is not an integer count");
  if (v < 0) throw UsageError(where + ": negative count " + s);
  return v;
}

template <class T>
T get_or(const json& j, const char* key, T fallback) {
  return j.contains(key) ? j.at(key).get<T>() : fallback;
}

}  // namespace

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UsageError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

NuclideLibrary library_from_json(const json& j, std::optional<double> threshold) {
  try {
    std::vector<Nuclide> nuclides;
    std::optional<std::size_t> background;
    for (const auto& n : j.at("nuclides")) {
      Nuclide nuc;
      nuc.name = n.at("name").get<std::string>();
      for (const auto& l : n.at("lines")) {
        nuc.lines.push_back({l.at("energy_MeV").get<double>(), l.at("branching_ratio").get<double>()});
      }
      if (get_or(n, "background", false)) {
        if (background) throw UsageError("library declares more than one background");
        background = nuclides.size();
      }
      nuclides.push_back(std::move(nuc));
    }
    if (!background) throw UsageError("library has no background entry");
    const double cut = threshold ? *threshold : get_or(j, "min_branching_ratio", kDefaultLineThreshold);
    return NuclideLibrary(std::move(nuclides), *background).with_line_threshold(cut);
  } catch (const json::exception& e) {
    throw UsageError(std::string("malformed library JSON: ") + e.what());
  }
}

NuclideLibrary load_library(const std::filesystem::path& path, std::optional<double> threshold) {
  json j;
  try {
    j = json::parse(read_file(path));
  } catch (const json::parse_error& e) {
    throw UsageError(path.string() + ": " + e.what());
  }
  return library_from_json(j, threshold);
}

json library_to_json(const NuclideLibrary& library) {
  json nuclides = json::array();
  for (std::size_t j = 0; j < library.size(); ++j) {
    json lines = json::array();
    for (const auto& l : library.nuclide(j).lines) {
      lines.push_back({{"energy_MeV", l.energy_mev}, {"branching_ratio", l.branching_ratio}});
    }
    json n = {{"name", library.nuclide(j).name}, {"lines", lines}};
    if (library.is_background(j)) n["background"] = true;
    nuclides.push_back(n);
  }
  return {{"nuclides", nuclides}, {"min_branching_ratio", 0.0}};
}

DetectorSpec detector_from_json(const json& j) {
  try {
    DetectorSpec s;
    s.n_channels = get_or(j, "n_channels", s.n_channels);
    s.energy_max = get_or(j, "energy_max_MeV", s.energy_max);
    s.fwhm_ref = get_or(j, "fwhm_ref_MeV", s.fwhm_ref);
    s.ref_energy = get_or(j, "ref_energy_MeV", s.ref_energy);
    s.continuum_fraction = get_or(j, "continuum_fraction", s.continuum_fraction);
    s.count_scale = get_or(j, "count_scale", s.count_scale);
    if (j.contains("background")) {
      const auto& b = j.at("background");
      s.background.continuum_scale_mev = get_or(b, "continuum_scale_MeV", s.background.continuum_scale_mev);
      s.background.floor_fraction = get_or(b, "floor_fraction", s.background.floor_fraction);
      s.background.peak_fraction = get_or(b, "peak_fraction", s.background.peak_fraction);
      if (b.contains("peaks")) {
        s.background.peaks.clear();
        for (const auto& p : b.at("peaks")) {
          s.background.peaks.push_back({p.at("energy_MeV").get<double>(), p.at("weight").get<double>()});
        }
      }
    }
    s.validate();
    return s;
  } catch (const json::exception& e) {
    throw UsageError(std::string("malformed detector JSON: ") + e.what());
  }
}

DetectorSpec load_detector_spec(const std::filesystem::path& path) {
  try {
    return detector_from_json(json::parse(read_file(path)));
  } catch (const json::parse_error& e) {
    throw UsageError(path.string() + ": " + e.what());
  }
}

json detector_to_json(const DetectorSpec& s) {
  json peaks = json::array();
  for (const auto& p : s.background.peaks) peaks.push_back({{"energy_MeV", p.energy_mev}, {"weight", p.branching_ratio}});
  return {{"n_channels", s.n_channels},
          {"energy_max_MeV", s.energy_max},
          {"fwhm_ref_MeV", s.fwhm_ref},
          {"ref_energy_MeV", s.ref_energy},
          {"continuum_fraction", s.continuum_fraction},
          {"count_scale", s.count_scale},
          {"background",
           {{"continuum_scale_MeV", s.background.continuum_scale_mev},
            {"floor_fraction", s.background.floor_fraction},
            {"peak_fraction", s.background.peak_fraction},
            {"peaks", peaks}}}};
}

DRFMatrix read_drf_csv(std::istream& in, const NuclideLibrary& library, const std::string& source) {
  std::string line;
  std::size_t lineno = 0;
  std::vector<std::string> header;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    header = split_csv(line);
    break;
  }
  const std::size_t K = library.n_columns();
  if (header.size() != K + 1) {
    throw UsageError(source + ":" + std::to_string(lineno) + ": expected " + std::to_string(K + 1) +
                     " columns (channel energy plus one per library line), found " + std::to_string(header.size()));
  }
  for (std::size_t k = 0; k < K; ++k) {
    const std::string& h = header[k + 1];
    const auto colon = h.rfind(':');
    const std::size_t owner = library.owner(k);
    const double expected = library.line_of_column(k).energy_mev;
    bool ok = colon != std::string::npos && h.substr(0, colon) == library.nuclide(owner).name;
    if (ok) {
      const double e = parse_double(h.substr(colon + 1), source + ": header");
      ok = std::abs(e - expected) <= 1e-9 * std::max(1.0, expected);
    }
    if (!ok) {
      throw UsageError(source + ": header column " + std::to_string(k + 2) + " is '" + h + "', expected '" +
                       library.column_label(k) + "'");
    }
  }
  std::vector<double> energies;
  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r" || line[0] == '#') continue;
    const auto cells = split_csv(line);
    const std::string where = source + ":" + std::to_string(lineno);
    if (cells.size() != K + 1) throw UsageError(where + ": expected " + std::to_string(K + 1) + " cells");
    energies.push_back(parse_double(cells[0], where));
    std::vector<double> row(K);
    for (std::size_t k = 0; k < K; ++k) row[k] = parse_double(cells[k + 1], where);
    rows.push_back(std::move(row));
  }
  const auto n = static_cast<Eigen::Index>(rows.size());
  Vector e(n);
  Matrix r(n, static_cast<Eigen::Index>(K));
  for (Eigen::Index i = 0; i < n; ++i) {
    e[i] = energies[static_cast<std::size_t>(i)];
    for (std::size_t k = 0; k < K; ++k) r(i, static_cast<Eigen::Index>(k)) = rows[static_cast<std::size_t>(i)][k];
  }
  return DRFMatrix(std::move(e), std::move(r));
}

DRFMatrix load_drf_csv(const std::filesystem::path& path, const NuclideLibrary& library) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open DRF file " + path.string());
  return read_drf_csv(in, library, path.string());
}

void write_drf_csv(std::ostream& out, const DRFMatrix& drf, const NuclideLibrary& library) {
  if (drf.n_columns() != library.n_columns()) throw UsageError("DRF does not match the library");
  out << "channel_energy_MeV";
  for (std::size_t k = 0; k < library.n_columns(); ++k) out << ',' << library.column_label(k);
  out << '\n' << std::setprecision(17);
  for (Eigen::Index i = 0; i < drf.response().rows(); ++i) {
    out << drf.channel_energies()[i];
    for (Eigen::Index k = 0; k < drf.response().cols(); ++k) out << ',' << drf.response()(i, k);
    out << '\n';
  }
}

Spectrum read_spectrum_csv(std::istream& in, const std::string& source) {
  Spectrum s;
  std::string line;
  std::size_t lineno = 0;
  bool header = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    const auto cells = split_csv(line);
    const std::string where = source + ":" + std::to_string(lineno);
    if (!header) {
      header = true;
      if (cells.size() == 2 && cells[0] == "channel" && cells[1] == "count") continue;
      throw UsageError(where + ": expected header 'channel,count'");
    }
    if (cells.size() != 2) throw UsageError(where + ": expected 'channel,count', got '" + line + "'");
    const auto channel = parse_count(cells[0], where);
    if (channel != static_cast<std::int64_t>(s.counts.size()) + 1) {
      throw UsageError(where + ": channel " + cells[0] + " out of sequence (expected " +
                       std::to_string(s.counts.size() + 1) + ")");
    }
    s.counts.push_back(parse_count(cells[1], where));
  }
  if (s.counts.empty()) throw UsageError(source + ": spectrum has no channels");
  return s;
}

Spectrum load_spectrum_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open spectrum file " + path.string());
  return read_spectrum_csv(in, path.string());
}

void write_spectrum_csv(std::ostream& out, const Spectrum& spectrum) {
  out << "channel,count\n";
  for (std::size_t i = 0; i < spectrum.counts.size(); ++i) out << i + 1 << ',' << spectrum.counts[i] << '\n';
}

json to_json(const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

json to_json(const Matrix& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    std::vector<double> r(static_cast<std::size_t>(m.cols()));
    for (Eigen::Index c = 0; c < m.cols(); ++c) r[static_cast<std::size_t>(c)] = m(i, c);
    rows.push_back(r);
  }
  return rows;
}

json to_json(const ModelParams& p) {
  return {{"x_g_per_cm2", to_json(p.x)}, {"b", to_json(p.b)}, {"tau", p.tau}};
}

json to_json(const FitResult& f) {
  return {{"params", to_json(f.params)},
          {"log_likelihood", f.log_likelihood},
          {"iterations", f.iterations},
          {"converged", f.converged},
          {"criterion_value", f.criterion_value},
          {"kkt_residual", f.kkt_residual},
          {"monotone", f.monotone},
          {"polish_steps", f.polish_steps}};
}

json to_json(const TestReport& r) {
  json j = {{"method", to_string(r.kind)},
            {"statistic", r.statistic},
            {"df", r.df},
            {"p_value", r.p_value},
            {"fit", to_json(r.fit)},
            {"schur", to_json(r.schur)},
            {"warnings", r.warnings}};
  if (r.kind == TestKind::LM) j["score_x"] = to_json(r.score_x);
  if (r.null_fit) j["null_fit"] = to_json(*r.null_fit);
  return j;
}

json to_json(const A1Report& r) {
  return {{"passes", r.passes},
          {"rank", r.rank},
          {"required_rank", r.required_rank},
          {"singular_values", to_json(r.singular_values)},
          {"positive_mean", r.positive_mean},
          {"min_unit_mean", r.min_unit_mean},
          {"diagnostic", r.diagnostic}};
}

}  // namespace shieldscan
