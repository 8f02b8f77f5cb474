#include "shieldscan/attenuation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <sstream>

#include "shieldscan/errors.hpp"

#ifndef SHIELDSCAN_DATA_DIR
#define SHIELDSCAN_DATA_DIR "data"
#endif

namespace shieldscan {

namespace {

// Shape-preserving derivative estimates (Fritsch-Butland interior, three
// point one-sided ends clipped to keep monotonicity).
std::vector<double> monotone_slopes(const std::vector<double>& x, const std::vector<double>& y) {
  const std::size_t n = x.size();
  std::vector<double> d(n, 0.0);
  if (n == 2) {
    d[0] = d[1] = (y[1] - y[0]) / (x[1] - x[0]);
    return d;
  }
  std::vector<double> h(n - 1), delta(n - 1);
  for (std::size_t k = 0; k + 1 < n; ++k) {
    h[k] = x[k + 1] - x[k];
    delta[k] = (y[k + 1] - y[k]) / h[k];
  }
  for (std::size_t k = 1; k + 1 < n; ++k) {
    if (delta[k - 1] * delta[k] <= 0.0) {
      d[k] = 0.0;
    } else {
      const double w1 = 2.0 * h[k] + h[k - 1];
      const double w2 = h[k] + 2.0 * h[k - 1];
      d[k] = (w1 + w2) / (w1 / delta[k - 1] + w2 / delta[k]);
    }
  }
  auto end_slope = [](double h0, double h1, double d0, double d1) {
    double s = ((2.0 * h0 + h1) * d0 - h0 * d1) / (h0 + h1);
    if (s * d0 <= 0.0) return 0.0;
    if (d0 * d1 <= 0.0 && std::abs(s) > std::abs(3.0 * d0)) return 3.0 * d0;
    return s;
  };
  d[0] = end_slope(h[0], h[1], delta[0], delta[1]);
  d[n - 1] = end_slope(h[n - 2], h[n - 3], delta[n - 2], delta[n - 3]);
  return d;
}

std::string format_energy(double e) {
  std::ostringstream os;
  os.precision(6);
  os << e << " MeV";
  return os.str();
}

}  // namespace

Material Material::from_table(MaterialTable table) {
  if (table.grid.size() < 2) {
    throw UsageError("material table '" + table.name + "' needs at least two rows");
  }
  Material m;
  m.name_ = table.name;
  Segment current;
  double prev_e = -1.0;
  for (const auto& [e, c] : table.grid) {
    if (!(e > 0.0) || !(c > 0.0) || !std::isfinite(e) || !std::isfinite(c)) {
      throw UsageError("material table '" + table.name + "' has a non-positive energy or coefficient");
    }
    if (e < prev_e) throw UsageError("material table '" + table.name + "' energies are not sorted");
    if (e == prev_e) {
      // absorption edge: close the current segment and start a new one
      if (current.log_e.size() < 2) {
        throw UsageError("material table '" + table.name + "' has adjacent absorption edges");
      }
      m.segments_.push_back(std::move(current));
      current = Segment{};
    }
    current.log_e.push_back(std::log(e));
    current.log_c.push_back(std::log(c));
    current.value.push_back(c);
    prev_e = e;
  }
  if (current.log_e.size() < 2) {
    throw UsageError("material table '" + table.name + "' ends on an absorption edge");
  }
  m.segments_.push_back(std::move(current));
  for (auto& s : m.segments_) s.slope = monotone_slopes(s.log_e, s.log_c);
  m.table_ = std::move(table);
  return m;
}

Material Material::artificial(double units_per_mev) {
  if (!(units_per_mev > 0.0) || !std::isfinite(units_per_mev)) throw UsageError("energy unit scale must be positive");
  Material m;
  m.name_ = units_per_mev == 1.0 ? "artificial-mev" : "artificial";
  m.units_per_mev_ = units_per_mev;
  return m;
}

double Material::min_energy() const { return table_ ? table_->grid.front().first : 0.0; }

double Material::max_energy() const {
  return table_ ? table_->grid.back().first : std::numeric_limits<double>::infinity();
}

double Material::coefficient(double energy_mev) const {
  if (!table_) {
    if (!(energy_mev >= 0.0)) throw RangeError("artificial material needs a nonnegative energy");
    return artificial_material(energy_mev * units_per_mev_);
  }
  if (!(energy_mev >= min_energy() && energy_mev <= max_energy())) {
    throw RangeError("energy " + format_energy(energy_mev) + " is outside the table for '" + name_ + "' [" +
                     format_energy(min_energy()) + ", " + format_energy(max_energy()) + "]");
  }
  const double u = std::log(energy_mev);
  // At an edge energy the higher-energy segment wins.
  const Segment* seg = &segments_.front();
  for (auto it = segments_.rbegin(); it != segments_.rend(); ++it) {
    if (u >= it->log_e.front()) {
      seg = &*it;
      break;
    }
  }
  const auto& xs = seg->log_e;
  std::size_t k = static_cast<std::size_t>(std::upper_bound(xs.begin(), xs.end(), u) - xs.begin());
  if (k == 0) k = 1;
  if (k >= xs.size()) k = xs.size() - 1;
  const std::size_t lo = k - 1;
  // Exact at knots regardless of floating-point noise in the Hermite form.
  if (u == xs[lo]) return seg->value[lo];
  if (u == xs[k]) return seg->value[k];

  const double h = xs[k] - xs[lo];
  const double t = (u - xs[lo]) / h;
  const double t2 = t * t;
  const double t3 = t2 * t;
  const double h00 = 2 * t3 - 3 * t2 + 1;
  const double h10 = t3 - 2 * t2 + t;
  const double h01 = -2 * t3 + 3 * t2;
  const double h11 = t3 - t2;
  const double v = h00 * seg->log_c[lo] + h10 * h * seg->slope[lo] + h01 * seg->log_c[k] + h11 * h * seg->slope[k];
  return std::exp(v);
}

double interpolate_coefficient(const Material& material, double energy_mev) {
  return material.coefficient(energy_mev);
}

double artificial_material(double en) { return std::exp(std::sin(en)); }

AttenuationMatrix build_attenuation_matrix(const NuclideLibrary& library, const std::vector<Material>& materials) {
  const auto K = static_cast<Eigen::Index>(library.n_columns());
  const auto M = static_cast<Eigen::Index>(materials.size());
  Matrix c = Matrix::Zero(K, M);
  std::vector<std::string> names;
  for (const auto& m : materials) names.push_back(m.name());
  for (Eigen::Index k = 0; k < K; ++k) {
    const std::size_t j = library.owner(static_cast<std::size_t>(k));
    if (library.is_background(j)) continue;
    const EmissionLine& line = library.line_of_column(static_cast<std::size_t>(k));
    for (Eigen::Index m = 0; m < M; ++m) {
      try {
        c(k, m) = materials[static_cast<std::size_t>(m)].coefficient(line.energy_mev);
      } catch (const RangeError& e) {
        throw RangeError("line " + library.column_label(static_cast<std::size_t>(k)) + " of nuclide '" +
                         library.nuclide(j).name + "', material '" + materials[static_cast<std::size_t>(m)].name() +
                         "': " + e.what());
      }
    }
  }
  return AttenuationMatrix(std::move(c), std::move(names));
}

Matrix collinearity_report(const std::vector<Material>& materials, const std::vector<double>& energy_grid) {
  if (materials.size() < 2) throw UsageError("collinearity report needs at least two materials");
  if (energy_grid.size() < 2) throw UsageError("collinearity report needs at least two energies");
  const auto M = static_cast<Eigen::Index>(materials.size());
  const auto G = static_cast<Eigen::Index>(energy_grid.size());
  Matrix samples(G, M);
  for (Eigen::Index m = 0; m < M; ++m) {
    for (Eigen::Index g = 0; g < G; ++g) {
      samples(g, m) = materials[static_cast<std::size_t>(m)].coefficient(energy_grid[static_cast<std::size_t>(g)]);
    }
  }
  const Eigen::RowVectorXd mean = samples.colwise().mean();
  samples.rowwise() -= mean;
  const Matrix cov = samples.transpose() * samples;
  Matrix corr(M, M);
  for (Eigen::Index a = 0; a < M; ++a) {
    for (Eigen::Index b = 0; b < M; ++b) {
      const double denom = std::sqrt(cov(a, a) * cov(b, b));
      corr(a, b) = a == b ? 1.0 : (denom > 0.0 ? std::clamp(cov(a, b) / denom, -1.0, 1.0) : 0.0);
    }
  }
  return corr;
}

MaterialTable load_material_table(const std::filesystem::path& path, std::string name) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open material table " + path.string());
  MaterialTable table{std::move(name), {}};
  std::string line;
  std::size_t lineno = 0;
  bool header_seen = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) {
      throw UsageError(path.string() + ":" + std::to_string(lineno) + ": expected two comma-separated columns");
    }
    char* end = nullptr;
    const std::string a = line.substr(0, comma);
    const std::string b = line.substr(comma + 1);
    const double e = std::strtod(a.c_str(), &end);
    const bool first_ok = end != a.c_str();
    if (!first_ok && !header_seen && table.grid.empty()) {
      header_seen = true;
      continue;
    }
    char* end2 = nullptr;
    const double c = std::strtod(b.c_str(), &end2);
    if (!first_ok || end2 == b.c_str()) {
      throw UsageError(path.string() + ":" + std::to_string(lineno) + ": malformed row '" + line + "'");
    }
    table.grid.emplace_back(e, c);
  }
  return table;
}

const std::vector<std::string>& builtin_material_names() {
  static const std::vector<std::string> names{"carbon", "concrete", "lead", "water", "artificial", "artificial-mev"};
  return names;
}

std::filesystem::path data_directory() {
  if (const char* env = std::getenv("SHIELDSCAN_DATA_DIR"); env != nullptr && *env != '\0') return env;
  return SHIELDSCAN_DATA_DIR;
}

Material resolve_material(const std::string& spec) {
  if (const auto eq = spec.find('='); eq != std::string::npos) {
    return Material::from_table(load_material_table(spec.substr(eq + 1), spec.substr(0, eq)));
  }
  if (spec == "artificial") return Material::artificial(1000.0);
  if (spec == "artificial-mev") return Material::artificial(1.0);
  const auto& names = builtin_material_names();
  if (std::find(names.begin(), names.end(), spec) == names.end()) {
    throw UsageError("unknown material '" + spec + "' (expected carbon|concrete|lead|water|artificial|artificial-mev or name=path)");
  }
  return Material::from_table(load_material_table(data_directory() / "materials" / (spec + ".csv"), spec));
}

}  // namespace shieldscan
