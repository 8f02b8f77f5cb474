// shieldscan: command-line front end for shielding tests and studies.
//
// JSON goes to stdout, human-readable summaries to stderr. Exit status is 0
// on success, 1 when a statistical procedure fails (non-convergence,
// unidentifiable model) and 2 for usage or input errors.

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"

#include "shieldscan/attenuation.hpp"
#include "shieldscan/drf_synth.hpp"
#include "shieldscan/errors.hpp"
#include "shieldscan/estimation.hpp"
#include "shieldscan/inference.hpp"
#include "shieldscan/io.hpp"
#include "shieldscan/manifest.hpp"
#include "shieldscan/montecarlo.hpp"
#include "shieldscan/presets.hpp"
#include "shieldscan/study_io.hpp"

using namespace shieldscan;

namespace {

struct ModelArgs {
  std::string library;
  std::string drf;
  std::string detector;
  std::string materials;
  std::vector<double> b{1.0, 0.15, 1.0};
  double tau = 1.0;
};

struct Loaded {
  NuclideLibrary library;
  DRFMatrix drf;
};

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

Vector to_vector(const std::vector<double>& v) {
  return Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
}

std::string library_path(const ModelArgs& a) {
  return a.library.empty() ? (data_directory() / "library" / "i131_pu239.json").string() : a.library;
}

std::string detector_path(const ModelArgs& a) {
  return a.detector.empty() ? (data_directory() / "detector" / "nai3x3.json").string() : a.detector;
}

Loaded load(const ModelArgs& a, RunManifest& manifest) {
  const std::string lib_path = library_path(a);
  NuclideLibrary lib = load_library(lib_path);
  manifest.add_input(lib_path);
  if (!a.drf.empty()) {
    manifest.add_input(a.drf);
    DRFMatrix drf = load_drf_csv(a.drf, lib);
    return {std::move(lib), std::move(drf)};
  }
  const std::string det_path = detector_path(a);
  manifest.add_input(det_path);
  DRFMatrix drf = synthesize_drf(load_detector_spec(det_path), lib);
  return {std::move(lib), std::move(drf)};
}

AttenuationMatrix attenuation(const NuclideLibrary& lib, const std::vector<std::string>& names) {
  std::vector<Material> mats;
  for (const auto& n : names) mats.push_back(resolve_material(n));
  return build_attenuation_matrix(lib, mats);
}

void add_model_options(CLI::App* cmd, ModelArgs& a, bool materials_required) {
  cmd->add_option("--library", a.library, "nuclide library JSON (default: shipped I-131/Pu-239 library)");
  cmd->add_option("--drf", a.drf, "DRF CSV; if absent the DRF is synthesized from --detector");
  cmd->add_option("--detector", a.detector, "detector spec JSON used when --drf is absent");
  auto* m = cmd->add_option("--materials", a.materials, "comma-separated presumed materials (name or name=path)");
  if (materials_required) m->required();
  cmd->add_option("--b", a.b, "nuclide intensities in library order")->delimiter(',');
  cmd->add_option("--tau", a.tau, "detection time")->check(CLI::PositiveNumber);
}

void emit(const json& j) { std::cout << j.dump(2) << '\n'; }

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw UsageError("cannot write " + path);
  out << text;
}

std::uint64_t g_threads = 0;

// --- subcommands -----------------------------------------------------------

int cmd_drf_synth(const std::string& spec_path, const std::string& lib, const std::string& out) {
  RunManifest manifest;
  manifest.subcommand = "drf synth";
  manifest.timestamp = utc_timestamp();
  ModelArgs a;
  a.library = lib;
  a.detector = spec_path;
  const Loaded l = load(a, manifest);
  std::ostringstream csv;
  write_drf_csv(csv, l.drf, l.library);
  if (out.empty()) {
    std::cout << csv.str();
  } else {
    write_text(out, csv.str());
    emit({{"manifest", manifest.to_json()}, {"out", out}, {"columns", l.drf.n_columns()},
          {"channels", l.drf.n_channels()}});
  }
  std::cerr << "DRF: " << l.drf.n_channels() << " channels x " << l.drf.n_columns() << " lines\n";
  return 0;
}

int cmd_materials_list() {
  json arr = json::array();
  for (const auto& n : builtin_material_names()) {
    const Material m = resolve_material(n);
    json e{{"name", n}, {"tabulated", !m.is_artificial()}};
    if (!m.is_artificial()) {
      e["min_energy_MeV"] = m.min_energy();
      e["max_energy_MeV"] = m.max_energy();
    }
    arr.push_back(e);
  }
  emit(arr);
  return 0;
}

int cmd_materials_corr(const std::string& names, double emin, double emax, std::size_t points) {
  if (points < 2 || !(emin > 0.0 && emax > emin)) throw UsageError("need points >= 2 and 0 < emin < emax");
  std::vector<std::string> list = names.empty() ? builtin_material_names() : split_list(names);
  std::vector<Material> mats;
  for (const auto& n : list) mats.push_back(resolve_material(n));
  std::vector<double> grid;
  for (std::size_t i = 0; i < points; ++i) {
    grid.push_back(emin * std::pow(emax / emin, static_cast<double>(i) / static_cast<double>(points - 1)));
  }
  const Matrix corr = collinearity_report(mats, grid);
  emit({{"materials", list}, {"energy_grid_MeV", grid}, {"correlation", to_json(corr)}});
  std::cerr << "correlation of attenuation functions on " << points << " log-spaced energies in [" << emin << ", "
            << emax << "] MeV\n";
  for (std::size_t i = 0; i < list.size(); ++i) {
    std::cerr << "  " << list[i];
    for (std::size_t k = 0; k < list.size(); ++k) {
      char buf[16];
      std::snprintf(buf, sizeof buf, " %7.3f", corr(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)));
      std::cerr << buf;
    }
    std::cerr << '\n';
  }
  return 0;
}

int cmd_simulate(const ModelArgs& a, const std::vector<double>& x, std::uint64_t seed, const std::string& out) {
  RunManifest manifest;
  manifest.subcommand = "simulate";
  manifest.timestamp = utc_timestamp();
  manifest.seed = seed;
  const Loaded l = load(a, manifest);
  const auto names = split_list(a.materials);
  if (x.size() != names.size()) throw UsageError("--x needs one thickness per material in --materials");
  const ShieldingModel model(l.library, l.drf, attenuation(l.library, names));
  const ModelParams p{to_vector(x), to_vector(a.b), a.tau};
  p.validate();
  const Spectrum y = simulate_spectrum(model, p, seed);
  std::ostringstream csv;
  write_spectrum_csv(csv, y);
  manifest.config = {{"materials", names}, {"x_g_per_cm2", x}, {"b", a.b}, {"tau", a.tau}};
  if (out.empty()) {
    std::cout << csv.str();
  } else {
    write_text(out, csv.str());
    emit({{"manifest", manifest.to_json()}, {"out", out}, {"total_counts", y.total()}});
  }
  std::cerr << "simulated " << y.size() << " channels, " << y.total() << " counts\n";
  return 0;
}

int cmd_fit(const ModelArgs& a, const std::string& spectrum_path, bool full) {
  RunManifest manifest;
  manifest.subcommand = full ? "fit --full" : "fit --null";
  manifest.timestamp = utc_timestamp();
  const Loaded l = load(a, manifest);
  manifest.add_input(spectrum_path);
  const Spectrum y = load_spectrum_csv(spectrum_path);
  const auto names = split_list(a.materials);
  const ShieldingModel model(l.library, l.drf, attenuation(l.library, names));
  FitResult fit = fit_null_em(model, y, a.tau);
  if (full && fit.converged) fit = fit_full(model, y, fit.params);
  manifest.config = {{"materials", names}, {"tau", a.tau}, {"full", full}};
  emit({{"manifest", manifest.to_json()}, {"fit", to_json(fit)}});
  std::cerr << (full ? "full" : "null") << " fit: " << (fit.converged ? "converged" : "NOT converged") << " after "
            << fit.iterations << " iterations, log L = " << fit.log_likelihood << '\n';
  return fit.converged ? 0 : 1;
}

int cmd_test(const ModelArgs& a, const std::string& spectrum_path, const std::string& method) {
  RunManifest manifest;
  manifest.subcommand = "test";
  manifest.timestamp = utc_timestamp();
  const Loaded l = load(a, manifest);
  manifest.add_input(spectrum_path);
  const Spectrum y = load_spectrum_csv(spectrum_path);
  const auto names = split_list(a.materials);
  const ShieldingModel model(l.library, l.drf, attenuation(l.library, names));
  const TestKind kind = parse_test_kind(method);
  const TestReport rep = run_test(kind, model, y, a.tau);
  manifest.config = {{"materials", names}, {"tau", a.tau}, {"method", to_string(kind)}};
  emit({{"manifest", manifest.to_json()}, {"report", to_json(rep)}});
  std::cerr << to_string(kind) << " test for shielding by " << a.materials << ": statistic " << rep.statistic
            << " on " << rep.df << " df, p = " << rep.p_value << '\n';
  for (const auto& w : rep.warnings) std::cerr << "warning: " << w << '\n';
  return 0;
}

int cmd_a1check(const ModelArgs& a) {
  RunManifest manifest;
  manifest.subcommand = "a1check";
  manifest.timestamp = utc_timestamp();
  const Loaded l = load(a, manifest);
  const auto names = split_list(a.materials);
  const ShieldingModel model(l.library, l.drf, attenuation(l.library, names));
  const A1Report rep = check_a1(model, ModelParams::unshielded(to_vector(a.b), names.size(), a.tau));
  json out{{"manifest", manifest.to_json()}, {"a1", to_json(rep)}};
  if (rep.passes) {
    const FisherBlocks fb = fisher_blocks(model, ModelParams::unshielded(to_vector(a.b), names.size(), a.tau));
    const Conditioning c = condition_number(fb.schur);
    out["schur"] = to_json(fb.schur);
    out["condition_number"] = c.value;
    if (!c.diagnostic.empty()) out["conditioning"] = c.diagnostic;
  }
  emit(out);
  std::cerr << "identifiability: " << (rep.passes ? "ok" : "FAILS") << " (" << rep.diagnostic << ")\n";
  return rep.passes ? 0 : 1;
}

StudyInputs study_inputs(const ModelArgs& a, RunManifest& manifest) {
  Loaded l = load(a, manifest);
  return StudyInputs{std::move(l.library), std::move(l.drf)};
}

int cmd_study(const ModelArgs& a, const std::string& config_path, const std::string& preset,
              const std::string& x50_path, const std::string& out, std::size_t replicates, std::int64_t seed) {
  if (config_path.empty() == preset.empty()) throw UsageError("give exactly one of --config or --preset");
  RunManifest manifest;
  manifest.subcommand = "study";
  manifest.timestamp = utc_timestamp();
  StudyConfig cfg;
  if (!config_path.empty()) {
    manifest.add_input(config_path);
    cfg = study_config_from_json(json::parse(read_file(config_path)));
  } else {
    const std::string table = x50_path.empty() ? default_x50_path().string() : x50_path;
    X50Table x50;
    if (std::filesystem::exists(table)) {
      manifest.add_input(table);
      x50 = load_x50_table(table);
    }
    cfg = make_preset(preset, x50);
  }
  if (replicates > 0) cfg.replicates = replicates;
  if (seed >= 0) cfg.seed = static_cast<std::uint64_t>(seed);
  cfg.threads = resolve_threads(g_threads);
  const StudyInputs inputs = study_inputs(a, manifest);
  manifest.seed = cfg.seed;
  manifest.config = study_config_to_json(cfg);

  bool null_only = true;
  for (const auto& x : cfg.grid) null_only = null_only && (x.size() == 0 || (x.array() == 0.0).all());
  StudyResult result;
  if (cfg.drf_error_sd > 0.0) {
    result = run_sensitivity_study(inputs, cfg);
  } else if (null_only) {
    result = run_size_study(inputs, cfg);
  } else {
    result = run_study(inputs, cfg);
  }

  json sidecar = study_result_to_json(result);
  sidecar["manifest"] = manifest.to_json();
  if (!out.empty()) {
    std::ostringstream csv;
    write_study_csv(csv, result);
    write_text(out, csv.str());
    write_text(out + ".json", sidecar.dump(2) + "\n");
  }
  emit(sidecar);
  std::cerr << "study " << cfg.name << ": " << cfg.replicates << " replicates x " << cfg.grid.size()
            << " grid points in " << result.seconds << " s\n";
  for (std::size_t t = 0; t < result.cells.size(); ++t) {
    std::cerr << "  " << test_label(cfg.presumed[t]) << ":";
    for (const auto& c : result.cells[t]) std::cerr << ' ' << c.rate;
    if (!result.corrected_cutoff.empty()) std::cerr << "  (corrected cutoff " << result.corrected_cutoff[t] << ')';
    std::cerr << '\n';
  }
  return 0;
}

int cmd_x50(const ModelArgs& a, const std::string& materials, std::size_t replicates, std::uint64_t seed,
            const std::string& write_path) {
  RunManifest manifest;
  manifest.subcommand = "x50";
  manifest.timestamp = utc_timestamp();
  manifest.seed = seed;
  const StudyInputs inputs = study_inputs(a, manifest);
  const auto names = materials.empty() ? std::vector<std::string>{"carbon", "concrete", "lead", "water", "artificial"}
                                       : split_list(materials);
  json table = json::object();
  json detail = json::object();
  bool all_ok = true;
  for (const auto& m : names) {
    const X50Result r = find_x50(inputs, m, to_vector(a.b), a.tau, replicates, 0.05, seed, resolve_threads(g_threads));
    table[m] = r.x;
    detail[m] = {{"x_g_per_cm2", r.x}, {"power", r.power}, {"steps", r.steps}, {"converged", r.converged}};
    all_ok = all_ok && r.converged;
    std::cerr << "x50 " << m << ": " << r.x << " g/cm^2 (power " << r.power << ", " << r.steps << " steps)\n";
  }
  manifest.config = {{"materials", names}, {"replicates", replicates}, {"b", a.b}, {"tau", a.tau}, {"level", 0.05}};
  json out{{"x50_g_per_cm2", table}, {"search", detail}, {"manifest", manifest.to_json()}};
  if (!write_path.empty()) write_text(write_path, out.dump(2) + "\n");
  emit(out);
  return all_ok ? 0 : 1;
}

int cmd_presets_list() {
  const X50Table x50 = default_x50_table();
  json arr = json::array();
  for (const auto& n : preset_names()) {
    json e{{"name", n}};
    try {
      e["config"] = study_config_to_json(make_preset(n, x50));
    } catch (const UsageError& err) {
      e["unavailable"] = err.what();
    }
    arr.push_back(e);
  }
  emit(arr);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Score tests for gamma-ray shielding in Poisson spectra"};
  app.require_subcommand(1);
  app.fallthrough();
  app.set_version_flag("--version", std::string(kVersion));
  app.add_option("--threads", g_threads, "worker threads for studies (overrides SHIELDSCAN_THREADS)");

  int code = 0;
  std::function<int()> action;

  // drf synth
  auto* drf = app.add_subcommand("drf", "detector response functions");
  drf->require_subcommand(1);
  auto* synth = drf->add_subcommand("synth", "synthesize a DRF CSV from a detector spec");
  std::string synth_spec, synth_lib, synth_out;
  synth->add_option("--spec", synth_spec, "detector spec JSON");
  synth->add_option("--library", synth_lib, "nuclide library JSON");
  synth->add_option("--out", synth_out, "output CSV (default stdout)");
  synth->callback([&] { action = [&] { return cmd_drf_synth(synth_spec, synth_lib, synth_out); }; });

  // materials
  auto* materials = app.add_subcommand("materials", "attenuation tables");
  materials->require_subcommand(1);
  auto* mlist = materials->add_subcommand("list", "list builtin materials");
  mlist->callback([&] { action = [&] { return cmd_materials_list(); }; });
  auto* mcorr = materials->add_subcommand("corr", "pairwise correlation of attenuation functions");
  std::string corr_names;
  double corr_emin = 0.05, corr_emax = 3.0;
  std::size_t corr_points = 60;
  mcorr->add_option("--materials", corr_names, "comma-separated materials (default: all builtin)");
  mcorr->add_option("--emin", corr_emin, "lowest energy, MeV");
  mcorr->add_option("--emax", corr_emax, "highest energy, MeV");
  mcorr->add_option("--points", corr_points, "number of log-spaced energies");
  mcorr->callback([&] { action = [&] { return cmd_materials_corr(corr_names, corr_emin, corr_emax, corr_points); }; });

  // simulate
  auto* sim = app.add_subcommand("simulate", "draw a Poisson spectrum from the model");
  ModelArgs sim_args;
  std::vector<double> sim_x;
  std::uint64_t sim_seed = 1;
  std::string sim_out;
  add_model_options(sim, sim_args, false);
  sim->add_option("--x", sim_x, "mass thickness per material, g/cm^2")->delimiter(',');
  sim->add_option("--seed", sim_seed, "random seed");
  sim->add_option("--out", sim_out, "output spectrum CSV (default stdout)");
  sim->callback([&] { action = [&] { return cmd_simulate(sim_args, sim_x, sim_seed, sim_out); }; });

  // fit
  auto* fit = app.add_subcommand("fit", "maximum likelihood fit");
  ModelArgs fit_args;
  std::string fit_spectrum;
  bool fit_null = false, fit_fullflag = false;
  add_model_options(fit, fit_args, false);
  fit->add_option("--spectrum", fit_spectrum, "spectrum CSV")->required();
  auto* fn = fit->add_flag("--null", fit_null, "constrained fit with x = 0 (EM)");
  auto* ff = fit->add_flag("--full", fit_fullflag, "fit x and b");
  fn->excludes(ff);
  fit->callback([&] {
    if (!fit_null && !fit_fullflag) throw CLI::ValidationError("fit", "give --null or --full");
    action = [&] { return cmd_fit(fit_args, fit_spectrum, fit_fullflag); };
  });

  // test
  auto* test = app.add_subcommand("test", "test for shielding");
  ModelArgs test_args;
  std::string test_spectrum, test_method = "lm";
  add_model_options(test, test_args, true);
  test->add_option("--spectrum", test_spectrum, "spectrum CSV")->required();
  test->add_option("--method", test_method, "lm|wald|lr");
  test->callback([&] { action = [&] { return cmd_test(test_args, test_spectrum, test_method); }; });

  // study
  auto* study = app.add_subcommand("study", "Monte Carlo size/power/sensitivity study");
  ModelArgs study_args;
  std::string study_config, study_preset, study_x50, study_out;
  std::size_t study_reps = 0;
  std::int64_t study_seed = -1;
  study->add_option("--library", study_args.library, "nuclide library JSON");
  study->add_option("--drf", study_args.drf, "DRF CSV");
  study->add_option("--detector", study_args.detector, "detector spec JSON");
  study->add_option("--config", study_config, "study config JSON");
  study->add_option("--preset", study_preset, "named preset (see `presets list`)");
  study->add_option("--x50", study_x50, "x50 table for composite presets");
  study->add_option("--out", study_out, "result CSV; a JSON sidecar is written next to it");
  study->add_option("--replicates", study_reps, "override the replicate count");
  study->add_option("--seed", study_seed, "override the master seed");
  study->callback([&] {
    action = [&] {
      return cmd_study(study_args, study_config, study_preset, study_x50, study_out, study_reps, study_seed);
    };
  });

  // a1check
  auto* a1 = app.add_subcommand("a1check", "check identifiability of the presumed model");
  ModelArgs a1_args;
  add_model_options(a1, a1_args, true);
  a1->callback([&] { action = [&] { return cmd_a1check(a1_args); }; });

  // x50
  auto* x50 = app.add_subcommand("x50", "thickness giving about 50% LM power, per material");
  ModelArgs x50_args;
  std::string x50_materials, x50_write;
  std::size_t x50_reps = 2000;
  std::uint64_t x50_seed = 50;
  x50->add_option("--library", x50_args.library, "nuclide library JSON");
  x50->add_option("--drf", x50_args.drf, "DRF CSV");
  x50->add_option("--detector", x50_args.detector, "detector spec JSON");
  x50->add_option("--material", x50_materials, "comma-separated materials (default: all used by presets)");
  x50->add_option("--replicates", x50_reps, "replicates per power evaluation");
  x50->add_option("--seed", x50_seed, "master seed");
  x50->add_option("--write", x50_write, "write the table as JSON (e.g. data/presets/x50.json)");
  x50->callback([&] { action = [&] { return cmd_x50(x50_args, x50_materials, x50_reps, x50_seed, x50_write); }; });

  // presets
  auto* presets = app.add_subcommand("presets", "study presets");
  presets->require_subcommand(1);
  auto* plist = presets->add_subcommand("list", "list presets with their configs");
  plist->callback([&] { action = [&] { return cmd_presets_list(); }; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    code = action ? action() : 2;
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const RangeError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const json::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const ConvergenceError& e) {
    std::cerr << "statistical failure: " << e.what() << '\n';
    return 1;
  } catch (const IdentifiabilityError& e) {
    std::cerr << "statistical failure: " << e.what() << '\n';
    return 1;
  } catch (const EvaluationError& e) {
    std::cerr << "statistical failure: " << e.what() << '\n';
    return 1;
  }
  return code;
}
