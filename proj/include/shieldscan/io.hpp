#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>

#include "json.hpp"

#include "shieldscan/drf_synth.hpp"
#include "shieldscan/inference.hpp"
#include "shieldscan/model.hpp"

namespace shieldscan {

using json = nlohmann::json;

/// Library JSON:
///   {"min_branching_ratio": 0.005,
///    "nuclides": [{"name": "I-131", "lines": [{"energy_MeV": .., "branching_ratio": ..}]},
///                 {"name": "background", "background": true, "lines": [...]}]}
/// The threshold (`threshold`, else the file value, else the default) is
/// applied to every non-background nuclide.
NuclideLibrary library_from_json(const json& j, std::optional<double> threshold = std::nullopt);
NuclideLibrary load_library(const std::filesystem::path& path, std::optional<double> threshold = std::nullopt);
json library_to_json(const NuclideLibrary& library);

DetectorSpec detector_from_json(const json& j);
DetectorSpec load_detector_spec(const std::filesystem::path& path);
json detector_to_json(const DetectorSpec& spec);

/// DRF CSV: header "channel_energy_MeV,<nuclide>:<line energy MeV>,..." and
/// one row per channel. Columns must follow the library's line order.
DRFMatrix read_drf_csv(std::istream& in, const NuclideLibrary& library, const std::string& source = "<drf>");
DRFMatrix load_drf_csv(const std::filesystem::path& path, const NuclideLibrary& library);
void write_drf_csv(std::ostream& out, const DRFMatrix& drf, const NuclideLibrary& library);

/// Spectrum CSV: header "channel,count", channels numbered 1..N in order.
Spectrum read_spectrum_csv(std::istream& in, const std::string& source = "<spectrum>");
Spectrum load_spectrum_csv(const std::filesystem::path& path);
void write_spectrum_csv(std::ostream& out, const Spectrum& spectrum);

json to_json(const Vector& v);
json to_json(const Matrix& m);
json to_json(const ModelParams& params);
json to_json(const FitResult& fit);
json to_json(const TestReport& report);
json to_json(const A1Report& report);

std::string read_file(const std::filesystem::path& path);

}  // namespace shieldscan
