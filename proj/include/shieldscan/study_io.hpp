#pragma once

// JSON and CSV forms of study configurations and results.

#include <iosfwd>

#include "shieldscan/io.hpp"
#include "shieldscan/montecarlo.hpp"

namespace shieldscan {

/// Study config JSON. Required: grid_x_g_per_cm2 (list of thickness lists,
/// one entry per true material) and presumed (list of material lists).
/// Optional: name, b, tau, true_materials, replicates, level, seed,
/// drf_error_sd, perturb_background, method, threads, keep_samples, note.
/// Unknown keys are rejected.
StudyConfig study_config_from_json(const json& j);
json study_config_to_json(const StudyConfig& config);

/// Per-test, per-grid-point summary; samples are included when kept.
json study_result_to_json(const StudyResult& result);

/// "a+b" label of a presumed material set.
std::string test_label(const std::vector<std::string>& materials);

/// Columns: grid_index, x_<material>_g_per_cm2..., test, rejections,
/// replicates, failures, rate, se, mean_statistic and, for sensitivity
/// studies, corrected_rate.
void write_study_csv(std::ostream& out, const StudyResult& result);

}  // namespace shieldscan
