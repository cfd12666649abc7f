#pragma once

#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "hdspc/io.hpp"
#include "hdspc/simulation.hpp"

namespace hdspc {

// Declarative experiment files: "key = value" lines, '#' comments, lists
// comma separated. The mandatory key `experiment` selects the driver:
//
//   experiment = type1      p, nu (lists), kind, alpha, reps, steps, gamma,
//                           variance_mode, seed, workers
//   experiment = arl        scenario, p, blocks, rho, shift_fraction,
//                           wishart_extra_df, scenario_seed, methods, deltas,
//                           target_arl, reps, calibration_reps, change_time,
//                           max_rl_factor, gamma, nu, variance_mode, cpv,
//                           pca_calibration_draws, seed, workers
//   experiment = diagnosis  scenario, p, blocks, rho, wishart_extra_df,
//                           scenario_seed, methods, shift_fractions, deltas,
//                           reps, samples, path_points, decades, bic, refit,
//                           solver, seed, workers
//
// Unknown keys are rejected so typos do not silently fall back to defaults.
struct ExperimentPlan {
    std::string kind;
    std::vector<Type1Config> type1; // one per p
    std::optional<ArlConfig> arl;
    std::optional<DiagnosisConfig> diagnosis;
};

ExperimentPlan parse_experiment(const KeyValues& kv);

struct ExperimentOutput {
    std::string csv;
    nlohmann::json json;
};

ExperimentOutput run_experiment(const ExperimentPlan& plan);

} // namespace hdspc
