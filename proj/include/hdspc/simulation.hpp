#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "hdspc/diagnosis.hpp"
#include "hdspc/monitoring.hpp"
#include "hdspc/pca_chart.hpp"
#include "hdspc/rng.hpp"
#include "hdspc/types.hpp"

namespace hdspc {

enum class ScenarioKind { random_wishart, block_diagonal, ar1 };

struct ScenarioSpec {
    ScenarioKind kind = ScenarioKind::random_wishart;
    Index p = 100;
    Index blocks = 12;          // block_diagonal only
    double rho = 0.5;           // ar1 only
    double shift_fraction = 0.2;
    double delta = 1.0;         // in units of the (unit) marginal standard deviation
    Index wishart_extra_df = 2; // Wishart degrees of freedom = block size + extra
    std::uint64_t seed = 1;
};

void validate(const ScenarioSpec& spec);

/// Half-open [begin, end) ranges of the covariance blocks: floor(p / K)
/// variables each, the remainder going to the last block.
std::vector<std::pair<Index, Index>> block_ranges(Index p, Index blocks);

/// Unit-diagonal covariance for the scenario. Deterministic per spec.seed.
Matrix gen_covariance(const ScenarioSpec& spec);
Matrix gen_covariance(const ScenarioSpec& spec, Engine& eng);

/// Sparse shift: ceil(PS * p) entries equal to delta, at uniformly random
/// indices, or (block_diagonal) inside one randomly chosen block, capped at
/// the block size.
Vector gen_shift(const ScenarioSpec& spec);
Vector gen_shift(const ScenarioSpec& spec, Engine& eng);

/// Rows are draws from N(mu, Sigma) where Sigma = A diag(lambda) A^T of the model.
Matrix draw_samples(const PCModel& model, const Vector& mu, Index n, Engine& eng);

// ---------------------------------------------------------------------------
// Type-I error validation of the analytic control limit.

enum class Type1Kind { iid_chisq, ewma_pipeline };

struct Type1Config {
    Type1Kind kind = Type1Kind::iid_chisq;
    Index p = 1000;
    std::vector<double> nus{0.05};
    double alpha = 0.005;
    std::size_t reps = 200;
    std::int64_t steps = 1000;
    double gamma = 0.4;
    EwmaVarianceMode variance_mode = EwmaVarianceMode::paper;
    std::uint64_t seed = 1;
    unsigned workers = 1;
};

struct Type1Result {
    Type1Config config;
    std::vector<double> r0;        // per nu
    std::vector<double> alpha_hat; // mean exceedance fraction per nu
    std::vector<double> stderr_;   // across replications
    std::vector<std::vector<double>> per_rep; // [nu][rep]
    double seconds = 0.0;
};

/// Fraction of R_t (t = 1..steps) above the analytic limit, averaged over
/// replications. Every nu is scored on the same simulated d values.
Type1Result run_type1_experiment(const Type1Config& cfg);

// ---------------------------------------------------------------------------
// Average run length comparison.

enum class MonitorMethod { apc, pca_t2q };

struct ArlConfig {
    ScenarioSpec scenario;
    std::vector<MonitorMethod> methods{MonitorMethod::apc, MonitorMethod::pca_t2q};
    std::vector<double> deltas{0.05, 0.1, 0.25, 0.5};
    double target_arl = 200.0;
    std::size_t reps = 200;
    std::size_t calibration_reps = 1000;
    std::int64_t change_time = 50;
    double max_rl_factor = 20.0; // run lengths are censored at max_rl_factor * target_arl
    MonitorConfig apc;
    PcaChartConfig pca;
    std::size_t pca_calibration_draws = 200000;
    std::uint64_t seed = 1;
    unsigned workers = 1;
};

struct ArlCell {
    MonitorMethod method = MonitorMethod::apc;
    double delta = 0.0;
    double arl = 0.0;
    double stderr_ = 0.0;
    std::size_t censored = 0;
    std::size_t restarts = 0; // replications redrawn after a false alarm before the change
    std::vector<std::int64_t> run_lengths;
    std::optional<std::string> error;
};

struct ArlReport {
    ArlConfig config;
    std::optional<CalibrationReport> apc_calibration;
    std::optional<PcaChartLimits> pca_limits;
    std::vector<ArlCell> cells;
    double seconds = 0.0;

    const ArlCell* find(MonitorMethod m, double delta) const;
};

ArlReport run_arl_experiment(const ArlConfig& cfg);

// ---------------------------------------------------------------------------
// Diagnosis accuracy.

enum class DiagnosisMethod { pcsr, leb };

struct DiagnosisConfig {
    ScenarioSpec scenario;
    std::vector<DiagnosisMethod> methods{DiagnosisMethod::pcsr, DiagnosisMethod::leb};
    std::vector<double> shift_fractions{0.10};
    std::vector<double> deltas{1.0};
    std::size_t reps = 100;
    Index samples = 25; // out-of-control observations averaged per replication
    PathConfig path;
    std::uint64_t seed = 1;
    unsigned workers = 1;
};

struct SelectionScore {
    double fp_pct = 0.0;
    double fn_pct = 0.0;
    double pss = 0.0;
    double f1 = 0.0;
    bool f1_undefined = false; // no truly shifted variable: F1 reported as 0
};

/// Scores a selected support against the true shifted set.
SelectionScore score_selection(const std::vector<Index>& selected, const std::vector<Index>& truth, Index p);

struct DiagnosisCell {
    DiagnosisMethod method = DiagnosisMethod::pcsr;
    double shift_fraction = 0.0;
    double delta = 0.0;
    SelectionScore mean;
    std::size_t f1_undefined = 0;
    std::vector<SelectionScore> per_rep;
};

struct DiagnosisReport {
    DiagnosisConfig config;
    std::vector<DiagnosisCell> cells;
    double seconds = 0.0;

    const DiagnosisCell* find(DiagnosisMethod m, double ps, double delta) const;
};

DiagnosisReport run_diagnosis_experiment(const DiagnosisConfig& cfg);

// ---------------------------------------------------------------------------
// Synthetic stand-in for the steel rolling image: each row is one observation
// of `width` pixels with AR(1) correlation between neighbouring pixels. Dark
// vertical lines appear in the defect columns from `change_row` on.

struct RollingImageSpec {
    Index width = 300;
    Index rows = 198;
    Index change_row = 127; // 1-based index of the first defective row
    Index training_rows = 2000;
    double base = 120.0;
    double stripe_amplitude = 15.0;
    double noise_sd = 8.0;
    double rho = 0.6;
    std::vector<std::pair<Index, Index>> defects{{20, 24}, {36, 40}, {52, 56}}; // [begin, end) columns
    double depth = 6.0; // intensity drop in units of noise_sd
    std::uint64_t seed = 1;
};

struct RollingImage {
    Matrix image;  // rows x width, defects from change_row on
    Matrix phase1; // training_rows x width, in control
    Vector mean;
    Matrix covariance;
    std::vector<Index> shifted; // defect columns, sorted
};

RollingImage gen_rolling_image(const RollingImageSpec& spec);

// ---------------------------------------------------------------------------

std::string to_string(ScenarioKind k);
std::string to_string(Type1Kind k);
std::string to_string(MonitorMethod m);
std::string to_string(DiagnosisMethod m);
ScenarioKind parse_scenario_kind(const std::string& s);
Type1Kind parse_type1_kind(const std::string& s);
MonitorMethod parse_monitor_method(const std::string& s);
DiagnosisMethod parse_diagnosis_method(const std::string& s);

// Table-shaped CSV renderings and raw JSON dumps.
std::string type1_table_csv(const std::vector<Type1Result>& results);
std::string arl_table_csv(const ArlReport& report);
std::string diagnosis_table_csv(const DiagnosisReport& report);
nlohmann::json to_json(const Type1Result& r);
nlohmann::json to_json(const ArlReport& r);
nlohmann::json to_json(const DiagnosisReport& r);

} // namespace hdspc
