#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "hdspc/pca_model.hpp"
#include "hdspc/types.hpp"

namespace hdspc {

// Variance used to standardize the EWMA statistic before squaring.
//   paper              gamma / (1 - gamma)
//   asymptotic         gamma / (2 - gamma)   (steady-state EWMA variance)
//   exact_time_varying gamma / (2 - gamma) * (1 - (1 - gamma)^(2t))
enum class EwmaVarianceMode { paper, asymptotic, exact_time_varying };
enum class CalibrationMode { analytic, monte_carlo };

struct MonitorConfig {
    double gamma = 0.4;
    double nu = 0.5;
    // Exactly one of alpha / target_arl must be set; alpha = 1 / target_arl.
    std::optional<double> alpha;
    std::optional<double> target_arl;
    EwmaVarianceMode variance_mode = EwmaVarianceMode::asymptotic;
    CalibrationMode calibration_mode = CalibrationMode::monte_carlo;

    /// Per-step type-I error rate implied by the configuration.
    double type1_rate() const;
    /// In-control ARL implied by the configuration (1 / alpha when alpha is set).
    double in_control_arl() const;
    /// Throws std::invalid_argument describing the first bad field.
    void validate() const;
};

/// Analytic limits are accurate for large p; Monte Carlo below that.
CalibrationMode default_calibration_mode(Index p);

struct MonitorState {
    Vector z;
    std::int64_t t = 0;
    double r0 = 0.0;
    bool tripped = false;
    std::optional<std::int64_t> first_alarm;

    static MonitorState initial(Index p, double r0);
};

struct ChartPoint {
    std::int64_t t = 0;
    double r = 0.0;
    bool alarm = false;
    Vector d;
    Vector contributions; // (d_j - nu)_+
};

struct ThresholdMoments {
    double mean = 0.0;
    double second_moment = 0.0;
    double variance = 0.0;
};

double ewma_variance(double gamma, EwmaVarianceMode mode, std::int64_t t);

/// z_t = gamma * scores + (1 - gamma) * z_{t-1}. Throws DataError on
/// non-finite scores; the caller's state is untouched in that case.
Vector ewma_step(const Vector& z_prev, const Vector& scores, double gamma);

/// d_j = (z_j / sigma_z)^2, sigma_z^2 from the configured variance mode.
Vector d_statistic(const Vector& z, std::int64_t t, const MonitorConfig& cfg);

/// R = sum_j (d_j - nu)_+.
double r_statistic(const Vector& d, double nu);

/// Mean and second moment of (d - nu)_+ for d ~ chi^2_1.
ThresholdMoments threshold_moments(double nu);

/// R0 = p mu + sqrt(p) sigma Phi^{-1}(1 - alpha), normal approximation of R.
double control_limit_analytic(Index p, double nu, double alpha);

/// nu such that P(chi^2_1 > nu) = significance.
double nu_from_significance(double significance);

struct McOptions {
    std::size_t reps = 1000;
    std::uint64_t seed = 1;
    double horizon_factor = 10.0; // simulate each path up to horizon_factor * target
    double rel_tol = 0.05;
    unsigned workers = 1;
};

struct CalibrationReport {
    Index p = 0;
    double gamma = 0.0;
    double nu = 0.0;
    double alpha = 0.0;
    double target_arl = 0.0;
    double r0 = 0.0;
    CalibrationMode mode = CalibrationMode::analytic;
    EwmaVarianceMode variance_mode = EwmaVarianceMode::asymptotic;
    std::size_t reps = 0;
    std::uint64_t seed = 0;
    // Empirical in-control ARL on the calibration paths (Monte Carlo only).
    std::optional<double> empirical_arl;
    std::optional<double> arl_stderr;
    std::size_t censored = 0;
    bool converged = true;
    double bracket_lo = 0.0;
    double bracket_hi = 0.0;
};

/// Bisects R0 on simulated in-control standardized-score streams until the
/// in-control ARL is within rel_tol of `target_arl`. Only p matters: the
/// standardized scores of an in-control process are i.i.d. N(0, 1).
CalibrationReport control_limit_montecarlo(Index p, const MonitorConfig& cfg, double target_arl,
                                           const McOptions& opts);
CalibrationReport control_limit_montecarlo(const PCModel& model, const MonitorConfig& cfg,
                                           double target_arl, const McOptions& opts);

/// Analytic or Monte-Carlo calibration according to cfg.calibration_mode.
CalibrationReport calibrate(Index p, const MonitorConfig& cfg, const McOptions& opts);

struct RunLengthSummary {
    std::vector<std::int64_t> run_lengths;
    double mean = 0.0;
    double stderr_ = 0.0;
    std::size_t censored = 0;
};

RunLengthSummary summarize_run_lengths(std::vector<std::int64_t> run_lengths, std::size_t censored);

/// In-control zero-state run lengths of the APC chart with limit r0.
RunLengthSummary simulate_in_control_run_lengths(Index p, const MonitorConfig& cfg, double r0,
                                                 std::size_t reps, std::uint64_t seed,
                                                 std::int64_t max_length, unsigned workers = 1);

/// One chart update from standardized scores; advances the state.
ChartPoint monitor_scores(MonitorState& state, const Vector& standardized, const MonitorConfig& cfg);

/// project -> EWMA -> d -> R -> alarm. Records the first alarm time.
ChartPoint monitor_step(MonitorState& state, const PCModel& model, const Observation& x,
                        const MonitorConfig& cfg);

/// Allocation-free update used by the simulation loops: updates z in place
/// and returns R_t for step t (t counts from 1).
double apc_update(double* z, const double* scores, Index p, std::int64_t t, const MonitorConfig& cfg);

std::string to_string(EwmaVarianceMode mode);
std::string to_string(CalibrationMode mode);
EwmaVarianceMode parse_variance_mode(const std::string& s);
CalibrationMode parse_calibration_mode(const std::string& s);

nlohmann::json report_to_json(const CalibrationReport& report);
CalibrationReport report_from_json(const nlohmann::json& doc);

} // namespace hdspc
