#pragma once

#include <cstdint>

#include "hdspc/pca_model.hpp"
#include "hdspc/types.hpp"

namespace hdspc {

// Conventional PCA monitoring: Hotelling T^2 on the leading k components plus
// the Q (squared prediction error) statistic on the residual subspace.
struct PcaChartConfig {
    double cpv = 0.90;
};

struct PcaChartLimits {
    Index k = 0;
    double t2 = 0.0;
    double q = 0.0;
    double alpha = 0.0;          // joint per-step false-alarm rate targeted
    double empirical_rate = 0.0; // joint exceedance rate on the calibration draws
    bool q_degenerate = false;   // k == p: Q is identically zero, T^2 carries all of alpha
};

struct PcaChartPoint {
    double t2 = 0.0;
    double q = 0.0;
    bool alarm = false;
};

/// Smallest k with sum_{j<=k} lambda_j / sum lambda >= cpv.
Index retained_components(const PCModel& model, double cpv);

PcaChartPoint t2_q_step(const PCModel& model, const Vector& x, const PcaChartConfig& cfg,
                        const PcaChartLimits& limits);

/// Same statistics from standardized scores (y_j / sqrt(lambda_j)).
PcaChartPoint t2_q_from_standardized(const PCModel& model, const double* standardized,
                                     const PcaChartLimits& limits);

/// Per-chart limits at the empirical (1 - alpha/2) quantiles of simulated
/// in-control T^2 and Q values, alpha = 1 / target_arl (Bonferroni split).
/// The charts have no memory, so the joint in-control ARL is 1 / joint rate.
PcaChartLimits calibrate_pca_chart(const PCModel& model, const PcaChartConfig& cfg, double target_arl,
                                   std::size_t draws, std::uint64_t seed);

} // namespace hdspc
