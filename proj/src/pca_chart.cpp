#include "hdspc/pca_chart.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "hdspc/rng.hpp"

namespace hdspc {

namespace {

double upper_quantile(std::vector<double> values, double tail) {
    if (values.empty()) return 0.0;
    const auto n = values.size();
    auto idx = static_cast<std::size_t>(std::ceil((1.0 - tail) * static_cast<double>(n))) ;
    idx = std::min(idx == 0 ? 0 : idx - 1, n - 1);
    std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(idx), values.end());
    return values[idx];
}

} // namespace

Index retained_components(const PCModel& model, double cpv) {
    if (!(cpv > 0.0 && cpv <= 1.0)) throw std::invalid_argument("cpv must lie in (0, 1]");
    const Vector& lam = model.eigvals();
    const double total = lam.sum();
    if (!(total > 0.0)) return model.dim();
    double acc = 0.0;
    for (Index j = 0; j < lam.size(); ++j) {
        acc += lam[j];
        // relative slack so that e.g. 9 / 10 counts as reaching 0.9
        if (acc / total >= cpv - 1e-12) return j + 1;
    }
    return model.dim();
}

PcaChartPoint t2_q_from_standardized(const PCModel& model, const double* standardized,
                                     const PcaChartLimits& limits) {
    const Vector& lam = model.floored_eigvals();
    PcaChartPoint pt;
    for (Index j = 0; j < limits.k; ++j) pt.t2 += standardized[j] * standardized[j];
    for (Index j = limits.k; j < model.dim(); ++j) pt.q += lam[j] * standardized[j] * standardized[j];
    pt.alarm = pt.t2 > limits.t2 || (!limits.q_degenerate && pt.q > limits.q);
    return pt;
}

PcaChartPoint t2_q_step(const PCModel& model, const Vector& x, const PcaChartConfig& cfg,
                        const PcaChartLimits& limits) {
    if (limits.k != retained_components(model, cfg.cpv))
        throw std::invalid_argument("t2_q_step: limits were calibrated for a different k");
    const ScoreVector s = project(model, x);
    PcaChartPoint pt;
    const Vector& lam = model.floored_eigvals();
    for (Index j = 0; j < limits.k; ++j) pt.t2 += s.raw[j] * s.raw[j] / lam[j];
    // ||x - mean - A_k y_k||^2 = sum of the discarded squared scores.
    const Vector resid = (x - model.mean()) - model.eigvecs().leftCols(limits.k) * s.raw.head(limits.k);
    pt.q = resid.squaredNorm();
    pt.alarm = pt.t2 > limits.t2 || (!limits.q_degenerate && pt.q > limits.q);
    return pt;
}

PcaChartLimits calibrate_pca_chart(const PCModel& model, const PcaChartConfig& cfg, double target_arl,
                                   std::size_t draws, std::uint64_t seed) {
    if (!(target_arl > 1.0)) throw std::invalid_argument("calibrate_pca_chart: target ARL must exceed 1");
    if (draws < 1000) throw std::invalid_argument("calibrate_pca_chart: need at least 1000 draws");

    PcaChartLimits lim;
    lim.k = retained_components(model, cfg.cpv);
    lim.alpha = 1.0 / target_arl;
    lim.q_degenerate = lim.k == model.dim();
    const double per_chart = lim.q_degenerate ? lim.alpha : lim.alpha / 2.0;

    const Index p = model.dim();
    std::vector<double> t2(draws), q(draws);
    Engine eng = make_engine(seed, 0);
    NormalSampler normal;
    Vector s(p);
    for (std::size_t i = 0; i < draws; ++i) {
        normal.fill(eng, s);
        const auto pt = t2_q_from_standardized(model, s.data(), lim);
        t2[i] = pt.t2;
        q[i] = pt.q;
    }
    lim.t2 = upper_quantile(t2, per_chart);
    lim.q = lim.q_degenerate ? 0.0 : upper_quantile(q, per_chart);

    std::size_t hits = 0;
    for (std::size_t i = 0; i < draws; ++i)
        if (t2[i] > lim.t2 || (!lim.q_degenerate && q[i] > lim.q)) ++hits;
    lim.empirical_rate = static_cast<double>(hits) / static_cast<double>(draws);
    return lim;
}

} // namespace hdspc
