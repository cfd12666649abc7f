#include "hdspc/monitoring.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/distributions/normal.hpp>
#include <boost/math/special_functions/gamma.hpp>

#include "hdspc/rng.hpp"

namespace hdspc {

namespace {

constexpr Index kAnalyticMinDim = 5000;

// Running-maximum records of R_t along one simulated path. The run length for
// a limit r0 is the time of the first record above r0, so a single set of
// paths answers every candidate limit during bisection.
struct RecordPath {
    std::vector<std::int64_t> times;
    std::vector<double> values;
};

std::int64_t run_length(const RecordPath& path, double r0, std::int64_t horizon) {
    auto it = std::upper_bound(path.values.begin(), path.values.end(), r0);
    if (it == path.values.end()) return horizon;
    return path.times[static_cast<std::size_t>(it - path.values.begin())];
}

RecordPath simulate_records(Index p, const MonitorConfig& cfg, std::int64_t horizon, Engine eng) {
    NormalSampler normal;
    std::vector<double> z(static_cast<std::size_t>(p), 0.0);
    std::vector<double> scores(static_cast<std::size_t>(p));
    RecordPath path;
    double best = -1.0;
    for (std::int64_t t = 1; t <= horizon; ++t) {
        for (auto& s : scores) s = normal(eng);
        const double r = apc_update(z.data(), scores.data(), p, t, cfg);
        if (r > best) {
            best = r;
            path.times.push_back(t);
            path.values.push_back(r);
        }
    }
    return path;
}

struct ArlEstimate {
    double mean = 0.0;
    std::size_t censored = 0;
};

ArlEstimate arl_for(const std::vector<RecordPath>& paths, double r0, std::int64_t horizon) {
    ArlEstimate e;
    double sum = 0.0;
    for (const auto& path : paths) {
        const auto rl = run_length(path, r0, horizon);
        if (rl >= horizon && (path.values.empty() || path.values.back() <= r0)) ++e.censored;
        sum += static_cast<double>(rl);
    }
    e.mean = sum / static_cast<double>(paths.size());
    return e;
}

} // namespace

double MonitorConfig::type1_rate() const {
    if (alpha) return *alpha;
    if (target_arl) return 1.0 / *target_arl;
    throw std::invalid_argument("MonitorConfig: neither alpha nor target_arl is set");
}

double MonitorConfig::in_control_arl() const {
    if (target_arl) return *target_arl;
    return 1.0 / type1_rate();
}

void MonitorConfig::validate() const {
    if (!(gamma > 0.0 && gamma <= 1.0)) throw std::invalid_argument("gamma must lie in (0, 1]");
    if (!(nu >= 0.0) || !std::isfinite(nu)) throw std::invalid_argument("nu must be nonnegative");
    if (alpha.has_value() == target_arl.has_value())
        throw std::invalid_argument("exactly one of alpha / target_arl must be set");
    if (alpha && !(*alpha > 0.0 && *alpha < 1.0)) throw std::invalid_argument("alpha must lie in (0, 1)");
    if (target_arl && !(*target_arl > 1.0) ) throw std::invalid_argument("target ARL must exceed 1");
    if (variance_mode == EwmaVarianceMode::paper && gamma >= 1.0)
        throw std::invalid_argument("variance mode 'paper' requires gamma < 1");
}

CalibrationMode default_calibration_mode(Index p) {
    return p >= kAnalyticMinDim ? CalibrationMode::analytic : CalibrationMode::monte_carlo;
}

MonitorState MonitorState::initial(Index p, double r0) {
    MonitorState s;
    s.z = Vector::Zero(p);
    s.r0 = r0;
    return s;
}

double ewma_variance(double gamma, EwmaVarianceMode mode, std::int64_t t) {
    switch (mode) {
    case EwmaVarianceMode::paper:
        return gamma / (1.0 - gamma);
    case EwmaVarianceMode::asymptotic:
        return gamma / (2.0 - gamma);
    case EwmaVarianceMode::exact_time_varying:
        return gamma / (2.0 - gamma) * (1.0 - std::pow(1.0 - gamma, 2.0 * static_cast<double>(t)));
    }
    throw std::logic_error("unknown variance mode");
}

Vector ewma_step(const Vector& z_prev, const Vector& scores, double gamma) {
    if (z_prev.size() != scores.size()) throw std::invalid_argument("ewma_step: dimension mismatch");
    if (!scores.allFinite()) throw DataError("ewma_step: non-finite standardized score");
    return gamma * scores + (1.0 - gamma) * z_prev;
}

Vector d_statistic(const Vector& z, std::int64_t t, const MonitorConfig& cfg) {
    if (t < 1) throw std::invalid_argument("d_statistic: t must be >= 1");
    return z.array().square() / ewma_variance(cfg.gamma, cfg.variance_mode, t);
}

double r_statistic(const Vector& d, double nu) {
    if (!(nu >= 0.0)) throw std::invalid_argument("r_statistic: nu must be nonnegative");
    return (d.array() - nu).max(0.0).sum();
}

ThresholdMoments threshold_moments(double nu) {
    if (!(nu >= 0.0) || !std::isfinite(nu)) throw std::invalid_argument("threshold_moments: nu must be >= 0");
    // Gamma(0.5, nu/2) / Gamma(0.5) is the regularized upper incomplete gamma
    // Q(0.5, nu/2), which is also P(chi2_1 > nu). Working with Q keeps nu = 0
    // exact: (1, 3), the first two moments of chi2_1.
    const double tail = boost::math::gamma_q(0.5, nu / 2.0);
    const double edge = std::exp(-nu / 2.0) * std::sqrt(2.0 * nu) / std::sqrt(M_PI);

    ThresholdMoments m;
    m.mean = tail + edge - nu * tail;
    m.second_moment = 3.0 * tail + edge * (3.0 + nu) - 2.0 * nu * m.mean - nu * nu * tail;
    m.mean = std::max(m.mean, 0.0);
    m.second_moment = std::max(m.second_moment, 0.0);
    m.variance = std::max(m.second_moment - m.mean * m.mean, 0.0);
    return m;
}

double control_limit_analytic(Index p, double nu, double alpha) {
    if (p < 1) throw std::invalid_argument("control_limit_analytic: p must be >= 1");
    if (!(alpha > 0.0 && alpha < 1.0)) throw std::invalid_argument("control_limit_analytic: alpha must lie in (0, 1)");
    const auto m = threshold_moments(nu);
    const boost::math::normal_distribution<double> std_normal;
    const double z = boost::math::quantile(boost::math::complement(std_normal, alpha));
    const double dp = static_cast<double>(p);
    return dp * m.mean + std::sqrt(dp) * std::sqrt(m.variance) * z;
}

double nu_from_significance(double significance) {
    if (!(significance > 0.0 && significance < 1.0))
        throw std::invalid_argument("nu_from_significance: level must lie in (0, 1)");
    const boost::math::chi_squared_distribution<double> chi1(1.0);
    return boost::math::quantile(boost::math::complement(chi1, significance));
}

double apc_update(double* z, const double* scores, Index p, std::int64_t t, const MonitorConfig& cfg) {
    const double g = cfg.gamma;
    const double keep = 1.0 - g;
    const double inv_var = 1.0 / ewma_variance(g, cfg.variance_mode, t);
    const double nu = cfg.nu;
    double r = 0.0;
    for (Index j = 0; j < p; ++j) {
        const double zj = g * scores[j] + keep * z[j];
        z[j] = zj;
        const double excess = zj * zj * inv_var - nu;
        if (excess > 0.0) r += excess;
    }
    return r;
}

RunLengthSummary summarize_run_lengths(std::vector<std::int64_t> run_lengths, std::size_t censored) {
    RunLengthSummary s;
    s.run_lengths = std::move(run_lengths);
    s.censored = censored;
    const auto n = static_cast<double>(s.run_lengths.size());
    if (s.run_lengths.empty()) return s;
    double sum = 0.0;
    for (auto rl : s.run_lengths) sum += static_cast<double>(rl);
    s.mean = sum / n;
    if (s.run_lengths.size() > 1) {
        double ss = 0.0;
        for (auto rl : s.run_lengths) ss += (static_cast<double>(rl) - s.mean) * (static_cast<double>(rl) - s.mean);
        s.stderr_ = std::sqrt(ss / (n - 1.0) / n);
    }
    return s;
}

CalibrationReport control_limit_montecarlo(Index p, const MonitorConfig& cfg, double target_arl,
                                           const McOptions& opts) {
    cfg.validate();
    if (p < 1) throw std::invalid_argument("control_limit_montecarlo: p must be >= 1");
    if (opts.reps < 100) throw std::invalid_argument("control_limit_montecarlo: reps must be >= 100");
    if (!(target_arl > 1.0)) throw std::invalid_argument("control_limit_montecarlo: target ARL must exceed 1");

    const auto horizon = static_cast<std::int64_t>(std::ceil(opts.horizon_factor * target_arl));
    std::vector<RecordPath> paths(opts.reps);
    parallel_for(opts.reps, opts.workers, [&](std::size_t i) {
        paths[i] = simulate_records(p, cfg, horizon, make_engine(opts.seed, i));
    });

    double lo = 0.0;
    double hi = 0.0;
    for (const auto& path : paths)
        if (!path.values.empty()) hi = std::max(hi, path.values.back());
    // ARL(r0) is nondecreasing in r0; ARL(hi) equals the horizon.
    for (int iter = 0; iter < 200 && hi - lo > 1e-12 * std::max(1.0, hi); ++iter) {
        const double mid = 0.5 * (lo + hi);
        if (arl_for(paths, mid, horizon).mean < target_arl)
            lo = mid;
        else
            hi = mid;
    }
    const auto at_lo = arl_for(paths, lo, horizon);
    const auto at_hi = arl_for(paths, hi, horizon);
    const bool use_lo = std::abs(at_lo.mean - target_arl) < std::abs(at_hi.mean - target_arl);
    const double r0 = use_lo ? lo : hi;

    std::vector<std::int64_t> rls;
    rls.reserve(paths.size());
    for (const auto& path : paths) rls.push_back(run_length(path, r0, horizon));
    const auto summary = summarize_run_lengths(std::move(rls), (use_lo ? at_lo : at_hi).censored);

    CalibrationReport rep;
    rep.p = p;
    rep.gamma = cfg.gamma;
    rep.nu = cfg.nu;
    rep.target_arl = target_arl;
    rep.alpha = 1.0 / target_arl;
    rep.r0 = r0;
    rep.mode = CalibrationMode::monte_carlo;
    rep.variance_mode = cfg.variance_mode;
    rep.reps = opts.reps;
    rep.seed = opts.seed;
    rep.empirical_arl = summary.mean;
    rep.arl_stderr = summary.stderr_;
    rep.censored = summary.censored;
    rep.converged = std::abs(summary.mean - target_arl) <= opts.rel_tol * target_arl;
    rep.bracket_lo = lo;
    rep.bracket_hi = hi;
    return rep;
}

CalibrationReport control_limit_montecarlo(const PCModel& model, const MonitorConfig& cfg,
                                           double target_arl, const McOptions& opts) {
    return control_limit_montecarlo(model.dim(), cfg, target_arl, opts);
}

CalibrationReport calibrate(Index p, const MonitorConfig& cfg, const McOptions& opts) {
    cfg.validate();
    if (cfg.calibration_mode == CalibrationMode::monte_carlo)
        return control_limit_montecarlo(p, cfg, cfg.in_control_arl(), opts);

    CalibrationReport rep;
    rep.p = p;
    rep.gamma = cfg.gamma;
    rep.nu = cfg.nu;
    rep.alpha = cfg.type1_rate();
    rep.target_arl = cfg.in_control_arl();
    rep.r0 = control_limit_analytic(p, cfg.nu, rep.alpha);
    rep.mode = CalibrationMode::analytic;
    rep.variance_mode = cfg.variance_mode;
    rep.bracket_lo = rep.bracket_hi = rep.r0;
    return rep;
}

RunLengthSummary simulate_in_control_run_lengths(Index p, const MonitorConfig& cfg, double r0,
                                                 std::size_t reps, std::uint64_t seed,
                                                 std::int64_t max_length, unsigned workers) {
    cfg.validate();
    std::vector<std::int64_t> rls(reps);
    std::vector<char> cens(reps, 0);
    parallel_for(reps, workers, [&](std::size_t i) {
        Engine eng = make_engine(seed, i);
        NormalSampler normal;
        std::vector<double> z(static_cast<std::size_t>(p), 0.0);
        std::vector<double> scores(static_cast<std::size_t>(p));
        std::int64_t t = 1;
        for (; t <= max_length; ++t) {
            for (auto& s : scores) s = normal(eng);
            if (apc_update(z.data(), scores.data(), p, t, cfg) > r0) break;
        }
        if (t > max_length) {
            t = max_length;
            cens[i] = 1;
        }
        rls[i] = t;
    });
    return summarize_run_lengths(std::move(rls),
                                 static_cast<std::size_t>(std::count(cens.begin(), cens.end(), 1)));
}

ChartPoint monitor_scores(MonitorState& state, const Vector& standardized, const MonitorConfig& cfg) {
    if (standardized.size() != state.z.size()) throw std::invalid_argument("monitor: dimension mismatch");
    Vector z = ewma_step(state.z, standardized, cfg.gamma);
    state.z = std::move(z);
    state.t += 1;

    ChartPoint pt;
    pt.t = state.t;
    pt.d = d_statistic(state.z, state.t, cfg);
    pt.contributions = (pt.d.array() - cfg.nu).max(0.0);
    pt.r = pt.contributions.sum();
    pt.alarm = pt.r > state.r0;
    if (pt.alarm && !state.tripped) {
        state.tripped = true;
        state.first_alarm = state.t;
    }
    return pt;
}

ChartPoint monitor_step(MonitorState& state, const PCModel& model, const Observation& x,
                        const MonitorConfig& cfg) {
    return monitor_scores(state, project(model, x).standardized, cfg);
}

std::string to_string(EwmaVarianceMode mode) {
    switch (mode) {
    case EwmaVarianceMode::paper: return "paper";
    case EwmaVarianceMode::asymptotic: return "asymptotic";
    case EwmaVarianceMode::exact_time_varying: return "exact_time_varying";
    }
    return "?";
}

std::string to_string(CalibrationMode mode) {
    return mode == CalibrationMode::analytic ? "analytic" : "monte_carlo";
}

EwmaVarianceMode parse_variance_mode(const std::string& s) {
    if (s == "paper") return EwmaVarianceMode::paper;
    if (s == "asymptotic") return EwmaVarianceMode::asymptotic;
    if (s == "exact_time_varying" || s == "exact") return EwmaVarianceMode::exact_time_varying;
    throw std::invalid_argument("unknown EWMA variance mode '" + s + "'");
}

CalibrationMode parse_calibration_mode(const std::string& s) {
    if (s == "analytic") return CalibrationMode::analytic;
    if (s == "monte_carlo" || s == "montecarlo" || s == "mc") return CalibrationMode::monte_carlo;
    throw std::invalid_argument("unknown calibration mode '" + s + "'");
}

nlohmann::json report_to_json(const CalibrationReport& r) {
    nlohmann::json j = {
        {"p", r.p},
        {"gamma", r.gamma},
        {"nu", r.nu},
        {"alpha", r.alpha},
        {"target_arl", r.target_arl},
        {"r0", r.r0},
        {"mode", to_string(r.mode)},
        {"variance_mode", to_string(r.variance_mode)},
        {"reps", r.reps},
        {"seed", r.seed},
        {"empirical_arl", nullptr},
        {"converged", r.converged},
    };
    if (r.empirical_arl) {
        j["empirical_arl"] = *r.empirical_arl;
        j["arl_stderr"] = r.arl_stderr.value_or(0.0);
        j["censored"] = r.censored;
        j["bracket"] = {r.bracket_lo, r.bracket_hi};
    }
    return j;
}

CalibrationReport report_from_json(const nlohmann::json& doc) {
    try {
        CalibrationReport r;
        r.p = doc.at("p").get<Index>();
        r.gamma = doc.at("gamma").get<double>();
        r.nu = doc.at("nu").get<double>();
        r.alpha = doc.at("alpha").get<double>();
        r.target_arl = doc.value("target_arl", 1.0 / r.alpha);
        r.r0 = doc.at("r0").get<double>();
        r.mode = parse_calibration_mode(doc.at("mode").get<std::string>());
        r.variance_mode = parse_variance_mode(doc.value("variance_mode", std::string("asymptotic")));
        r.reps = doc.value("reps", std::size_t{0});
        r.seed = doc.value("seed", std::uint64_t{0});
        if (doc.contains("empirical_arl") && !doc["empirical_arl"].is_null())
            r.empirical_arl = doc["empirical_arl"].get<double>();
        r.converged = doc.value("converged", true);
        return r;
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("calibration: malformed document: ") + e.what());
    } catch (const std::invalid_argument& e) {
        throw DataError(std::string("calibration: ") + e.what());
    }
}

} // namespace hdspc
