#include "hdspc/simulation.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iomanip>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <stdexcept>

namespace hdspc {

namespace {

constexpr std::uint64_t kCovarianceStream = 0xC0FA;

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
    return std::chrono::duration<double>(Clock::now() - start).count();
}

// Wishart(df, I_b) draw rescaled to unit diagonal.
Matrix wishart_correlation(Index b, Index df, Engine& eng) {
    NormalSampler normal;
    Matrix g(b, df);
    for (Index j = 0; j < df; ++j)
        for (Index i = 0; i < b; ++i) g(i, j) = normal(eng);
    Matrix w = g * g.transpose();
    const Vector inv_sd = w.diagonal().cwiseSqrt().cwiseInverse();
    Matrix c = inv_sd.asDiagonal() * w * inv_sd.asDiagonal();
    c = 0.5 * (c + c.transpose()).eval();
    c.diagonal().setOnes();
    return c;
}

std::vector<Index> sample_without_replacement(Index begin, Index end, Index count, Engine& eng) {
    std::vector<Index> pool(static_cast<std::size_t>(end - begin));
    std::iota(pool.begin(), pool.end(), begin);
    count = std::min<Index>(count, static_cast<Index>(pool.size()));
    // partial Fisher-Yates
    for (Index i = 0; i < count; ++i) {
        std::uniform_int_distribution<Index> pick(i, static_cast<Index>(pool.size()) - 1);
        std::swap(pool[static_cast<std::size_t>(i)], pool[static_cast<std::size_t>(pick(eng))]);
    }
    pool.resize(static_cast<std::size_t>(count));
    std::sort(pool.begin(), pool.end());
    return pool;
}

std::uint64_t stream_id(std::size_t cell, std::size_t rep) {
    return (static_cast<std::uint64_t>(cell) + 1) * 1'000'003ULL + rep;
}

double mean_of(const std::vector<double>& v) {
    return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double stderr_of(const std::vector<double>& v) {
    if (v.size() < 2) return 0.0;
    const double m = mean_of(v);
    double ss = 0.0;
    for (double x : v) ss += (x - m) * (x - m);
    const auto n = static_cast<double>(v.size());
    return std::sqrt(ss / (n - 1.0) / n);
}

std::string fmt(double v, int precision = 6) {
    std::ostringstream os;
    os << std::setprecision(precision) << v;
    return os.str();
}

} // namespace

void validate(const ScenarioSpec& spec) {
    if (spec.p < 1) throw std::invalid_argument("scenario: p must be positive");
    if (!(spec.shift_fraction >= 0.0 && spec.shift_fraction <= 1.0))
        throw std::invalid_argument("scenario: shift fraction must lie in [0, 1]");
    if (!std::isfinite(spec.delta)) throw std::invalid_argument("scenario: delta must be finite");
    if (spec.wishart_extra_df < 0) throw std::invalid_argument("scenario: Wishart extra df must be >= 0");
    if (spec.kind == ScenarioKind::block_diagonal && (spec.blocks < 1 || spec.p < spec.blocks))
        throw std::invalid_argument("scenario: block mode needs 1 <= K <= p");
    if (spec.kind == ScenarioKind::ar1 && !(std::abs(spec.rho) < 1.0))
        throw std::invalid_argument("scenario: |rho| must be < 1");
}

std::vector<std::pair<Index, Index>> block_ranges(Index p, Index blocks) {
    if (blocks < 1 || p < blocks) throw std::invalid_argument("block_ranges: need 1 <= K <= p");
    const Index size = p / blocks;
    std::vector<std::pair<Index, Index>> out;
    for (Index k = 0; k < blocks; ++k) out.emplace_back(k * size, k + 1 == blocks ? p : (k + 1) * size);
    return out;
}

Matrix gen_covariance(const ScenarioSpec& spec, Engine& eng) {
    validate(spec);
    const Index p = spec.p;
    switch (spec.kind) {
    case ScenarioKind::random_wishart:
        return wishart_correlation(p, p + spec.wishart_extra_df, eng);
    case ScenarioKind::block_diagonal: {
        Matrix cov = Matrix::Zero(p, p);
        for (const auto& [b, e] : block_ranges(p, spec.blocks))
            cov.block(b, b, e - b, e - b) = wishart_correlation(e - b, e - b + spec.wishart_extra_df, eng);
        return cov;
    }
    case ScenarioKind::ar1: {
        Matrix cov(p, p);
        for (Index i = 0; i < p; ++i)
            for (Index j = 0; j < p; ++j) cov(i, j) = std::pow(spec.rho, static_cast<double>(std::abs(i - j)));
        return cov;
    }
    }
    throw std::logic_error("unknown scenario kind");
}

Matrix gen_covariance(const ScenarioSpec& spec) {
    Engine eng = make_engine(spec.seed, kCovarianceStream);
    return gen_covariance(spec, eng);
}

Vector gen_shift(const ScenarioSpec& spec, Engine& eng) {
    validate(spec);
    const Index p = spec.p;
    const auto count = static_cast<Index>(std::ceil(spec.shift_fraction * static_cast<double>(p) - 1e-9));
    std::vector<Index> idx;
    if (spec.kind == ScenarioKind::block_diagonal) {
        const auto ranges = block_ranges(p, spec.blocks);
        std::uniform_int_distribution<std::size_t> pick(0, ranges.size() - 1);
        const auto [b, e] = ranges[pick(eng)];
        idx = sample_without_replacement(b, e, count, eng);
    } else {
        idx = sample_without_replacement(0, p, count, eng);
    }
    Vector mu = Vector::Zero(p);
    for (Index j : idx) mu[j] = spec.delta;
    return mu;
}

Vector gen_shift(const ScenarioSpec& spec) {
    Engine eng = make_engine(spec.seed, kCovarianceStream + 1);
    return gen_shift(spec, eng);
}

Matrix draw_samples(const PCModel& model, const Vector& mu, Index n, Engine& eng) {
    const Index p = model.dim();
    if (mu.size() != p) throw std::invalid_argument("draw_samples: dimension mismatch");
    NormalSampler normal;
    Matrix g(p, n);
    for (Index c = 0; c < n; ++c)
        for (Index r = 0; r < p; ++r) g(r, c) = normal(eng);
    const Matrix factor = model.eigvecs() * model.eigvals().cwiseSqrt().asDiagonal();
    Matrix x = (factor * g).transpose();
    x.rowwise() += (model.mean() + mu).transpose();
    return x;
}

// ---------------------------------------------------------------------------

Type1Result run_type1_experiment(const Type1Config& cfg) {
    if (cfg.p < 1 || cfg.reps < 1 || cfg.steps < 1 || cfg.nus.empty())
        throw std::invalid_argument("type1 experiment: p, reps, steps and nus must be positive");
    const auto start = Clock::now();
    const std::size_t nn = cfg.nus.size();

    Type1Result out;
    out.config = cfg;
    for (double nu : cfg.nus) out.r0.push_back(control_limit_analytic(cfg.p, nu, cfg.alpha));
    out.per_rep.assign(nn, std::vector<double>(cfg.reps, 0.0));

    MonitorConfig mc;
    mc.gamma = cfg.gamma;
    mc.variance_mode = cfg.variance_mode;
    mc.alpha = cfg.alpha;
    if (cfg.kind == Type1Kind::ewma_pipeline) mc.validate();

    parallel_for(cfg.reps, cfg.workers, [&](std::size_t rep) {
        Engine eng = make_engine(cfg.seed, rep);
        NormalSampler normal;
        const auto p = static_cast<std::size_t>(cfg.p);
        std::vector<double> z(p, 0.0);
        std::vector<double> r(nn);
        std::vector<std::size_t> hits(nn, 0);
        for (std::int64_t t = 1; t <= cfg.steps; ++t) {
            std::fill(r.begin(), r.end(), 0.0);
            const double inv_var = cfg.kind == Type1Kind::ewma_pipeline
                                       ? 1.0 / ewma_variance(cfg.gamma, cfg.variance_mode, t)
                                       : 1.0;
            for (std::size_t j = 0; j < p; ++j) {
                double d;
                const double g = normal(eng);
                if (cfg.kind == Type1Kind::iid_chisq) {
                    d = g * g;
                } else {
                    z[j] = cfg.gamma * g + (1.0 - cfg.gamma) * z[j];
                    d = z[j] * z[j] * inv_var;
                }
                for (std::size_t k = 0; k < nn; ++k)
                    if (d > cfg.nus[k]) r[k] += d - cfg.nus[k];
            }
            for (std::size_t k = 0; k < nn; ++k)
                if (r[k] > out.r0[k]) ++hits[k];
        }
        for (std::size_t k = 0; k < nn; ++k)
            out.per_rep[k][rep] = static_cast<double>(hits[k]) / static_cast<double>(cfg.steps);
    });

    for (std::size_t k = 0; k < nn; ++k) {
        out.alpha_hat.push_back(mean_of(out.per_rep[k]));
        out.stderr_.push_back(stderr_of(out.per_rep[k]));
    }
    out.seconds = seconds_since(start);
    return out;
}

// ---------------------------------------------------------------------------

const ArlCell* ArlReport::find(MonitorMethod m, double delta) const {
    for (const auto& c : cells)
        if (c.method == m && std::abs(c.delta - delta) < 1e-12) return &c;
    return nullptr;
}

ArlReport run_arl_experiment(const ArlConfig& cfg) {
    validate(cfg.scenario);
    if (cfg.reps < 1) throw std::invalid_argument("arl experiment: reps must be positive");
    if (cfg.change_time < 1) throw std::invalid_argument("arl experiment: change time must be >= 1");
    const auto start = Clock::now();

    ArlReport rep;
    rep.config = cfg;
    const Index p = cfg.scenario.p;
    const PCModel model = from_known(Vector::Zero(p), gen_covariance(cfg.scenario));
    const auto max_rl = static_cast<std::int64_t>(std::ceil(cfg.max_rl_factor * cfg.target_arl));

    MonitorConfig apc = cfg.apc;
    apc.alpha.reset();
    apc.target_arl = cfg.target_arl;
    apc.calibration_mode = CalibrationMode::monte_carlo;

    std::map<MonitorMethod, std::string> calibration_error;
    for (auto m : cfg.methods) {
        try {
            if (m == MonitorMethod::apc) {
                McOptions opts;
                opts.reps = cfg.calibration_reps;
                opts.seed = cfg.seed;
                opts.workers = cfg.workers;
                rep.apc_calibration = control_limit_montecarlo(p, apc, cfg.target_arl, opts);
                if (!rep.apc_calibration->converged)
                    calibration_error[m] = "APC calibration did not reach the target ARL";
            } else {
                rep.pca_limits =
                    calibrate_pca_chart(model, cfg.pca, cfg.target_arl, cfg.pca_calibration_draws, cfg.seed);
            }
        } catch (const std::exception& e) {
            calibration_error[m] = e.what();
        }
    }

    for (std::size_t di = 0; di < cfg.deltas.size(); ++di) {
        ScenarioSpec shift_spec = cfg.scenario;
        shift_spec.delta = cfg.deltas[di];
        for (auto m : cfg.methods) {
            ArlCell cell;
            cell.method = m;
            cell.delta = cfg.deltas[di];
            if (auto it = calibration_error.find(m); it != calibration_error.end()) {
                cell.error = it->second;
                rep.cells.push_back(std::move(cell));
                continue;
            }
            std::vector<std::int64_t> rls(cfg.reps);
            std::vector<std::size_t> restarts(cfg.reps, 0);
            std::vector<char> censored(cfg.reps, 0);
            parallel_for(cfg.reps, cfg.workers, [&](std::size_t i) {
                // Same stream for every method: common random numbers.
                Engine eng = make_engine(cfg.seed, stream_id(di, i));
                const Vector profile = shift_magnitude_profile(model, gen_shift(shift_spec, eng));
                NormalSampler normal;
                std::vector<double> s(static_cast<std::size_t>(p));
                auto draw = [&](bool shifted) {
                    for (Index j = 0; j < p; ++j) s[static_cast<std::size_t>(j)] = normal(eng) + (shifted ? profile[j] : 0.0);
                };
                std::int64_t rl = max_rl;
                bool hit = false;
                if (m == MonitorMethod::apc) {
                    const double r0 = rep.apc_calibration->r0;
                    std::vector<double> z(static_cast<std::size_t>(p));
                    for (int attempt = 0; attempt < 1000 && !hit; ++attempt) {
                        std::fill(z.begin(), z.end(), 0.0);
                        bool early = false;
                        for (std::int64_t t = 1; t < cfg.change_time; ++t) {
                            draw(false);
                            if (apc_update(z.data(), s.data(), p, t, apc) > r0) {
                                early = true;
                                break;
                            }
                        }
                        if (early) {
                            ++restarts[i];
                            continue;
                        }
                        for (std::int64_t k = 1; k <= max_rl; ++k) {
                            draw(true);
                            if (apc_update(z.data(), s.data(), p, cfg.change_time - 1 + k, apc) > r0) {
                                rl = k;
                                hit = true;
                                break;
                            }
                        }
                        break;
                    }
                } else {
                    for (std::int64_t k = 1; k <= max_rl; ++k) {
                        draw(true);
                        if (t2_q_from_standardized(model, s.data(), *rep.pca_limits).alarm) {
                            rl = k;
                            hit = true;
                            break;
                        }
                    }
                }
                rls[i] = rl;
                censored[i] = hit ? 0 : 1;
            });
            const auto summary =
                summarize_run_lengths(rls, static_cast<std::size_t>(std::count(censored.begin(), censored.end(), 1)));
            cell.arl = summary.mean;
            cell.stderr_ = summary.stderr_;
            cell.censored = summary.censored;
            cell.restarts = std::accumulate(restarts.begin(), restarts.end(), std::size_t{0});
            cell.run_lengths = std::move(rls);
            rep.cells.push_back(std::move(cell));
        }
    }
    rep.seconds = seconds_since(start);
    return rep;
}

// ---------------------------------------------------------------------------

SelectionScore score_selection(const std::vector<Index>& selected, const std::vector<Index>& truth, Index p) {
    const std::set<Index> sel(selected.begin(), selected.end());
    const std::set<Index> tru(truth.begin(), truth.end());
    std::size_t tp = 0;
    for (Index j : sel)
        if (tru.count(j)) ++tp;
    const std::size_t fp = sel.size() - tp;
    const std::size_t fn = tru.size() - tp;
    const auto negatives = static_cast<double>(p) - static_cast<double>(tru.size());

    SelectionScore s;
    s.fn_pct = tru.empty() ? 0.0 : 100.0 * static_cast<double>(fn) / static_cast<double>(tru.size());
    s.fp_pct = negatives > 0.0 ? 100.0 * static_cast<double>(fp) / negatives : 0.0;
    s.pss = static_cast<double>(fp + fn);
    if (tru.empty()) {
        s.f1_undefined = true;
        s.f1 = 0.0;
        return s;
    }
    const double precision = sel.empty() ? 0.0 : static_cast<double>(tp) / static_cast<double>(sel.size());
    const double recall = static_cast<double>(tp) / static_cast<double>(tru.size());
    s.f1 = precision + recall > 0.0 ? 2.0 * precision * recall / (precision + recall) : 0.0;
    return s;
}

const DiagnosisCell* DiagnosisReport::find(DiagnosisMethod m, double ps, double delta) const {
    for (const auto& c : cells)
        if (c.method == m && std::abs(c.shift_fraction - ps) < 1e-12 && std::abs(c.delta - delta) < 1e-12) return &c;
    return nullptr;
}

DiagnosisReport run_diagnosis_experiment(const DiagnosisConfig& cfg) {
    validate(cfg.scenario);
    if (cfg.reps < 1 || cfg.samples < 1) throw std::invalid_argument("diagnosis experiment: reps and samples must be positive");
    const auto start = Clock::now();
    const Index p = cfg.scenario.p;

    DiagnosisReport rep;
    rep.config = cfg;
    struct CellKey {
        double ps;
        double delta;
    };
    std::vector<CellKey> keys;
    for (double ps : cfg.shift_fractions)
        for (double d : cfg.deltas) keys.push_back({ps, d});

    const std::size_t nm = cfg.methods.size();
    // scores[key][method][rep]
    std::vector<std::vector<std::vector<SelectionScore>>> scores(
        keys.size(), std::vector<std::vector<SelectionScore>>(nm, std::vector<SelectionScore>(cfg.reps)));

    const bool fixed_cov = cfg.scenario.kind == ScenarioKind::ar1;
    const std::optional<PCModel> shared =
        fixed_cov ? std::optional<PCModel>(from_known(Vector::Zero(p), gen_covariance(cfg.scenario))) : std::nullopt;

    parallel_for(cfg.reps, cfg.workers, [&](std::size_t i) {
        for (std::size_t k = 0; k < keys.size(); ++k) {
            // One stream per replication, shared by all cells: each cell sees
            // the same covariance, shifted index set (for equal PS) and noise.
            Engine eng = make_engine(cfg.seed, i);
            std::optional<PCModel> own;
            if (!fixed_cov) own.emplace(from_known(Vector::Zero(p), gen_covariance(cfg.scenario, eng)));
            const PCModel& model = fixed_cov ? *shared : *own;

            ScenarioSpec spec = cfg.scenario;
            spec.shift_fraction = keys[k].ps;
            spec.delta = keys[k].delta;
            ScenarioSpec unit = spec;
            unit.delta = 1.0;
            const Vector pattern = gen_shift(unit, eng);
            const Vector mu = pattern * spec.delta;
            std::vector<Index> truth;
            for (Index j = 0; j < p; ++j)
                if (pattern[j] != 0.0 && spec.delta != 0.0) truth.push_back(j);
            const Matrix x = draw_samples(model, mu, cfg.samples, eng);

            for (std::size_t mi = 0; mi < nm; ++mi) {
                const DiagnosisResult res = cfg.methods[mi] == DiagnosisMethod::pcsr ? diagnose(model, x, cfg.path)
                                                                                     : diagnose_leb(model, x, cfg.path);
                scores[k][mi][i] = score_selection(res.best.support, truth, p);
            }
        }
    });

    for (std::size_t k = 0; k < keys.size(); ++k) {
        for (std::size_t mi = 0; mi < nm; ++mi) {
            DiagnosisCell cell;
            cell.method = cfg.methods[mi];
            cell.shift_fraction = keys[k].ps;
            cell.delta = keys[k].delta;
            cell.per_rep = scores[k][mi];
            for (const auto& s : cell.per_rep) {
                cell.mean.fp_pct += s.fp_pct;
                cell.mean.fn_pct += s.fn_pct;
                cell.mean.pss += s.pss;
                cell.mean.f1 += s.f1;
                if (s.f1_undefined) ++cell.f1_undefined;
            }
            const auto n = static_cast<double>(cfg.reps);
            cell.mean.fp_pct /= n;
            cell.mean.fn_pct /= n;
            cell.mean.pss /= n;
            cell.mean.f1 /= n;
            cell.mean.f1_undefined = cell.f1_undefined > 0;
            rep.cells.push_back(std::move(cell));
        }
    }
    rep.seconds = seconds_since(start);
    return rep;
}

// ---------------------------------------------------------------------------

std::string to_string(ScenarioKind k) {
    switch (k) {
    case ScenarioKind::random_wishart: return "random_wishart";
    case ScenarioKind::block_diagonal: return "block_diagonal";
    case ScenarioKind::ar1: return "ar1";
    }
    return "?";
}
std::string to_string(Type1Kind k) { return k == Type1Kind::iid_chisq ? "iid_chisq" : "ewma_pipeline"; }
std::string to_string(MonitorMethod m) { return m == MonitorMethod::apc ? "apc" : "pca_t2q"; }
std::string to_string(DiagnosisMethod m) { return m == DiagnosisMethod::pcsr ? "pcsr" : "leb"; }

ScenarioKind parse_scenario_kind(const std::string& s) {
    if (s == "random_wishart" || s == "wishart" || s == "I") return ScenarioKind::random_wishart;
    if (s == "block_diagonal" || s == "block" || s == "II") return ScenarioKind::block_diagonal;
    if (s == "ar1" || s == "III") return ScenarioKind::ar1;
    throw std::invalid_argument("unknown scenario kind '" + s + "'");
}
Type1Kind parse_type1_kind(const std::string& s) {
    if (s == "iid_chisq") return Type1Kind::iid_chisq;
    if (s == "ewma_pipeline") return Type1Kind::ewma_pipeline;
    throw std::invalid_argument("unknown type1 experiment kind '" + s + "'");
}
MonitorMethod parse_monitor_method(const std::string& s) {
    if (s == "apc") return MonitorMethod::apc;
    if (s == "pca_t2q" || s == "pca") return MonitorMethod::pca_t2q;
    throw std::invalid_argument("unknown monitoring method '" + s + "'");
}
DiagnosisMethod parse_diagnosis_method(const std::string& s) {
    if (s == "pcsr") return DiagnosisMethod::pcsr;
    if (s == "leb") return DiagnosisMethod::leb;
    throw std::invalid_argument("unknown diagnosis method '" + s + "'");
}

std::string type1_table_csv(const std::vector<Type1Result>& results) {
    if (results.empty()) return "nu\n";
    std::ostringstream os;
    os << "nu";
    for (const auto& r : results) os << ",p=" << r.config.p;
    os << '\n';
    const auto& nus = results.front().config.nus;
    for (std::size_t k = 0; k < nus.size(); ++k) {
        os << fmt(nus[k]);
        for (const auto& r : results) os << ',' << (k < r.alpha_hat.size() ? fmt(r.alpha_hat[k], 4) : "");
        os << '\n';
    }
    return os.str();
}

std::string arl_table_csv(const ArlReport& report) {
    std::ostringstream os;
    os << "delta";
    for (auto m : report.config.methods) os << ',' << to_string(m) << "_arl," << to_string(m) << "_se";
    os << '\n';
    for (double d : report.config.deltas) {
        os << fmt(d);
        for (auto m : report.config.methods) {
            const ArlCell* c = report.find(m, d);
            if (!c || c->error)
                os << ",,";
            else
                os << ',' << fmt(c->arl) << ',' << fmt(c->stderr_);
        }
        os << '\n';
    }
    return os.str();
}

std::string diagnosis_table_csv(const DiagnosisReport& report) {
    std::ostringstream os;
    os << "ps,delta";
    for (auto m : report.config.methods) {
        const auto n = to_string(m);
        os << ',' << n << "_fp_pct," << n << "_fn_pct," << n << "_pss," << n << "_f1";
    }
    os << '\n';
    for (double ps : report.config.shift_fractions) {
        for (double d : report.config.deltas) {
            os << fmt(ps) << ',' << fmt(d);
            for (auto m : report.config.methods) {
                const DiagnosisCell* c = report.find(m, ps, d);
                os << ',' << fmt(c->mean.fp_pct, 5) << ',' << fmt(c->mean.fn_pct, 5) << ',' << fmt(c->mean.pss, 5)
                   << ',' << fmt(c->mean.f1, 4);
            }
            os << '\n';
        }
    }
    return os.str();
}

nlohmann::json to_json(const Type1Result& r) {
    return {
        {"experiment", "type1"},
        {"kind", to_string(r.config.kind)},
        {"p", r.config.p},
        {"nus", r.config.nus},
        {"alpha", r.config.alpha},
        {"reps", r.config.reps},
        {"steps", r.config.steps},
        {"gamma", r.config.gamma},
        {"variance_mode", to_string(r.config.variance_mode)},
        {"seed", r.config.seed},
        {"r0", r.r0},
        {"alpha_hat", r.alpha_hat},
        {"stderr", r.stderr_},
        {"per_rep", r.per_rep},
        {"seconds", r.seconds},
    };
}

nlohmann::json to_json(const ArlReport& r) {
    nlohmann::json cells = nlohmann::json::array();
    for (const auto& c : r.cells) {
        nlohmann::json j = {{"method", to_string(c.method)}, {"delta", c.delta},        {"arl", c.arl},
                            {"stderr", c.stderr_},           {"censored", c.censored}, {"restarts", c.restarts},
                            {"run_lengths", c.run_lengths}};
        if (c.error) j["error"] = *c.error;
        cells.push_back(std::move(j));
    }
    nlohmann::json j = {
        {"experiment", "arl"},
        {"scenario", to_string(r.config.scenario.kind)},
        {"p", r.config.scenario.p},
        {"shift_fraction", r.config.scenario.shift_fraction},
        {"target_arl", r.config.target_arl},
        {"reps", r.config.reps},
        {"seed", r.config.seed},
        {"change_time", r.config.change_time},
        {"gamma", r.config.apc.gamma},
        {"nu", r.config.apc.nu},
        {"cells", cells},
        {"seconds", r.seconds},
    };
    if (r.apc_calibration) j["apc_calibration"] = report_to_json(*r.apc_calibration);
    if (r.pca_limits)
        j["pca_limits"] = {{"k", r.pca_limits->k},
                           {"t2", r.pca_limits->t2},
                           {"q", r.pca_limits->q},
                           {"empirical_rate", r.pca_limits->empirical_rate},
                           {"q_degenerate", r.pca_limits->q_degenerate}};
    return j;
}

nlohmann::json to_json(const DiagnosisReport& r) {
    nlohmann::json cells = nlohmann::json::array();
    for (const auto& c : r.cells) {
        nlohmann::json f1 = nlohmann::json::array(), fp = nlohmann::json::array(), fn = nlohmann::json::array();
        for (const auto& s : c.per_rep) {
            f1.push_back(s.f1);
            fp.push_back(s.fp_pct);
            fn.push_back(s.fn_pct);
        }
        cells.push_back({{"method", to_string(c.method)},
                         {"ps", c.shift_fraction},
                         {"delta", c.delta},
                         {"fp_pct", c.mean.fp_pct},
                         {"fn_pct", c.mean.fn_pct},
                         {"pss", c.mean.pss},
                         {"f1", c.mean.f1},
                         {"f1_undefined", c.f1_undefined},
                         {"per_rep", {{"f1", f1}, {"fp_pct", fp}, {"fn_pct", fn}}}});
    }
    return {
        {"experiment", "diagnosis"},
        {"scenario", to_string(r.config.scenario.kind)},
        {"p", r.config.scenario.p},
        {"samples", r.config.samples},
        {"reps", r.config.reps},
        {"seed", r.config.seed},
        {"cells", cells},
        {"seconds", r.seconds},
    };
}

} // namespace hdspc

namespace hdspc {

RollingImage gen_rolling_image(const RollingImageSpec& spec) {
    const Index w = spec.width;
    if (w < 2 || spec.rows < 1 || spec.training_rows < 2 || spec.change_row < 1 || !(std::abs(spec.rho) < 1.0) ||
        !(spec.noise_sd > 0.0))
        throw std::invalid_argument("rolling image: invalid specification");
    RollingImage out;
    out.mean.resize(w);
    for (Index j = 0; j < w; ++j)
        out.mean[j] = spec.base + spec.stripe_amplitude * std::cos(2.0 * M_PI * static_cast<double>(j) / 75.0);
    out.covariance.resize(w, w);
    for (Index i = 0; i < w; ++i)
        for (Index j = 0; j < w; ++j)
            out.covariance(i, j) =
                spec.noise_sd * spec.noise_sd * std::pow(spec.rho, static_cast<double>(std::abs(i - j)));
    for (const auto& [b, e] : spec.defects) {
        if (b < 0 || e > w || b >= e) throw std::invalid_argument("rolling image: defect columns out of range");
        for (Index j = b; j < e; ++j) out.shifted.push_back(j);
    }
    std::sort(out.shifted.begin(), out.shifted.end());
    out.shifted.erase(std::unique(out.shifted.begin(), out.shifted.end()), out.shifted.end());

    Engine eng = make_engine(spec.seed, 0x1A6E);
    NormalSampler normal;
    const double innov = std::sqrt(1.0 - spec.rho * spec.rho);
    auto fill = [&](Matrix& m, Index n) {
        m.resize(n, w);
        for (Index i = 0; i < n; ++i) {
            double e = normal(eng);
            for (Index j = 0; j < w; ++j) {
                if (j > 0) e = spec.rho * e + innov * normal(eng);
                m(i, j) = out.mean[j] + spec.noise_sd * e;
            }
        }
    };
    fill(out.phase1, spec.training_rows);
    fill(out.image, spec.rows);
    for (Index i = spec.change_row - 1; i < spec.rows; ++i)
        for (Index j : out.shifted) out.image(i, j) -= spec.depth * spec.noise_sd;
    return out;
}

} // namespace hdspc
