#include "hdspc/diagnosis.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace hdspc {

namespace {

// The least-squares term expanded once per problem:
// ||y* - A* mu||^2 = mu^T G mu - 2 b^T mu + c.
struct Quadratic {
    Matrix gram;
    Vector b;
    double c = 0.0;
    double lipschitz = 0.0; // of the gradient 2(G mu - b): 2 * lambda_max(G)
};

Quadratic expand(const SensingProblem& prob) {
    Quadratic q;
    q.gram = prob.a_star.transpose() * prob.a_star;
    q.gram = 0.5 * (q.gram + q.gram.transpose()).eval();
    q.b = prob.a_star.transpose() * prob.y_star;
    q.c = prob.y_star.squaredNorm();
    return q;
}

void ensure_lipschitz(Quadratic& q) {
    if (q.lipschitz > 0.0) return;
    Eigen::SelfAdjointEigenSolver<Matrix> es(q.gram, Eigen::EigenvaluesOnly);
    q.lipschitz = 2.0 * std::max(es.eigenvalues().maxCoeff(), std::numeric_limits<double>::min());
}

double soft(double x, double thr) {
    if (x > thr) return x - thr;
    if (x < -thr) return x + thr;
    return 0.0;
}

double penalty(const Vector& w, const Vector& mu) { return w.cwiseProduct(mu).cwiseAbs().sum(); }

double objective(const Quadratic& q, const Vector& w, const Vector& mu, double r) {
    return mu.dot(q.gram * mu) - 2.0 * q.b.dot(mu) + q.c + r * penalty(w, mu);
}

// half_grad = G mu - b
double kkt_violation(const Vector& half_grad, const Vector& w, const Vector& mu, double r) {
    double worst = 0.0;
    for (Index j = 0; j < mu.size(); ++j) {
        const double grad = 2.0 * half_grad[j];
        const double v = mu[j] != 0.0 ? std::abs(grad + r * w[j] * (mu[j] > 0.0 ? 1.0 : -1.0))
                                      : std::max(0.0, std::abs(grad) - r * w[j]);
        worst = std::max(worst, v);
    }
    return worst;
}

void validate(const SensingProblem& prob) {
    const Index p = prob.y_star.size();
    if (p < 1 || prob.a_star.rows() != p || prob.a_star.cols() != p || prob.weights.size() != p)
        throw std::invalid_argument("sensing problem: inconsistent dimensions");
    if ((prob.weights.array() <= 0.0).any()) throw std::invalid_argument("sensing problem: weights must be positive");
}

LassoSolution finish(const Quadratic& q, const SensingProblem& prob, Vector mu, double r, int iterations,
                     bool converged, std::vector<double> trace) {
    LassoSolution sol;
    sol.objective = objective(q, prob.weights, mu, r);
    sol.support = support_of(mu);
    sol.mu_hat = std::move(mu);
    sol.r = r;
    sol.iterations = iterations;
    sol.converged = converged;
    sol.objective_trace = std::move(trace);
    return sol;
}

LassoSolution solve_cd(const Quadratic& q, const SensingProblem& prob, double r, const LassoOptions& opts,
                       Vector mu) {
    const Index p = prob.y_star.size();
    const Vector& w = prob.weights;
    const double tol = opts.kkt_tol * std::max(1.0, 2.0 * q.b.cwiseAbs().maxCoeff());
    Vector g = q.gram * mu - q.b;
    std::vector<double> trace;
    if (opts.record_objective) trace.push_back(objective(q, w, mu, r));

    auto update = [&](Index j) {
        const double gjj = q.gram(j, j);
        const double old = mu[j];
        const double next = soft(old - g[j] / gjj, r * w[j] / (2.0 * gjj));
        const double delta = next - old;
        if (delta != 0.0) {
            mu[j] = next;
            g.noalias() += q.gram.col(j) * delta;
        }
        return std::abs(delta) * gjj;
    };

    int sweeps = 0;
    while (sweeps < opts.max_iter) {
        // Full sweep, then polish the active set before the next full pass.
        for (Index j = 0; j < p; ++j) update(j);
        ++sweeps;
        if (opts.record_objective) trace.push_back(objective(q, w, mu, r));

        std::vector<Index> active = support_of(mu);
        while (!active.empty() && sweeps < opts.max_iter) {
            double moved = 0.0;
            for (Index j : active) moved = std::max(moved, update(j));
            ++sweeps;
            if (opts.record_objective) trace.push_back(objective(q, w, mu, r));
            if (moved <= 0.1 * tol) break;
        }
        g = q.gram * mu - q.b;
        if (kkt_violation(g, w, mu, r) <= tol)
            return finish(q, prob, std::move(mu), r, sweeps, true, std::move(trace));
    }
    return finish(q, prob, std::move(mu), r, sweeps, false, std::move(trace));
}

LassoSolution solve_pg(Quadratic& q, const SensingProblem& prob, double r, const LassoOptions& opts, Vector mu) {
    ensure_lipschitz(q);
    const Vector& w = prob.weights;
    const double step = 1.0 / q.lipschitz;
    double f = objective(q, w, mu, r);
    std::vector<double> trace;
    if (opts.record_objective) trace.push_back(f);

    for (int it = 1; it <= opts.max_iter; ++it) {
        const Vector grad = 2.0 * (q.gram * mu - q.b);
        Vector next = mu - step * grad;
        for (Index j = 0; j < next.size(); ++j) next[j] = soft(next[j], step * r * w[j]);
        const double f_next = objective(q, w, next, r);
        mu = std::move(next);
        if (opts.record_objective) trace.push_back(f_next);
        const bool done = std::abs(f - f_next) <= opts.tol * std::max(std::abs(f), 1e-300);
        f = f_next;
        if (done) return finish(q, prob, std::move(mu), r, it, true, std::move(trace));
    }
    return finish(q, prob, std::move(mu), r, opts.max_iter, false, std::move(trace));
}

LassoSolution solve(Quadratic& q, const SensingProblem& prob, double r, const LassoOptions& opts,
                    const std::optional<Vector>& warm) {
    if (!(r >= 0.0) || !std::isfinite(r)) throw std::invalid_argument("lasso: r must be nonnegative");
    Vector mu = warm ? *warm : Vector::Zero(prob.y_star.size());
    if (mu.size() != prob.y_star.size()) throw std::invalid_argument("lasso: warm start has wrong size");
    return opts.solver == LassoSolver::coordinate_descent ? solve_cd(q, prob, r, opts, std::move(mu))
                                                          : solve_pg(q, prob, r, opts, std::move(mu));
}

Vector refit(const Quadratic& q, const Vector& pilot_size, const std::vector<Index>& support) {
    Vector mu = Vector::Zero(pilot_size.size());
    if (support.empty()) return mu;
    const auto k = static_cast<Index>(support.size());
    Matrix gs(k, k);
    Vector bs(k);
    for (Index a = 0; a < k; ++a) {
        bs[a] = q.b[support[static_cast<std::size_t>(a)]];
        for (Index c = 0; c < k; ++c)
            gs(a, c) = q.gram(support[static_cast<std::size_t>(a)], support[static_cast<std::size_t>(c)]);
    }
    const Vector sol = gs.ldlt().solve(bs);
    for (Index a = 0; a < k; ++a) mu[support[static_cast<std::size_t>(a)]] = sol[a];
    return mu;
}

SensingProblem assemble(const PCModel& model, const Matrix& ooc, double w_floor_rel, bool original_domain) {
    if (ooc.rows() < 1) throw std::invalid_argument("diagnosis: need at least one out-of-control sample");
    if (ooc.cols() != model.dim())
        throw std::invalid_argument("diagnosis: samples have " + std::to_string(ooc.cols()) +
                                    " columns, model expects " + std::to_string(model.dim()));
    if (!ooc.allFinite()) throw DataError("diagnosis: non-finite sample value");
    if (!(w_floor_rel > 0.0)) throw std::invalid_argument("diagnosis: weight floor must be positive");

    SensingProblem prob;
    prob.n_averaged = ooc.rows();
    const Vector xbar = ooc.colwise().mean();
    prob.pilot = xbar - model.mean();

    const double scale = std::sqrt(static_cast<double>(prob.n_averaged));
    // Lambda^{-1/2} A^T, rows scaled by the inverse root eigenvalues.
    const Matrix whitened = model.inv_sqrt_eigvals().asDiagonal() * model.eigvecs().transpose();
    prob.a_star = original_domain ? Matrix(scale * (model.eigvecs() * whitened)) : Matrix(scale * whitened);
    prob.y_star = prob.a_star * prob.pilot;

    const double peak = prob.pilot.cwiseAbs().maxCoeff();
    const double floor = peak > 0.0 ? w_floor_rel * peak : w_floor_rel;
    prob.weights.resize(model.dim());
    for (Index j = 0; j < model.dim(); ++j) {
        const double a = std::abs(prob.pilot[j]);
        if (a < floor) prob.weights_floored = true;
        prob.weights[j] = 1.0 / std::max(a, floor);
    }
    return prob;
}

} // namespace

std::vector<Index> support_of(const Vector& mu) {
    std::vector<Index> s;
    for (Index j = 0; j < mu.size(); ++j)
        if (mu[j] != 0.0) s.push_back(j);
    return s;
}

SensingProblem build_problem(const PCModel& model, const Matrix& ooc_samples, double w_floor_rel) {
    return assemble(model, ooc_samples, w_floor_rel, false);
}

SensingProblem build_problem_leb(const PCModel& model, const Matrix& ooc_samples, double w_floor_rel) {
    return assemble(model, ooc_samples, w_floor_rel, true);
}

double lambda_max(const SensingProblem& prob) {
    validate(prob);
    const Vector b = prob.a_star.transpose() * prob.y_star;
    return (2.0 * b.cwiseAbs()).cwiseQuotient(prob.weights).maxCoeff();
}

double lasso_objective(const SensingProblem& prob, const Vector& mu, double r) {
    return (prob.y_star - prob.a_star * mu).squaredNorm() + r * penalty(prob.weights, mu);
}

double kkt_residual(const SensingProblem& prob, const Vector& mu, double r) {
    const Vector half_grad = prob.a_star.transpose() * (prob.a_star * mu - prob.y_star);
    return kkt_violation(half_grad, prob.weights, mu, r);
}

LassoSolution solve_adaptive_lasso(const SensingProblem& prob, double r, const LassoOptions& opts,
                                   const std::optional<Vector>& warm_start) {
    validate(prob);
    Quadratic q = expand(prob);
    return solve(q, prob, r, opts, warm_start);
}

double residual_sum_of_squares(const SensingProblem& prob, const Vector& mu) {
    return (prob.y_star - prob.a_star * mu).squaredNorm();
}

double bic_value(double rss, Index p, Index df, BicForm form) {
    const double n = static_cast<double>(p);
    const double fit = std::max(rss, kRssFloor);
    const double like = form == BicForm::known_variance ? fit : n * std::log(fit / n);
    return like + static_cast<double>(df) * std::log(n);
}

double bic_score(const SensingProblem& prob, const LassoSolution& sol, BicForm form) {
    return bic_value(residual_sum_of_squares(prob, sol.mu_hat), prob.y_star.size(),
                     static_cast<Index>(sol.support.size()), form);
}

Vector refit_on_support(const SensingProblem& prob, const std::vector<Index>& support) {
    validate(prob);
    return refit(expand(prob), prob.y_star, support);
}

std::vector<double> regularization_path(const SensingProblem& prob, const PathConfig& cfg) {
    if (cfg.points < 1) throw std::invalid_argument("path: need at least one point");
    if (!(cfg.decades > 0.0)) throw std::invalid_argument("path: decades must be positive");
    const double top = lambda_max(prob);
    if (!(top > 0.0)) return {0.0};
    std::vector<double> grid(static_cast<std::size_t>(cfg.points));
    for (int i = 0; i < cfg.points; ++i) {
        const double frac = cfg.points == 1 ? 0.0 : static_cast<double>(i) / (cfg.points - 1);
        grid[static_cast<std::size_t>(i)] = top * std::pow(10.0, -cfg.decades * frac);
    }
    return grid;
}

DiagnosisResult diagnose_problem(const SensingProblem& prob, const PathConfig& cfg) {
    validate(prob);
    Quadratic q = expand(prob);
    const auto grid = regularization_path(prob, cfg);
    const Index p = prob.y_star.size();

    DiagnosisResult out;
    out.pilot = prob.pilot;
    out.weights_floored = prob.weights_floored;
    std::optional<Vector> warm;
    double best_bic = std::numeric_limits<double>::infinity();
    for (double r : grid) {
        LassoSolution sol = solve(q, prob, r, cfg.lasso, warm);
        warm = sol.mu_hat;
        const Vector scored = cfg.refit ? refit(q, prob.y_star, sol.support) : sol.mu_hat;
        const double bic = bic_value(residual_sum_of_squares(prob, scored), p,
                                     static_cast<Index>(sol.support.size()), cfg.bic);
        out.bic_trace.push_back({r, bic, static_cast<Index>(sol.support.size())});
        if (bic < best_bic) {
            best_bic = bic;
            out.best = std::move(sol);
            out.estimate = scored;
        }
    }
    return out;
}

DiagnosisResult diagnose(const PCModel& model, const Matrix& ooc_samples, const PathConfig& cfg) {
    return diagnose_problem(build_problem(model, ooc_samples, cfg.w_floor_rel), cfg);
}

DiagnosisResult diagnose_leb(const PCModel& model, const Matrix& ooc_samples, const PathConfig& cfg) {
    return diagnose_problem(build_problem_leb(model, ooc_samples, cfg.w_floor_rel), cfg);
}

Matrix sensing_gram(const PCModel& model) {
    const Vector inv = model.floored_eigvals().cwiseInverse();
    Matrix c = model.eigvecs() * inv.asDiagonal() * model.eigvecs().transpose();
    return 0.5 * (c + c.transpose());
}

double check_sensing_pd(const PCModel& model) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(sensing_gram(model), Eigen::EigenvaluesOnly);
    return es.eigenvalues().minCoeff();
}

nlohmann::json diagnosis_to_json(const DiagnosisResult& result) {
    nlohmann::json trace = nlohmann::json::array();
    for (const auto& pt : result.bic_trace)
        trace.push_back({{"r", pt.r}, {"bic", pt.bic}, {"support_size", pt.support_size}});
    const auto& mu = result.best.mu_hat;
    const auto& est = result.estimate;
    return {
        {"support", result.best.support},
        {"mu_hat", std::vector<double>(mu.data(), mu.data() + mu.size())},
        {"mu_refit", std::vector<double>(est.data(), est.data() + est.size())},
        {"r", result.best.r},
        {"converged", result.best.converged},
        {"weights_floored", result.weights_floored},
        {"bic_trace", trace},
    };
}

} // namespace hdspc
