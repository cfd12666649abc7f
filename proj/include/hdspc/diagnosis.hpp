#pragma once

#include <optional>
#include <vector>

#include "json.hpp"

#include "hdspc/pca_model.hpp"
#include "hdspc/types.hpp"

namespace hdspc {

/**
 * Whitened sensing problem y* = A* mu + e*, e* ~ (0, I).
 *
 * PC domain (PCSR): y* = sqrt(m) L^{-1/2} A^T (xbar - mean), A* = sqrt(m) L^{-1/2} A^T,
 * with L the floored eigenvalues and m the number of averaged samples.
 * Original domain (LEB): A* = sqrt(m) Sigma^{-1/2}.
 */
struct SensingProblem {
    Vector y_star;
    Matrix a_star;
    Vector weights;
    Index n_averaged = 0;
    Vector pilot;               // xbar - mean, the least-squares solution
    bool weights_floored = false; // some |pilot_j| fell below the weight floor
};

enum class LassoSolver { coordinate_descent, proximal_gradient };

struct LassoOptions {
    LassoSolver solver = LassoSolver::coordinate_descent;
    // Proximal gradient stops when the relative objective change drops below
    // tol. Coordinate descent stops once the largest KKT violation is below
    // kkt_tol * max(1, ||2 A*^T y*||_inf).
    double tol = 1e-6;
    double kkt_tol = 1e-12;
    int max_iter = 10000;
    bool record_objective = false;
};

struct LassoSolution {
    Vector mu_hat;
    std::vector<Index> support;
    double r = 0.0;
    int iterations = 0;
    bool converged = false;
    double objective = 0.0;
    std::vector<double> objective_trace; // filled when record_objective is set
};

// How the BIC likelihood term is formed.
//   known_variance  RSS + df ln p          (noise is unit-variance after whitening)
//   profile         p ln(RSS / p) + df ln p
enum class BicForm { known_variance, profile };

struct BicPoint {
    double r = 0.0;
    double bic = 0.0;
    Index support_size = 0;
};

struct PathConfig {
    int points = 50;
    double decades = 4.0;
    double w_floor_rel = 1e-6;
    BicForm bic = BicForm::known_variance;
    // Score each path point by the least-squares refit on its support.
    bool refit = true;
    LassoOptions lasso;
};

struct DiagnosisResult {
    LassoSolution best;
    // Estimate the BIC was evaluated on: the refit on best.support when
    // PathConfig::refit is set, otherwise best.mu_hat.
    Vector estimate;
    std::vector<BicPoint> bic_trace;
    Vector pilot;
    bool weights_floored = false;
};

inline constexpr double kRssFloor = 1e-12;

SensingProblem build_problem(const PCModel& model, const Matrix& ooc_samples, double w_floor_rel = 1e-6);
SensingProblem build_problem_leb(const PCModel& model, const Matrix& ooc_samples, double w_floor_rel = 1e-6);

/// Smallest r with the all-zero solution: max_j |2 (A*^T y*)_j| / w_j.
double lambda_max(const SensingProblem& prob);

/// ||y* - A* mu||^2 + r sum_j w_j |mu_j|.
double lasso_objective(const SensingProblem& prob, const Vector& mu, double r);

/// Largest violation of the lasso optimality conditions at mu.
double kkt_residual(const SensingProblem& prob, const Vector& mu, double r);

LassoSolution solve_adaptive_lasso(const SensingProblem& prob, double r, const LassoOptions& opts = {},
                                   const std::optional<Vector>& warm_start = std::nullopt);

double residual_sum_of_squares(const SensingProblem& prob, const Vector& mu);
double bic_score(const SensingProblem& prob, const LassoSolution& sol, BicForm form = BicForm::known_variance);
double bic_value(double rss, Index p, Index df, BicForm form);

/// Least-squares estimate restricted to `support` (zeros elsewhere).
Vector refit_on_support(const SensingProblem& prob, const std::vector<Index>& support);

/// Geometric r grid from lambda_max down `decades` decades.
std::vector<double> regularization_path(const SensingProblem& prob, const PathConfig& cfg);

DiagnosisResult diagnose_problem(const SensingProblem& prob, const PathConfig& cfg = {});
DiagnosisResult diagnose(const PCModel& model, const Matrix& ooc_samples, const PathConfig& cfg = {});
DiagnosisResult diagnose_leb(const PCModel& model, const Matrix& ooc_samples, const PathConfig& cfg = {});

/// A Lambda^{-1} A^T with floored eigenvalues; equals Sigma^{-1}.
Matrix sensing_gram(const PCModel& model);
/// Smallest eigenvalue of sensing_gram(model); positive for any valid model.
double check_sensing_pd(const PCModel& model);

std::vector<Index> support_of(const Vector& mu);

nlohmann::json diagnosis_to_json(const DiagnosisResult& result);

} // namespace hdspc
