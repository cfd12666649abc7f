#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "json.hpp"

#include "hdspc/types.hpp"

namespace hdspc {

enum class ModelSource { fitted, known };

/**
 * Phase-I PCA reference: in-control mean, full eigenvector matrix (column j is
 * the j-th eigenvector) and eigenvalues sorted in decreasing order.
 *
 * No truncation is performed; monitoring needs the low-variance components as
 * much as the leading ones. Eigenvalues below `eig_floor` are replaced by the
 * floor whenever scores are standardized, so rank-deficient Phase-I data does
 * not produce infinite standardized scores.
 *
 * Immutable after construction.
 */
class PCModel {
public:
    PCModel(Vector mean, Matrix eigvecs, Vector eigvals, double eig_floor,
            ModelSource source = ModelSource::known);

    Index dim() const { return mean_.size(); }
    const Vector& mean() const { return mean_; }
    const Matrix& eigvecs() const { return eigvecs_; }
    const Vector& eigvals() const { return eigvals_; }
    double eig_floor() const { return eig_floor_; }
    ModelSource source() const { return source_; }

    /// max(lambda_j, eig_floor) for every component.
    const Vector& floored_eigvals() const { return floored_; }
    /// 1 / sqrt(max(lambda_j, eig_floor)).
    const Vector& inv_sqrt_eigvals() const { return inv_sqrt_; }

    /// A diag(lambda) A^T.
    Matrix covariance() const;

private:
    Vector mean_;
    Matrix eigvecs_;
    Vector eigvals_;
    double eig_floor_;
    ModelSource source_;
    Vector floored_;
    Vector inv_sqrt_;
};

struct Observation {
    Vector values;
    std::int64_t t = 0;
};

struct ScoreVector {
    Vector raw;          // y = A^T (x - mean)
    Vector standardized; // y_j / sqrt(max(lambda_j, floor))
};

inline constexpr double kDefaultRelativeEigFloor = 1e-8;

/// Sample mean + 1/(n-1) covariance of the rows of `samples`, then a full
/// symmetric eigendecomposition. Throws DataError on non-finite input and
/// std::invalid_argument when n < 2 or eig_floor <= 0.
PCModel fit_pca(const Matrix& samples, double eig_floor);
/// As above with the floor set to kDefaultRelativeEigFloor * lambda_1.
PCModel fit_pca(const Matrix& samples);

/// Model from an exactly known covariance (simulation scenarios).
PCModel from_known(const Vector& mean, const Matrix& covariance, double eig_floor);
PCModel from_known(const Vector& mean, const Matrix& covariance);

ScoreVector project(const PCModel& model, const Vector& x);
ScoreVector project(const PCModel& model, const Observation& x);

/// x = A y + mean.
Vector reconstruct(const PCModel& model, const Vector& raw_scores);

/// Standardized expected shift along each PC: (A_j^T mu) / sqrt(lambda_j),
/// i.e. ||mu|| cos(theta_j) / sqrt(lambda_j).
Vector shift_magnitude_profile(const PCModel& model, const Vector& mu);

// Persistence. Doubles are written in shortest round-trip form, so a
// save/load cycle reproduces every value bit for bit.
nlohmann::json model_to_json(const PCModel& model);
PCModel model_from_json(const nlohmann::json& doc);
void save_model(const PCModel& model, const std::filesystem::path& path);
PCModel load_model(const std::filesystem::path& path);

std::string to_string(ModelSource source);

} // namespace hdspc
