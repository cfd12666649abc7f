#include "hdspc/pca_model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <vector>

namespace hdspc {

namespace {

constexpr double kOrthoTol = 1e-8;
constexpr Index kExtendedPrecisionMaxDim = 512;

// Eigen returns ascending eigenvalues; reorder descending (ties keep their
// original order), clamp round-off
// negatives to zero and make the largest-magnitude entry of every column
// positive so results are reproducible.
void canonicalize(Vector& vals, Matrix& vecs) {
    const Index p = vals.size();
    std::vector<Index> order(static_cast<std::size_t>(p));
    for (Index j = 0; j < p; ++j) order[static_cast<std::size_t>(j)] = j;
    std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) { return vals[a] > vals[b]; });
    Vector sorted_vals(p);
    Matrix sorted_vecs(vecs.rows(), p);
    for (Index j = 0; j < p; ++j) {
        sorted_vals[j] = vals[order[static_cast<std::size_t>(j)]];
        sorted_vecs.col(j) = vecs.col(order[static_cast<std::size_t>(j)]);
    }
    vals = std::move(sorted_vals);
    vecs = std::move(sorted_vecs);
    for (Index j = 0; j < p; ++j) {
        if (vals[j] < 0.0) vals[j] = 0.0;
        Index arg = 0;
        vecs.col(j).cwiseAbs().maxCoeff(&arg);
        if (vecs(arg, j) < 0.0) vecs.col(j) *= -1.0;
    }
}

PCModel decompose(const Vector& mean, const Matrix& cov, double eig_floor, bool relative_floor,
                  ModelSource source) {
    Vector vals;
    Matrix vecs;
    if (cov.rows() <= kExtendedPrecisionMaxDim) {
        // Extended precision keeps A diag(1/lambda) A^T close to inv(Sigma)
        // for ill-conditioned covariances.
        using Wide = Eigen::Matrix<long double, Eigen::Dynamic, Eigen::Dynamic>;
        Eigen::SelfAdjointEigenSolver<Wide> es(cov.cast<long double>());
        if (es.info() != Eigen::Success) throw DataError("eigendecomposition failed");
        vals = es.eigenvalues().cast<double>();
        vecs = es.eigenvectors().cast<double>();
    } else {
        Eigen::SelfAdjointEigenSolver<Matrix> es(cov);
        if (es.info() != Eigen::Success) throw DataError("eigendecomposition failed");
        vals = es.eigenvalues();
        vecs = es.eigenvectors();
    }
    canonicalize(vals, vecs);
    if (relative_floor) {
        eig_floor = kDefaultRelativeEigFloor * vals[0];
        if (!(eig_floor > 0.0)) eig_floor = std::numeric_limits<double>::min();
    }
    return PCModel(mean, std::move(vecs), std::move(vals), eig_floor, source);
}

void check_samples(const Matrix& samples) {
    if (samples.rows() < 2) throw std::invalid_argument("fit_pca: need at least 2 observations");
    if (samples.cols() < 1) throw std::invalid_argument("fit_pca: need at least 1 stream");
    if (!samples.allFinite()) throw DataError("fit_pca: non-finite value in samples");
}

Matrix sample_covariance(const Matrix& samples, const Vector& mean) {
    const Matrix centered = samples.rowwise() - mean.transpose();
    Matrix cov = (centered.adjoint() * centered) / static_cast<double>(samples.rows() - 1);
    return (cov + cov.transpose()) * 0.5;
}

void check_covariance(const Vector& mean, const Matrix& cov) {
    if (cov.rows() != cov.cols() || cov.rows() != mean.size())
        throw std::invalid_argument("from_known: covariance must be p x p with p = mean size");
    if (!cov.allFinite() || !mean.allFinite()) throw DataError("from_known: non-finite input");
    if ((cov - cov.transpose()).cwiseAbs().maxCoeff() > 1e-10)
        throw std::invalid_argument("from_known: covariance is not symmetric");
}

} // namespace

PCModel::PCModel(Vector mean, Matrix eigvecs, Vector eigvals, double eig_floor, ModelSource source)
    : mean_(std::move(mean)),
      eigvecs_(std::move(eigvecs)),
      eigvals_(std::move(eigvals)),
      eig_floor_(eig_floor),
      source_(source) {
    const Index p = mean_.size();
    if (p < 1) throw std::invalid_argument("PCModel: dimension must be positive");
    if (eigvecs_.rows() != p || eigvecs_.cols() != p || eigvals_.size() != p)
        throw std::invalid_argument("PCModel: inconsistent dimensions");
    if (!(eig_floor_ > 0.0) || !std::isfinite(eig_floor_))
        throw std::invalid_argument("PCModel: eig_floor must be positive");
    if (!mean_.allFinite() || !eigvecs_.allFinite() || !eigvals_.allFinite())
        throw DataError("PCModel: non-finite entries");
    for (Index j = 0; j < p; ++j) {
        if (eigvals_[j] < 0.0) throw std::invalid_argument("PCModel: negative eigenvalue");
        if (j > 0 && eigvals_[j] > eigvals_[j - 1])
            throw std::invalid_argument("PCModel: eigenvalues must be nonincreasing");
    }
    const Matrix gram = eigvecs_.transpose() * eigvecs_;
    if ((gram - Matrix::Identity(p, p)).cwiseAbs().maxCoeff() > kOrthoTol)
        throw std::invalid_argument("PCModel: eigenvectors are not orthonormal");

    floored_ = eigvals_.cwiseMax(eig_floor_);
    inv_sqrt_ = floored_.cwiseSqrt().cwiseInverse();
}

Matrix PCModel::covariance() const {
    return eigvecs_ * eigvals_.asDiagonal() * eigvecs_.transpose();
}

PCModel fit_pca(const Matrix& samples, double eig_floor) {
    if (!(eig_floor > 0.0)) throw std::invalid_argument("fit_pca: eig_floor must be positive");
    check_samples(samples);
    const Vector mean = samples.colwise().mean();
    return decompose(mean, sample_covariance(samples, mean), eig_floor, false, ModelSource::fitted);
}

PCModel fit_pca(const Matrix& samples) {
    check_samples(samples);
    const Vector mean = samples.colwise().mean();
    return decompose(mean, sample_covariance(samples, mean), 0.0, true, ModelSource::fitted);
}

PCModel from_known(const Vector& mean, const Matrix& covariance, double eig_floor) {
    if (!(eig_floor > 0.0)) throw std::invalid_argument("from_known: eig_floor must be positive");
    check_covariance(mean, covariance);
    return decompose(mean, covariance, eig_floor, false, ModelSource::known);
}

PCModel from_known(const Vector& mean, const Matrix& covariance) {
    check_covariance(mean, covariance);
    return decompose(mean, covariance, 0.0, true, ModelSource::known);
}

ScoreVector project(const PCModel& model, const Vector& x) {
    if (x.size() != model.dim())
        throw std::invalid_argument("project: observation has " + std::to_string(x.size()) +
                                    " values, model expects " + std::to_string(model.dim()));
    ScoreVector s;
    s.raw = model.eigvecs().transpose() * (x - model.mean());
    s.standardized = s.raw.cwiseProduct(model.inv_sqrt_eigvals());
    return s;
}

ScoreVector project(const PCModel& model, const Observation& x) { return project(model, x.values); }

Vector reconstruct(const PCModel& model, const Vector& raw_scores) {
    if (raw_scores.size() != model.dim()) throw std::invalid_argument("reconstruct: dimension mismatch");
    return model.eigvecs() * raw_scores + model.mean();
}

Vector shift_magnitude_profile(const PCModel& model, const Vector& mu) {
    if (mu.size() != model.dim()) throw std::invalid_argument("shift_magnitude_profile: dimension mismatch");
    return (model.eigvecs().transpose() * mu).cwiseProduct(model.inv_sqrt_eigvals());
}

std::string to_string(ModelSource source) { return source == ModelSource::fitted ? "fitted" : "known"; }

nlohmann::json model_to_json(const PCModel& model) {
    const Index p = model.dim();
    std::vector<double> vecs;
    vecs.reserve(static_cast<std::size_t>(p * p));
    for (Index i = 0; i < p; ++i)
        for (Index j = 0; j < p; ++j) vecs.push_back(model.eigvecs()(i, j));
    return {
        {"p", p},
        {"mean", std::vector<double>(model.mean().data(), model.mean().data() + p)},
        {"eigvals", std::vector<double>(model.eigvals().data(), model.eigvals().data() + p)},
        {"eigvecs", vecs},
        {"eig_floor", model.eig_floor()},
        {"source", to_string(model.source())},
    };
}

PCModel model_from_json(const nlohmann::json& doc) {
    try {
        const auto p = doc.at("p").get<Index>();
        if (p < 1) throw DataError("model: p must be positive");
        const auto mean = doc.at("mean").get<std::vector<double>>();
        const auto vals = doc.at("eigvals").get<std::vector<double>>();
        const auto vecs = doc.at("eigvecs").get<std::vector<double>>();
        if (static_cast<Index>(mean.size()) != p || static_cast<Index>(vals.size()) != p ||
            static_cast<Index>(vecs.size()) != p * p)
            throw DataError("model: array lengths do not match p");
        const auto src = doc.at("source").get<std::string>();
        if (src != "fitted" && src != "known") throw DataError("model: unknown source '" + src + "'");

        Matrix a(p, p);
        for (Index i = 0; i < p; ++i)
            for (Index j = 0; j < p; ++j) a(i, j) = vecs[static_cast<std::size_t>(i * p + j)];
        return PCModel(Eigen::Map<const Vector>(mean.data(), p), std::move(a),
                       Eigen::Map<const Vector>(vals.data(), p), doc.at("eig_floor").get<double>(),
                       src == "fitted" ? ModelSource::fitted : ModelSource::known);
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("model: malformed document: ") + e.what());
    }
}

void save_model(const PCModel& model, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path.string());
    out << model_to_json(model).dump(1) << '\n';
}

PCModel load_model(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot read " + path.string());
    nlohmann::json doc;
    try {
        in >> doc;
    } catch (const nlohmann::json::exception& e) {
        throw DataError(path.string() + ": " + e.what());
    }
    return model_from_json(doc);
}

} // namespace hdspc
