#pragma once

// Multivariate Gaussian over the flat weight space: density, sampling with
// clamp-to-support truncation, and covariance health checks.

#include "saop/common.hpp"

#include <nlohmann/json.hpp>

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <optional>

namespace saop {

/// Thrown when the covariance cannot be factorized even after jitter. The
/// search treats this as the distribution having collapsed.
class DegenerateDistribution : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct GaussianParams {
    Vector mean;
    Matrix covariance;

    Eigen::Index dim() const { return mean.size(); }

    static GaussianParams isotropic(const Vector& mean, double variance) {
        return {mean, variance * Matrix::Identity(mean.size(), mean.size())};
    }

    void validate() const {
        if (covariance.rows() != dim() || covariance.cols() != dim()) {
            throw std::invalid_argument("GaussianParams: covariance is not D x D");
        }
        if (dim() == 0) return;
        const double scale = std::max(covariance.cwiseAbs().maxCoeff(), std::numeric_limits<double>::min());
        if ((covariance - covariance.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale) {
            throw std::invalid_argument("GaussianParams: covariance is not symmetric");
        }
        if (!covariance.allFinite()) return;  // reported as degenerate by factorize
        Eigen::SelfAdjointEigenSolver<Matrix> es(covariance, Eigen::EigenvaluesOnly);
        if (es.eigenvalues().minCoeff() < -1e-10 * std::abs(covariance.trace())) {
            throw std::invalid_argument("GaussianParams: covariance is not positive semi-definite");
        }
    }

    nlohmann::json to_json() const {
        std::vector<double> mu(mean.data(), mean.data() + mean.size());
        std::vector<double> sigma;
        sigma.reserve(static_cast<std::size_t>(covariance.size()));
        for (Eigen::Index r = 0; r < covariance.rows(); ++r) {
            for (Eigen::Index c = 0; c < covariance.cols(); ++c) sigma.push_back(covariance(r, c));
        }
        return {{"mu", mu}, {"sigma", sigma}};
    }

    static GaussianParams from_json(const nlohmann::json& j) {
        const auto mu = j.at("mu").get<std::vector<double>>();
        const auto sigma = j.at("sigma").get<std::vector<double>>();
        const auto d = static_cast<Eigen::Index>(mu.size());
        if (static_cast<Eigen::Index>(sigma.size()) != d * d) {
            throw std::invalid_argument("GaussianParams: sigma must hold D*D row-major entries");
        }
        GaussianParams p{Eigen::Map<const Vector>(mu.data(), d), Matrix(d, d)};
        for (Eigen::Index r = 0; r < d; ++r) {
            for (Eigen::Index c = 0; c < d; ++c) p.covariance(r, c) = sigma[static_cast<std::size_t>(r * d + c)];
        }
        return p;
    }
};

/// Diagonal jitter for covariances that do not factorize as given:
/// 1e-10 * trace / D, floored so that an exactly zero covariance still
/// factorizes.
inline double covariance_jitter(const Matrix& cov) {
    const double d = static_cast<double>(std::max<Eigen::Index>(1, cov.rows()));
    return std::max(1e-10 * cov.trace() / d, 1e-20);
}

/// Lower Cholesky factor of the covariance with its log-determinant.
struct GaussianFactor {
    Matrix lower;
    double log_det = 0.0;
};

inline GaussianFactor factorize(const GaussianParams& params) {
    params.validate();
    const Matrix& cov = params.covariance;
    if (!cov.allFinite()) throw DegenerateDistribution("covariance has non-finite entries");
    Matrix sym = 0.5 * (cov + cov.transpose());
    auto try_factor = [](const Matrix& m) -> std::optional<GaussianFactor> {
        Eigen::LLT<Matrix> llt(m);
        if (llt.info() != Eigen::Success) return std::nullopt;
        GaussianFactor f{llt.matrixL(), 0.0};
        const Vector diag = f.lower.diagonal();
        if ((diag.array() <= 0.0).any() || !diag.allFinite()) return std::nullopt;
        f.log_det = 2.0 * diag.array().log().sum();
        return f;
    };
    if (auto f = try_factor(sym)) return *f;
    // Escalate the jitter until the factorization succeeds.
    double jitter = covariance_jitter(cov);
    for (int attempt = 0; attempt < 12; ++attempt, jitter *= 10.0) {
        Matrix jittered = sym;
        jittered.diagonal().array() += jitter;
        if (auto f = try_factor(jittered)) return *f;
    }
    throw DegenerateDistribution("Cholesky factorization failed");
}

inline double log_density(const GaussianParams& params, const GaussianFactor& factor, const Vector& w) {
    const Vector z = factor.lower.triangularView<Eigen::Lower>().solve(w - params.mean);
    const double d = static_cast<double>(params.dim());
    return -0.5 * (d * std::log(2.0 * std::numbers::pi) + factor.log_det + z.squaredNorm());
}

inline double log_density(const GaussianParams& params, const Vector& w) {
    return log_density(params, factorize(params), w);
}

inline double density(const GaussianParams& params, const Vector& w) { return std::exp(log_density(params, w)); }

/// count x D matrix of draws mu + L z, each clamped componentwise into the
/// support box.
inline Matrix sample(const GaussianParams& params, const GaussianFactor& factor, int count, const Box& support,
                     Rng& rng) {
    if (count < 1) throw std::invalid_argument("sample: count must be positive");
    if (support.dim() != params.dim()) throw std::invalid_argument("sample: support dimension mismatch");
    const Eigen::Index d = params.dim();
    std::normal_distribution<double> normal;
    Matrix out(count, d);
    Vector z(d);
    for (int r = 0; r < count; ++r) {
        for (Eigen::Index i = 0; i < d; ++i) z[i] = normal(rng);
        const Vector w = params.mean + factor.lower.triangularView<Eigen::Lower>() * z;
        out.row(r) = support.clamp(w).transpose();
    }
    return out;
}

inline Matrix sample(const GaussianParams& params, int count, const Box& support, Rng& rng) {
    return sample(params, factorize(params), count, support, rng);
}

/// Largest absolute eigenvalue of a symmetric matrix.
inline double spectral_norm(const Matrix& sym) {
    if (sym.size() == 0) return 0.0;
    Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (sym + sym.transpose()), Eigen::EigenvaluesOnly);
    return es.eigenvalues().cwiseAbs().maxCoeff();
}

inline bool is_symmetric(const Matrix& m, double rel_tol = 1e-12) {
    const double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
    return (m - m.transpose()).cwiseAbs().maxCoeff() <= rel_tol * scale;
}

/// Symmetric and every eigenvalue >= -tol * trace.
inline bool is_symmetric_psd(const Matrix& m, double tol = 1e-10) {
    if (!m.allFinite() || !is_symmetric(m)) return false;
    Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (m + m.transpose()), Eigen::EigenvaluesOnly);
    return es.eigenvalues().minCoeff() >= -tol * std::max(std::abs(m.trace()), 1e-300);
}

}  // namespace saop
