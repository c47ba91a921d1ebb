#pragma once

// Estimation of the truncated one-step ARX predictor
//
//     y(t) = sum_{k=1..rho} phi_k z(t-k) + e(t),   phi_k = [phi_k^y  phi_k^u]
//
// together with its posterior uncertainty, the innovation variance and
// AIC-based order selection.
//
// Coefficients are kept in lag order, Theta = [phi_1 ... phi_rho], so the
// regressor of a sample is [z(t-1); ...; z(t-rho)]. The Hankel Z_P stores the
// oldest lag first, hence the block reversal before every regression.

#include "hankel_data.hpp"

#include <optional>

namespace fce {

struct ArxModel {
    Index rho = 0;
    Index m = 0;
    Index p = 0;
    Index N = 0;            // regression columns used for the fit
    Vector theta_bar;       // vec(Theta), column-major over the p x (m+p)rho matrix
    Matrix S;               // inverse Gram of the 1/sqrt(N)-scaled lag-ordered regressor
    double sigma2_hat = 0.0;
    // Posterior covariance for fits under an informative prior. When empty the
    // covariance is sigma2_hat * kron(S, I_p).
    std::optional<Matrix> sigma_theta;

    [[nodiscard]] Index regressor_dim() const noexcept { return (m + p) * rho; }

    [[nodiscard]] Matrix Theta() const {
        return Eigen::Map<const Matrix>(theta_bar.data(), p, regressor_dim());
    }
    [[nodiscard]] Matrix phi(Index k) const { return Theta().middleCols((k - 1) * (m + p), m + p); }
    [[nodiscard]] Matrix phi_y(Index k) const { return phi(k).leftCols(p); }
    [[nodiscard]] Matrix phi_u(Index k) const { return phi(k).rightCols(m); }

    [[nodiscard]] bool has_full_covariance() const noexcept { return sigma_theta.has_value(); }

    /// Sigma_theta materialised at full size p(m+p)rho.
    [[nodiscard]] Matrix posterior_covariance() const {
        if (sigma_theta)
            return *sigma_theta;
        const Index d = regressor_dim();
        Matrix cov = Matrix::Zero(d * p, d * p);
        for (Index i = 0; i < d; ++i)
            for (Index j = 0; j < d; ++j)
                for (Index k = 0; k < p; ++k)
                    cov(i * p + k, j * p + k) = sigma2_hat * S(i, j);
        return cov;
    }
};

namespace detail {

inline constexpr double kGramConditionLimit = 1e12;

struct ArxRegression {
    Matrix Z;  // d x N, unscaled, lag ordered
    Matrix Y;  // p x N, unscaled
};

inline ArxRegression arx_regression(const PartitionedData& parts) {
    require(parts.arx_Z_P.values.size() > 0, ErrorCode::Dimension, "partition has no ARX block");
    return {reverse_row_blocks(parts.arx_Z_P.unscaled(), parts.m + parts.p), parts.Y_next.unscaled()};
}

struct LeastSquares {
    Matrix Theta;     // p x d
    Matrix R;         // d x d upper triangular factor of Z^T
    Matrix residual;  // p x N
};

inline LeastSquares solve_least_squares(const Matrix& Z, const Matrix& Y) {
    const Index d = Z.rows();
    const Index n = Z.cols();
    require(n >= d, ErrorCode::SingularGram,
            "regressor has " + std::to_string(d) + " rows but only " + std::to_string(n) + " samples");

    Eigen::HouseholderQR<Matrix> qr(Z.transpose());
    Matrix R = qr.matrixQR().topRows(d).triangularView<Eigen::Upper>();
    Eigen::JacobiSVD<Matrix> svd(R);
    const auto& sv = svd.singularValues();
    const double smax = sv(0);
    const double smin = sv(d - 1);
    if (!(smax > 0.0) || smin <= 0.0 || (smax / smin) * (smax / smin) > kGramConditionLimit)
        throw Error(ErrorCode::SingularGram, "Gram condition number exceeds 1e12");

    Matrix ThetaT = qr.solve(Y.transpose());
    LeastSquares ls{ThetaT.transpose(), std::move(R), Matrix()};
    ls.residual = Y - ls.Theta * Z;
    return ls;
}

inline Matrix inverse_from_triangular(const Matrix& R) {
    // (R^T R)^{-1} = R^{-1} R^{-T}
    const Index d = R.rows();
    Matrix Rinv = R.triangularView<Eigen::Upper>().solve(Matrix::Identity(d, d));
    Matrix S = Rinv * Rinv.transpose();
    return 0.5 * (S + S.transpose());
}

inline double residual_variance(const Matrix& residual, Index p, Index n, Index d) {
    require(n > d, ErrorCode::InsufficientSamples,
            "residual variance needs more samples (" + std::to_string(n) + ") than parameters (" +
                std::to_string(d) + ")");
    return residual.squaredNorm() / static_cast<double>(p * (n - d));
}

} // namespace detail

/// Least-squares (non-informative prior) fit of the ARX predictor on the one-step partition.
inline ArxModel fit_arx(const PartitionedData& parts) {
    const auto reg = detail::arx_regression(parts);
    const auto ls = detail::solve_least_squares(reg.Z, reg.Y);

    ArxModel model;
    model.rho = parts.rho;
    model.m = parts.m;
    model.p = parts.p;
    model.N = reg.Z.cols();
    model.theta_bar = Eigen::Map<const Vector>(ls.Theta.data(), ls.Theta.size());
    model.S = static_cast<double>(model.N) * detail::inverse_from_triangular(ls.R);
    // Residual energy of the unscaled regression; the scaled Hankels would give sigma^2 / N.
    model.sigma2_hat = detail::residual_variance(ls.residual, parts.p, model.N, reg.Z.rows());
    return model;
}

inline double residual_sigma2(const PartitionedData& parts, Index rho) {
    require(parts.rho == rho, ErrorCode::Dimension, "partition was built for a different order");
    const auto reg = detail::arx_regression(parts);
    const auto ls = detail::solve_least_squares(reg.Z, reg.Y);
    return detail::residual_variance(ls.residual, parts.p, reg.Z.cols(), reg.Z.rows());
}

/// Posterior of theta under the Gaussian prior theta ~ N(0, lambda * P).
///
/// mean = [kron(Z Z^T, I_p) + (s2/lambda) P^{-1}]^{-1} vec(Y Z^T)
/// cov  = s2 [kron(Z Z^T, I_p) + (s2/lambda) P^{-1}]^{-1}
///
/// with 1/sqrt(N)-scaled Z, Y and s2 the least-squares residual variance. As
/// lambda grows the result approaches fit_arx.
inline ArxModel fit_arx_prior(const PartitionedData& parts, double lambda, const Matrix& P) {
    const auto reg = detail::arx_regression(parts);
    const Index d = reg.Z.rows();
    const Index p = parts.p;
    const Index n = reg.Z.cols();
    const Index dim = d * p;
    require(lambda > 0.0, ErrorCode::NotPositiveDefinite, "prior scale lambda must be positive");
    require(P.rows() == dim && P.cols() == dim, ErrorCode::Dimension,
            "prior covariance must be " + std::to_string(dim) + " x " + std::to_string(dim));
    require(is_positive_definite(P), ErrorCode::NotPositiveDefinite, "prior covariance P is not positive definite");

    // Innovation variance from the (minimum-norm) least-squares residual.
    Eigen::CompleteOrthogonalDecomposition<Matrix> cod(reg.Z.transpose());
    const Matrix Theta_ls = cod.solve(reg.Y.transpose()).transpose();
    const double s2 = detail::residual_variance(reg.Y - Theta_ls * reg.Z, p, n, d);

    const double scale = 1.0 / static_cast<double>(n);
    const Matrix gram = scale * reg.Z * reg.Z.transpose();
    Matrix G = Matrix::Zero(dim, dim);
    for (Index i = 0; i < d; ++i)
        for (Index j = 0; j < d; ++j)
            for (Index k = 0; k < p; ++k)
                G(i * p + k, j * p + k) = gram(i, j);
    Eigen::LLT<Matrix> p_llt(P);
    G += (s2 / lambda) * p_llt.solve(Matrix::Identity(dim, dim));

    const Matrix YZ = scale * reg.Y * reg.Z.transpose();  // p x d, column-major vec matches theta
    const Vector b = Eigen::Map<const Vector>(YZ.data(), YZ.size());

    Eigen::LDLT<Matrix> g_ldlt(G);
    require(g_ldlt.info() == Eigen::Success && g_ldlt.isPositive(), ErrorCode::SingularGram,
            "posterior precision is not positive definite");

    ArxModel model;
    model.rho = parts.rho;
    model.m = parts.m;
    model.p = p;
    model.N = n;
    model.theta_bar = g_ldlt.solve(b);
    Matrix cov = s2 * g_ldlt.solve(Matrix::Identity(dim, dim));
    model.sigma_theta = 0.5 * (cov + cov.transpose());
    model.sigma2_hat = s2;
    Eigen::CompleteOrthogonalDecomposition<Matrix> gram_cod(gram);
    model.S = gram_cod.pseudoInverse();
    return model;
}

struct AicCandidate {
    Index rho;
    double sigma2_hat;
    double aic;
};

/// AIC for every order 1..rho_max on a common window of N_data - rho_max targets.
inline std::vector<AicCandidate> aic_table(const Dataset& data, Index rho_max) {
    require(rho_max >= 1, ErrorCode::Dimension, "rho_max must be at least 1");
    require(data.size() > rho_max + 1, ErrorCode::InsufficientSamples, "need N_data > rho_max + 1");
    const Index n = data.size() - rho_max;
    const double m = static_cast<double>(data.m());
    const double p = static_cast<double>(data.p());

    std::vector<AicCandidate> table;
    for (Index rho = 1; rho <= rho_max; ++rho) {
        const Dataset window = data.slice(rho_max - rho, n + rho);
        const auto model = fit_arx(partition_arx(window, rho));
        const double s2 = model.sigma2_hat;
        const double fit_term = s2 > 0.0 ? static_cast<double>(n) * p * std::log(s2) : -kInf;
        table.push_back({rho, s2, fit_term + 2.0 * p * (m + p) * static_cast<double>(rho)});
    }
    return table;
}

inline Index select_order_aic(const Dataset& data, Index rho_max) {
    const auto table = aic_table(data, rho_max);
    Index best = table.front().rho;
    double best_aic = table.front().aic;
    for (const auto& c : table)
        if (c.aic < best_aic) {
            best_aic = c.aic;
            best = c.rho;
        }
    return best;
}

} // namespace fce
