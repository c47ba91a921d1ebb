#include "test_util.hpp"

#include <gtest/gtest.h>

using namespace fce;
using namespace fce::testing;

namespace {

// y(t) = 0.5 y(t-1) + u(t-1) + e(t)
Dataset first_order_data(Index n, double noise_sd, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> d(0.0, 1.0);
    Matrix u(n, 1), y(n, 1);
    double yp = 0.0, up = 0.0;
    for (Index t = 0; t < n; ++t) {
        u(t, 0) = d(rng);
        y(t, 0) = 0.5 * yp + up + noise_sd * d(rng);
        yp = y(t, 0);
        up = u(t, 0);
    }
    return {u, y};
}

struct Arx2 {
    double a1 = 1.5, a2 = -0.7, b1 = 1.0, b2 = 0.5;

    Matrix run(const Matrix& u, const Matrix& e) const {
        Matrix y = Matrix::Zero(u.rows(), 1);
        for (Index t = 0; t < u.rows(); ++t) {
            double v = e(t, 0);
            if (t >= 1)
                v += a1 * y(t - 1, 0) + b1 * u(t - 1, 0);
            if (t >= 2)
                v += a2 * y(t - 2, 0) + b2 * u(t - 2, 0);
            y(t, 0) = v;
        }
        return y;
    }
};

double variance(const Matrix& v) { return (v.array() - v.mean()).square().mean(); }

// Regressors built sample by sample, lag order [y(t-1) u(t-1) ... y(t-rho) u(t-rho)].
std::pair<Matrix, Matrix> raw_regression(const Dataset& data, Index rho) {
    const Index n = data.size() - rho;
    Matrix Z(2 * rho, n), Y(1, n);
    for (Index j = 0; j < n; ++j) {
        const Index t = j + rho;
        for (Index k = 1; k <= rho; ++k) {
            Z(2 * (k - 1), j) = data.y_log()(t - k, 0);
            Z(2 * (k - 1) + 1, j) = data.u_log()(t - k, 0);
        }
        Y(0, j) = data.y_log()(t, 0);
    }
    return {Z, Y};
}

} // namespace

TEST(FitArx, NoiseFreeFirstOrderRecovery) {
    const auto data = first_order_data(200, 0.0, 1);
    const auto model = fit_arx(partition_arx(data, 1));
    ASSERT_EQ(model.theta_bar.size(), 2);
    EXPECT_NEAR(model.theta_bar(0), 0.5, 1e-8);
    EXPECT_NEAR(model.theta_bar(1), 1.0, 1e-8);
    EXPECT_NEAR(model.phi_y(1)(0, 0), 0.5, 1e-8);
    EXPECT_NEAR(model.phi_u(1)(0, 0), 1.0, 1e-8);
    EXPECT_LT(model.sigma2_hat, 1e-16);
}

TEST(FitArx, ZeroTargetsGiveZeroModel) {
    std::mt19937_64 rng(2);
    const Matrix u = random_matrix(rng, 100, 1);
    Matrix y = Matrix::Zero(100, 1);
    // Outputs must excite the regressor, so only the targets are zero: y is nonzero before rho.
    y(0, 0) = 1.0;
    const Dataset data(u, y);
    // rho = 1 targets are y(2..100), all zero; regressors include y(1) = 1 once.
    const auto model = fit_arx(partition_arx(data, 1));
    EXPECT_LT(model.theta_bar.cwiseAbs().maxCoeff(), 1e-14);
    EXPECT_EQ(model.sigma2_hat, 0.0);
}

TEST(FitArx, MatchesNormalEquations) {
    const auto data = benchmark_dataset(5);
    for (Index rho : {1, 3, 6}) {
        const auto model = fit_arx(partition_arx(data, rho));
        const auto [Z, Y] = raw_regression(data, rho);
        const Matrix G = Z * Z.transpose();
        const Vector theta = G.ldlt().solve(Z * Y.transpose());
        EXPECT_LT(rel_err(model.theta_bar, theta), 1e-10) << "rho " << rho;
        EXPECT_LT(rel_err(model.S, static_cast<double>(Z.cols()) * G.inverse()), 1e-9) << "rho " << rho;
        const Matrix res = Y - theta.transpose() * Z;
        const double s2 = res.squaredNorm() / static_cast<double>(Z.cols() - Z.rows());
        EXPECT_NEAR(model.sigma2_hat / s2, 1.0, 1e-9);
    }
}

TEST(FitArx, ModelInvariants) {
    const auto model = fit_arx(partition_arx(benchmark_dataset(6), 4));
    EXPECT_TRUE(is_positive_definite(model.S));
    const Matrix Theta = model.Theta();
    ASSERT_EQ(Theta.rows(), 1);
    ASSERT_EQ(Theta.cols(), 8);
    for (Index k = 1; k <= 4; ++k)
        EXPECT_EQ(model.phi(k), Theta.middleCols(2 * (k - 1), 2));
    const Matrix cov = model.posterior_covariance();
    EXPECT_LT(rel_err(cov, model.sigma2_hat * model.S), 1e-15);
    EXPECT_FALSE(model.has_full_covariance());
}

TEST(FitArx, ResidualsOrthogonalToRegressors) {
    const auto data = benchmark_dataset(7);
    const Index rho = 5;
    const auto model = fit_arx(partition_arx(data, rho));
    const auto [Z, Y] = raw_regression(data, rho);
    const Matrix res = Y - model.Theta() * Z;
    EXPECT_LT((Z * res.transpose()).cwiseAbs().maxCoeff() / (Z.norm() * res.norm()), 1e-12);
}

TEST(FitArx, ScaledGramSettlesWithData) {
    const auto data = first_order_data(500, 0.1, 8);
    const auto small = fit_arx(partition_arx(data.slice(0, 251), 1));
    const auto large = fit_arx(partition_arx(data, 1));
    const double ratio = large.S.trace() / small.S.trace();
    EXPECT_GT(ratio, 0.8);
    EXPECT_LT(ratio, 1.25);
    // The unscaled inverse Gram contracts like 1/N.
    const double raw = (large.S.trace() / static_cast<double>(large.N)) / (small.S.trace() / static_cast<double>(small.N));
    EXPECT_GT(raw, 0.35);
    EXPECT_LT(raw, 0.65);
}

TEST(FitArx, CollinearRegressorIsSingular) {
    std::mt19937_64 rng(9);
    const Matrix u = random_matrix(rng, 50, 1);
    try {
        (void)fit_arx(partition_arx(Dataset(u, u), 1));
        FAIL() << "expected an error";
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::SingularGram);
    }
}

TEST(ResidualSigma2, NoiseFreeIsZero) {
    const auto data = first_order_data(300, 0.0, 10);
    EXPECT_LT(std::abs(residual_sigma2(partition_arx(data, 1), 1)), 1e-16);
}

TEST(ResidualSigma2, UnitWhiteNoise) {
    const auto data = first_order_data(100000, 1.0, 11);
    const double s2 = residual_sigma2(partition_arx(data, 1), 1);
    EXPECT_GE(s2, 0.99);
    EXPECT_LE(s2, 1.01);
}

TEST(ResidualSigma2, OrderMustMatchPartition) {
    const auto parts = partition_arx(first_order_data(50, 1.0, 12), 2);
    EXPECT_THROW((void)residual_sigma2(parts, 3), Error);
}

TEST(FitArxPrior, NonInformativeLimit) {
    const auto parts = partition_arx(benchmark_dataset(13), 3);
    const auto ls = fit_arx(parts);
    const auto bayes = fit_arx_prior(parts, 1e12, Matrix::Identity(6, 6));
    EXPECT_LT(rel_err(bayes.theta_bar, ls.theta_bar), 1e-6);
    EXPECT_LT(rel_err(*bayes.sigma_theta, ls.posterior_covariance()), 1e-6);
    EXPECT_TRUE(bayes.has_full_covariance());
}

TEST(FitArxPrior, TightPriorShrinksToZero) {
    const auto parts = partition_arx(benchmark_dataset(14), 3);
    const auto bayes = fit_arx_prior(parts, 1e-12, Matrix::Identity(6, 6));
    EXPECT_LT(bayes.theta_bar.norm(), 1e-6);
}

TEST(FitArxPrior, MatchesRidgeRegression) {
    const auto data = first_order_data(40, 0.3, 15);
    const Index rho = 2;
    const auto bayes = fit_arx_prior(partition_arx(data, rho), 1.0, Matrix::Identity(4, 4));
    const auto [Z, Y] = raw_regression(data, rho);
    const double n = static_cast<double>(Z.cols());
    const Matrix Zs = Z / std::sqrt(n), Ys = Y / std::sqrt(n);
    const Matrix G = Z * Z.transpose();
    const Vector ls = G.ldlt().solve(Z * Y.transpose());
    const double s2 = (Y - ls.transpose() * Z).squaredNorm() / (n - static_cast<double>(Z.rows()));
    const Matrix A = Zs * Zs.transpose() + s2 * Matrix::Identity(4, 4);
    const Vector ridge = A.ldlt().solve(Zs * Ys.transpose());
    EXPECT_LT(rel_err(bayes.theta_bar, ridge), 1e-10);
    EXPECT_LT(rel_err(*bayes.sigma_theta, s2 * A.inverse()), 1e-10);
}

TEST(FitArxPrior, Errors) {
    const auto parts = partition_arx(first_order_data(40, 0.3, 16), 1);
    auto code_of = [&](double lambda, const Matrix& P) {
        try {
            (void)fit_arx_prior(parts, lambda, P);
        } catch (const Error& e) {
            return e.code();
        }
        return ErrorCode::Config;
    };
    EXPECT_EQ(code_of(0.0, Matrix::Identity(2, 2)), ErrorCode::NotPositiveDefinite);
    EXPECT_EQ(code_of(1.0, Matrix::Identity(3, 3)), ErrorCode::Dimension);
    EXPECT_EQ(code_of(1.0, -Matrix::Identity(2, 2)), ErrorCode::NotPositiveDefinite);
}

TEST(SelectOrderAic, SingleCandidate) {
    EXPECT_EQ(select_order_aic(benchmark_dataset(17), 1), 1);
}

TEST(SelectOrderAic, TableUsesCommonWindow) {
    const auto data = benchmark_dataset(18);
    const auto table = aic_table(data, 8);
    ASSERT_EQ(table.size(), 8U);
    // Order 1 on the common window equals a fit on the trimmed record.
    const auto direct = fit_arx(partition_arx(data.slice(7, data.size() - 7), 1));
    EXPECT_NEAR(table[0].sigma2_hat, direct.sigma2_hat, 1e-15);
    const double n = static_cast<double>(data.size() - 8);
    EXPECT_NEAR(table[2].aic, n * std::log(table[2].sigma2_hat) + 2.0 * 2.0 * 3.0, 1e-9);
}

TEST(SelectOrderAic, RecoversSecondOrderArx) {
    const Arx2 sys;
    const Index n = 2000;
    int hits = 0;
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        std::mt19937_64 rng(1000 + seed);
        const Matrix u = random_matrix(rng, n, 1);
        const Matrix e = random_matrix(rng, n, 1);
        const Matrix y_clean = sys.run(u, Matrix::Zero(n, 1));
        const Matrix y_noise = sys.run(Matrix::Zero(n, 1), e);
        // 20 dB: noise contribution variance is 1% of the noise-free output variance.
        const double scale = std::sqrt(variance(y_clean) / (100.0 * variance(y_noise)));
        const Dataset data(u, y_clean + scale * y_noise);
        if (select_order_aic(data, 15) == 2)
            ++hits;
    }
    EXPECT_GE(hits, 45);
}

TEST(SelectOrderAic, BenchmarkOrdersStayInNarrowRange) {
    std::vector<Index> orders;
    for (std::uint64_t seed = 0; seed < 20; ++seed)
        orders.push_back(select_order_aic(benchmark_dataset(seed), 15));
    std::sort(orders.begin(), orders.end());
    EXPECT_GE(orders.front(), 2);
    EXPECT_LE(orders[orders.size() / 2], 10);
}
