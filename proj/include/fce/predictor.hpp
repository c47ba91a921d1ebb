#pragma once

// Multi-step predictors.
//
// From ARX coefficients: the block-Toeplitz matrices Phi_y, Phi_u, Phi_P with
//     W y_f = Phi_P z_ini + Phi_u u_f,   W = I - Phi_y,
// and the lag-ordered regressor matrix Z(u_f) that writes the same relation as
// a product with Theta. From a known state-space plant: the steady-state
// innovation observer and its noise-free T-step predictions.

#include "arx_estimator.hpp"

#include <Eigen/Eigenvalues>

namespace fce {

struct PredictorForm {
    Matrix Phi_y;  // pT x pT, strictly lower block triangular
    Matrix Phi_u;  // pT x mT, strictly lower block triangular
    Matrix Phi_P;  // pT x (m+p)rho
    Matrix W;      // I - Phi_y
    Index rho = 0;
    Index T = 0;
    Index m = 0;
    Index p = 0;
};

inline PredictorForm build_forms(const ArxModel& model, Index T) {
    require(T >= 1, ErrorCode::Dimension, "horizon must be positive");
    const Index m = model.m;
    const Index p = model.p;
    const Index rho = model.rho;
    PredictorForm f{Matrix::Zero(p * T, p * T), Matrix::Zero(p * T, m * T),
                    Matrix::Zero(p * T, (m + p) * rho), Matrix(), rho, T, m, p};

    for (Index i = 1; i < T; ++i)
        for (Index j = 0; j < i; ++j) {
            const Index lag = i - j;
            if (lag > rho)
                continue;
            f.Phi_y.block(i * p, j * p, p, p) = model.phi_y(lag);
            f.Phi_u.block(i * p, j * m, p, m) = model.phi_u(lag);
        }
    // z_ini block c holds z(t - rho + c); row i predicts time t + i.
    for (Index i = 0; i < T; ++i)
        for (Index c = i; c < rho; ++c)
            f.Phi_P.block(i * p, c * (m + p), p, m + p) = model.phi(i + rho - c);

    f.W = Matrix::Identity(p * T, p * T) - f.Phi_y;
    return f;
}

/// Solve W x = b by block forward substitution (W has identity diagonal blocks).
inline Matrix solve_w(const Matrix& W, const Matrix& b, Index p) {
    const Index T = W.rows() / p;
    Matrix x = b;
    for (Index i = 1; i < T; ++i)
        x.middleRows(i * p, p) += -W.block(i * p, 0, p, i * p) * x.topRows(i * p);
    return x;
}

/// Optimal T-step prediction W^{-1}(Phi_P z_ini + Phi_u u_f).
inline Vector predict_multistep(const PredictorForm& form, const Vector& z_ini, const Vector& u_f) {
    require_dims(z_ini.size() == form.Phi_P.cols(), "z_ini has wrong length");
    require_dims(u_f.size() == form.Phi_u.cols(), "u_f has wrong length");
    return solve_w(form.W, form.Phi_P * z_ini + form.Phi_u * u_f, form.p);
}

/// Column i of Z stacks [y; u] at times t+i-1, ..., t+i-rho. Future samples
/// (time >= t) come from y_r and u_f, past ones from z_ini.
inline Matrix build_regressors(const Vector& z_ini, const Vector& u_f, const Vector& y_r, Index rho, Index T,
                               Index m, Index p) {
    const Index mp = m + p;
    require_dims(z_ini.size() == mp * rho, "z_ini has wrong length");
    require_dims(u_f.size() == m * T, "u_f has wrong length");
    require_dims(y_r.size() == p * T, "y_r has wrong length");
    Matrix Z(mp * rho, T);
    for (Index i = 0; i < T; ++i)
        for (Index k = 1; k <= rho; ++k) {
            const Index offset = i - k;  // time relative to t
            auto block = Z.block((k - 1) * mp, i, mp, 1);
            if (offset >= 0) {
                block.topRows(p) = y_r.segment(offset * p, p);
                block.bottomRows(m) = u_f.segment(offset * m, m);
            } else {
                block = z_ini.segment((rho + offset) * mp, mp);
            }
        }
    return Z;
}

// ---------------------------------------------------------------------------
// True-model predictor

struct PlantModel {
    Matrix A, B, C, D, K;
    double sigma2 = 0.0;

    PlantModel() = default;
    PlantModel(Matrix A_, Matrix B_, Matrix C_, Matrix D_, Matrix K_, double sigma2_)
        : A(std::move(A_)), B(std::move(B_)), C(std::move(C_)), D(std::move(D_)), K(std::move(K_)), sigma2(sigma2_) {
        const Index n = A.rows();
        require_dims(A.cols() == n && B.rows() == n && C.cols() == n && K.rows() == n, "plant state dimensions");
        require_dims(D.rows() == C.rows() && D.cols() == B.cols() && K.cols() == C.rows(), "plant I/O dimensions");
        require(sigma2 >= 0.0, ErrorCode::Dimension, "noise variance must be nonnegative");
        require(observer_radius() < 1.0, ErrorCode::UnstableObserver,
                "spectral radius of A - KC is " + std::to_string(observer_radius()));
    }

    [[nodiscard]] Index n() const noexcept { return A.rows(); }
    [[nodiscard]] Index m() const noexcept { return B.cols(); }
    [[nodiscard]] Index p() const noexcept { return C.rows(); }

    [[nodiscard]] double observer_radius() const {
        Eigen::EigenSolver<Matrix> es(A - K * C, false);
        return es.eigenvalues().cwiseAbs().maxCoeff();
    }

    [[nodiscard]] PlantModel with_sigma2(double s2) const {
        PlantModel copy = *this;
        copy.sigma2 = s2;
        return copy;
    }
};

/// Fourth-order single-input single-output benchmark in innovation form.
inline PlantModel benchmark_plant(double sigma2 = 4.81e-3) {
    Matrix A(4, 4);
    A << 1.4183, -1.5894, 1.3161, -0.8864,
         1, 0, 0, 0,
         0, 1, 0, 0,
         0, 0, 1, 0;
    Matrix B(4, 1);
    B << 1, 0, 0, 0;
    Matrix C(1, 4);
    C << 0, 0, 0.2826, 0.5067;
    Matrix K(4, 1);
    K << 0.1784, -0.6523, 0.2020, 2.2910;
    return {A, B, C, Matrix::Zero(1, 1), K, sigma2};
}

/// Steady-state innovation observer x(t+1) = A x + B u + K (y - C x - D u).
class StateObserver {
public:
    explicit StateObserver(const PlantModel& plant) : plant_(&plant), x_(Vector::Zero(plant.n())) {}
    StateObserver(const PlantModel& plant, Vector x0) : plant_(&plant), x_(std::move(x0)) {
        require_dims(x_.size() == plant.n(), "initial state has wrong length");
    }

    /// Innovation of the sample, then the state update.
    Vector update(const Vector& y, const Vector& u) {
        const auto& P = *plant_;
        Vector innovation = y - P.C * x_ - P.D * u;
        x_ = P.A * x_ + P.B * u + P.K * innovation;
        ++count_;
        return innovation;
    }

    [[nodiscard]] const Vector& state() const noexcept { return x_; }
    [[nodiscard]] Index samples() const noexcept { return count_; }

private:
    const PlantModel* plant_;
    Vector x_;
    Index count_ = 0;
};

/// Noise-free prediction matrices: y_f = Ox x + Gu u_f.
struct StatePredictionMatrices {
    Matrix Ox;  // pT x n
    Matrix Gu;  // pT x mT
};

inline StatePredictionMatrices state_prediction_matrices(const PlantModel& plant, Index T) {
    const Index n = plant.n();
    const Index m = plant.m();
    const Index p = plant.p();
    StatePredictionMatrices s{Matrix(p * T, n), Matrix::Zero(p * T, m * T)};
    Matrix Ah = Matrix::Identity(n, n);
    std::vector<Matrix> markov;  // C A^k B
    for (Index h = 0; h < T; ++h) {
        s.Ox.middleRows(h * p, p) = plant.C * Ah;
        markov.push_back(plant.C * Ah * plant.B);
        Ah = plant.A * Ah;
    }
    for (Index h = 0; h < T; ++h) {
        s.Gu.block(h * p, h * m, p, m) = plant.D;
        for (Index j = 0; j < h; ++j)
            s.Gu.block(h * p, j * m, p, m) = markov[h - 1 - j];
    }
    return s;
}

inline constexpr Index kObserverBurnIn = 50;

/// Runs the observer over the history (rows are samples, starting from the
/// estimate x0) and predicts the next T outputs for the input sequence u_f.
inline Vector oracle_predict(const PlantModel& plant, const Matrix& y_hist, const Matrix& u_hist, const Vector& u_f,
                             const Vector& x0) {
    require_dims(y_hist.rows() == u_hist.rows(), "history logs differ in length");
    require(plant.observer_radius() < 1.0, ErrorCode::UnstableObserver, "A - KC is not Schur");
    require_dims(u_f.size() % plant.m() == 0, "u_f length is not a multiple of m");
    StateObserver obs(plant, x0);
    for (Index t = 0; t < y_hist.rows(); ++t)
        obs.update(y_hist.row(t).transpose(), u_hist.row(t).transpose());
    const Index T = u_f.size() / plant.m();
    const auto mats = state_prediction_matrices(plant, T);
    return mats.Ox * obs.state() + mats.Gu * u_f;
}

/// Same, starting from a zero estimate; needs the burn-in length of history.
inline Vector oracle_predict(const PlantModel& plant, const Matrix& y_hist, const Matrix& u_hist, const Vector& u_f) {
    require(y_hist.rows() >= kObserverBurnIn, ErrorCode::InsufficientSamples,
            "observer needs at least " + std::to_string(kObserverBurnIn) + " samples of history");
    return oracle_predict(plant, y_hist, u_hist, u_f, Vector::Zero(plant.n()));
}

} // namespace fce
