#pragma once

// Final Control Error under the non-informative prior.
//
// For a horizon u_f the expected cost given the training data splits into a
// certainty-equivalence term and an uncertainty term,
//
//     FCE(u_f) = J(u_f) + r(u_f)
//     J(u_f)   = || y_r - (M_0 + M(u_f)) theta_bar ||_Q^2 + || u_r - u_f ||_R^2
//     r(u_f)   = Tr[ Q (M_0 + M(u_f)) Sigma_theta (M_0 + M(u_f))^T ]
//
// with (M_0 + M(u_f)) = kron(Z(u_f)^T, I_p) and Q = W^{-T} Q_o W^{-1} frozen at
// the plug-in estimate of W. Both parts are quadratic in u_f; the Hessians do
// not depend on z_ini or the references, so FceProblem builds them once and
// only the linear and constant terms are refreshed per step.

#include "predictor.hpp"
#include "qp.hpp"

#include <optional>

namespace fce {

struct ControlSpec {
    Index T = 0;
    Index m = 0;
    Index p = 0;
    Matrix Q_o;  // pT x pT
    Matrix R;    // mT x mT
    Vector u_r;  // mT
    Vector y_r;  // pT
    std::optional<Box> u_box;
    std::optional<Box> y_box;  // bounds on the expected output

    /// Q_o = q_o I, R = r I and zero references.
    static ControlSpec tracking(Index T, Index m, Index p, double q_o, double r) {
        ControlSpec s;
        s.T = T;
        s.m = m;
        s.p = p;
        s.Q_o = q_o * Matrix::Identity(p * T, p * T);
        s.R = r * Matrix::Identity(m * T, m * T);
        s.u_r = Vector::Zero(m * T);
        s.y_r = Vector::Zero(p * T);
        return s;
    }

    void validate() const {
        require(T >= 1 && m >= 1 && p >= 1, ErrorCode::Dimension, "control spec dimensions must be positive");
        require_dims(Q_o.rows() == p * T && Q_o.cols() == p * T, "Q_o must be pT x pT");
        require_dims(R.rows() == m * T && R.cols() == m * T, "R must be mT x mT");
        require_dims(u_r.size() == m * T && y_r.size() == p * T, "reference lengths");
        require(is_positive_definite(Q_o), ErrorCode::NotPositiveDefinite, "Q_o must be symmetric positive definite");
        require(is_positive_definite(R), ErrorCode::NotPositiveDefinite, "R must be symmetric positive definite");
        if (u_box)
            require_dims(u_box->lower.size() == m * T && u_box->upper.size() == m * T, "input box length");
        if (y_box)
            require_dims(y_box->lower.size() == p * T && y_box->upper.size() == p * T, "output box length");
    }
};

/// X kron I_p
inline Matrix kron_identity(const Matrix& X, Index p) {
    Matrix out = Matrix::Zero(X.rows() * p, X.cols() * p);
    for (Index i = 0; i < X.rows(); ++i)
        for (Index j = 0; j < X.cols(); ++j)
            for (Index k = 0; k < p; ++k)
                out(i * p + k, j * p + k) = X(i, j);
    return out;
}

class FceProblem {
public:
    FceProblem(const ArxModel& model, const ControlSpec& spec)
        : model_(model), spec_(spec), form_(build_forms(model, spec.T)) {
        spec_.validate();
        require_dims(spec.m == model.m && spec.p == model.p, "control spec does not match the model dimensions");
        const Index p = spec_.p;
        const Index m = spec_.m;
        const Index T = spec_.T;
        const Index pT = p * T;

        Winv_ = solve_w(form_.W, Matrix::Identity(pT, pT), p);
        Q_ = Winv_.transpose() * spec_.Q_o * Winv_;
        Q_ = 0.5 * (Q_ + Q_.transpose());

        H_J_ = 2.0 * (form_.Phi_u.transpose() * Q_ * form_.Phi_u + spec_.R);
        H_J_ = 0.5 * (H_J_ + H_J_.transpose());

        // Where each input entry enters Z(u_f): u(t+i0), channel c, sits in
        // column i at lag k = i - i0, row (k-1)(m+p) + p + c.
        const Index mp = m + p;
        positions_.resize(m * T);
        for (Index i0 = 0; i0 < T; ++i0)
            for (Index c = 0; c < m; ++c)
                for (Index i = i0 + 1; i < T && i - i0 <= model_.rho; ++i)
                    positions_[i0 * m + c].push_back({i, (i - i0 - 1) * mp + p + c});

        if (model_.has_full_covariance())
            init_general_variance();
        else
            init_kronecker_variance();
    }

    [[nodiscard]] const PredictorForm& form() const noexcept { return form_; }
    [[nodiscard]] const ControlSpec& spec() const noexcept { return spec_; }
    [[nodiscard]] const ArxModel& model() const noexcept { return model_; }
    /// W^{-T} Q_o W^{-1} at the plug-in W.
    [[nodiscard]] const Matrix& Q() const noexcept { return Q_; }
    [[nodiscard]] const Matrix& W_inverse() const noexcept { return Winv_; }

    [[nodiscard]] QuadraticObjective assemble(const Vector& z_ini) const {
        return assemble(z_ini, spec_.y_r, spec_.u_r);
    }

    [[nodiscard]] QuadraticObjective assemble(const Vector& z_ini, const Vector& y_r, const Vector& u_r) const {
        const Index p = spec_.p;
        const Index m = spec_.m;
        const Index T = spec_.T;
        require_dims(z_ini.size() == (m + p) * model_.rho, "z_ini has wrong length");
        require_dims(y_r.size() == p * T && u_r.size() == m * T, "reference lengths");

        // delta_W(u_f) = a - Phi_u u_f
        const Vector a = form_.W * y_r - form_.Phi_P * z_ini;
        const Vector Qa = Q_ * a;
        const Vector Ru = spec_.R * u_r;
        Vector g_J = -2.0 * (form_.Phi_u.transpose() * Qa + Ru);
        const double c_J = a.dot(Qa) + u_r.dot(Ru);

        const Matrix Z0 = build_regressors(z_ini, Vector::Zero(m * T), y_r, model_.rho, T, m, p);
        Vector g_r = Vector::Zero(m * T);
        double c_r = 0.0;
        if (model_.has_full_covariance()) {
            const Matrix F0 = Lq_.transpose() * kron_identity(Z0.transpose(), p) * Csig_;
            const Vector f0 = Eigen::Map<const Vector>(F0.data(), F0.size());
            g_r = 2.0 * Gf_.transpose() * f0;
            c_r = f0.squaredNorm();
        } else {
            const double s2 = model_.sigma2_hat;
            const Matrix M = model_.S * Z0 * Qt_;
            for (Index k = 0; k < m * T; ++k) {
                double acc = 0.0;
                for (const auto& [col, row] : positions_[k])
                    acc += M(row, col);
                g_r(k) = 2.0 * s2 * acc;
            }
            c_r = s2 * Z0.cwiseProduct(M).sum();
        }
        return QuadraticObjective::from_parts(H_J_, std::move(g_J), c_J, H_r_, std::move(g_r), c_r);
    }

    /// u_f -> E[y_f | D] at the plug-in predictor.
    [[nodiscard]] AffineMap expected_output_map(const Vector& z_ini) const {
        return {Winv_ * form_.Phi_u, Winv_ * (form_.Phi_P * z_ini)};
    }

    [[nodiscard]] Vector solve(const Vector& z_ini, const Vector& y_r, const Vector& u_r) const {
        const auto obj = assemble(z_ini, y_r, u_r);
        if (!spec_.u_box && !spec_.y_box)
            return solve_qp(obj);
        std::optional<AffineMap> map;
        if (spec_.y_box)
            map = expected_output_map(z_ini);
        return solve_qp(obj, spec_.u_box, spec_.y_box, map);
    }

private:
    struct Position {
        Index col;
        Index row;
    };

    void init_kronecker_variance() {
        const Index p = spec_.p;
        const Index T = spec_.T;
        const Index nu = spec_.m * T;
        Qt_.resize(T, T);
        for (Index i = 0; i < T; ++i)
            for (Index j = 0; j < T; ++j)
                Qt_(i, j) = Q_.block(i * p, j * p, p, p).trace();

        const double s2 = model_.sigma2_hat;
        H_r_ = Matrix::Zero(nu, nu);
        for (Index a = 0; a < nu; ++a)
            for (Index b = a; b < nu; ++b) {
                double acc = 0.0;
                for (const auto& pa : positions_[a])
                    for (const auto& pb : positions_[b])
                        acc += Qt_(pa.col, pb.col) * model_.S(pa.row, pb.row);
                H_r_(a, b) = H_r_(b, a) = 2.0 * s2 * acc;
            }
    }

    void init_general_variance() {
        const Index p = spec_.p;
        const Index T = spec_.T;
        const Index nu = spec_.m * T;
        const Index d = model_.regressor_dim();

        Eigen::LLT<Matrix> q_llt(Q_);
        require(q_llt.info() == Eigen::Success, ErrorCode::NotPositiveDefinite, "output weight is not definite");
        Lq_ = q_llt.matrixL();
        Eigen::SelfAdjointEigenSolver<Matrix> es(*model_.sigma_theta);
        Csig_ = es.eigenvectors() * es.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal();

        Gf_.resize(p * T * Csig_.cols(), nu);
        for (Index a = 0; a < nu; ++a) {
            Matrix E = Matrix::Zero(d, T);
            for (const auto& pos : positions_[a])
                E(pos.row, pos.col) = 1.0;
            const Matrix Fa = Lq_.transpose() * kron_identity(E.transpose(), p) * Csig_;
            Gf_.col(a) = Eigen::Map<const Vector>(Fa.data(), Fa.size());
        }
        H_r_ = 2.0 * Gf_.transpose() * Gf_;
    }

    ArxModel model_;
    ControlSpec spec_;
    PredictorForm form_;
    Matrix Winv_;
    Matrix Q_;
    Matrix H_J_;
    Matrix H_r_;
    std::vector<std::vector<Position>> positions_;
    Matrix Qt_;    // block traces of Q (Kronecker route)
    Matrix Lq_;    // Q = Lq Lq^T (general route)
    Matrix Csig_;  // Sigma_theta = Csig Csig^T
    Matrix Gf_;
};

/// FCE objective for one initial condition, using the references stored in spec.
inline QuadraticObjective assemble_fce(const ArxModel& model, const ControlSpec& spec, const Vector& z_ini) {
    return FceProblem(model, spec).assemble(z_ini);
}

} // namespace fce
