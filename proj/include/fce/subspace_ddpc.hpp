#pragma once

// Predictive control through the LQ decomposition of the stacked Hankel data
//
//     [Z_P; U_F; Y_F] = [L11 0 0; L21 L22 0; L31 L32 L33] [Q1; Q2; Q3]
//
// With z_ini = L11 g1, u_f = L21 g1 + L22 g2 and y_f = L31 g1 + L32 g2 + L33 g3,
// the gamma-DDPC family regularises g2 and g3 with squared norms. DeePC with a
// consistency regulariser reduces to the same form: writing alpha in the Q
// basis, |(I - Pi) alpha|^2 = |g3|^2 + |alpha_perp|^2 and |alpha|^2 adds |g2|^2
// (|g1|^2 is fixed by z_ini), so beta2 = lambda2 and beta3 = lambda1 + lambda2.

#include "fce_controller.hpp"

#include <string>
#include <vector>

namespace fce {

struct LqFactors {
    Matrix L11, L21, L22, L31, L32, L33;
    Matrix Q1, Q2, Q3;  // rows orthonormal, N columns each
    Index rho = 0, T = 0, m = 0, p = 0, N = 0;
    std::vector<std::string> warnings;

    [[nodiscard]] Matrix L() const {
        const Index a = L11.rows(), b = L22.rows(), c = L33.rows();
        Matrix out = Matrix::Zero(a + b + c, a + b + c);
        out.block(0, 0, a, a) = L11;
        out.block(a, 0, b, a) = L21;
        out.block(a, a, b, b) = L22;
        out.block(a + b, 0, c, a) = L31;
        out.block(a + b, a, c, b) = L32;
        out.block(a + b, a + b, c, c) = L33;
        return out;
    }
    [[nodiscard]] Matrix Q() const {
        Matrix out(Q1.rows() + Q2.rows() + Q3.rows(), N);
        out << Q1, Q2, Q3;
        return out;
    }
};

inline constexpr double kFactorTolerance = 1e-12;

/// M = L Q with L lower triangular (nonnegative diagonal) and Q with orthonormal rows.
struct LqPair {
    Matrix L;
    Matrix Q;
};

inline LqPair lq_factor(const Matrix& M) {
    const Index rows = M.rows();
    const Index N = M.cols();
    require(N >= rows, ErrorCode::HorizonTooLong,
            "stacked Hankel has " + std::to_string(rows) + " rows but only " + std::to_string(N) + " columns");
    Eigen::HouseholderQR<Matrix> qr(M.transpose());
    LqPair out;
    out.L = qr.matrixQR().topRows(rows).triangularView<Eigen::Upper>().toDenseMatrix().transpose();
    out.Q = (qr.householderQ() * Matrix::Identity(N, rows)).transpose();
    for (Index i = 0; i < rows; ++i)
        if (out.L(i, i) < 0.0) {
            out.L.col(i) *= -1.0;
            out.Q.row(i) *= -1.0;
        }
    return out;
}

inline LqFactors lq_decompose(const HankelBlock& Z_P, const HankelBlock& U_F, const HankelBlock& Y_F) {
    const Index N = Z_P.values.cols();
    require_dims(U_F.values.cols() == N && Y_F.values.cols() == N, "Hankel blocks differ in column count");
    const Index a = Z_P.values.rows(), b = U_F.values.rows(), c = Y_F.values.rows();
    const Index rows = a + b + c;

    Matrix stacked(rows, N);
    stacked << Z_P.values, U_F.values, Y_F.values;
    auto [L, Q] = lq_factor(stacked);

    LqFactors f;
    f.N = N;
    f.m = U_F.v_dim;
    f.p = Y_F.v_dim;
    f.T = U_F.block_rows();
    f.rho = Z_P.block_rows();
    f.L11 = L.block(0, 0, a, a);
    f.L21 = L.block(a, 0, b, a);
    f.L22 = L.block(a, a, b, b);
    f.L31 = L.block(a + b, 0, c, a);
    f.L32 = L.block(a + b, a, c, b);
    f.L33 = L.block(a + b, a + b, c, c);
    f.Q1 = Q.topRows(a);
    f.Q2 = Q.middleRows(a, b);
    f.Q3 = Q.bottomRows(c);
    for (Index i = 0; i < rows; ++i)
        if (L(i, i) < kFactorTolerance)
            f.warnings.push_back("diagonal entry " + std::to_string(i) + " of L is below 1e-12");
    return f;
}

inline LqFactors lq_decompose(const PartitionedData& parts) { return lq_decompose(parts.Z_P, parts.U_F, parts.Y_F); }

/// beta = +inf pins the corresponding block to zero.
struct GammaConfig {
    double beta2 = kInf;
    double beta3 = kInf;
};

struct GammaSolution {
    Vector gamma1, gamma2, gamma3;  // gamma3 has full length pT; unused entries are zero
    Vector u_f;
};

namespace detail {

inline Vector solve_lower_checked(const Matrix& L, const Vector& b, const char* name) {
    const double scale = std::max(1.0, L.diagonal().cwiseAbs().maxCoeff());
    for (Index i = 0; i < L.rows(); ++i)
        if (!(std::abs(L(i, i)) > kFactorTolerance * scale))
            throw Error(ErrorCode::SingularFactor, std::string(name) + " is singular at diagonal entry " +
                                                        std::to_string(i));
    return L.triangularView<Eigen::Lower>().solve(b);
}

/// Number of leading diagonal entries of L33 that are numerically nonzero.
inline Index leading_nonsingular(const Matrix& L) {
    const double scale = std::max(1.0, L.diagonal().cwiseAbs().maxCoeff());
    Index k = 0;
    while (k < L.rows() && std::abs(L(k, k)) > kFactorTolerance * scale)
        ++k;
    return k;
}

} // namespace detail

/// Regularised gamma-DDPC problem with the Hessian factored once.
class GammaProblem {
public:
    GammaProblem(const LqFactors& f, const ControlSpec& spec, const GammaConfig& cfg)
        : f_(&f), spec_(spec), cfg_(cfg) {
        require(cfg.beta2 >= 0.0 && cfg.beta3 >= 0.0, ErrorCode::Config, "regularisation weights must be >= 0");
        spec_.validate();
        require_dims(spec.m == f.m && spec.p == f.p && spec.T == f.T, "control spec does not match the factors");
        const Index mT = f.L22.rows();
        const Index pT = f.L33.rows();
        n2_ = std::isinf(cfg.beta2) ? 0 : mT;
        n3_ = std::isinf(cfg.beta3) ? 0 : detail::leading_nonsingular(f.L33);
        const Index n = n2_ + n3_;

        A_ = Matrix::Zero(pT, n);
        B_ = Matrix::Zero(mT, n);
        if (n2_ > 0) {
            A_.leftCols(n2_) = f.L32;
            B_.leftCols(n2_) = f.L22;
        }
        if (n3_ > 0)
            A_.rightCols(n3_) = f.L33.leftCols(n3_);
        AtQ_ = A_.transpose() * spec_.Q_o;
        BtR_ = B_.transpose() * spec_.R;
        H_ = AtQ_ * A_ + BtR_ * B_;
        for (Index i = 0; i < n2_; ++i)
            H_(i, i) += cfg.beta2;
        for (Index i = 0; i < n3_; ++i)
            H_(n2_ + i, n2_ + i) += cfg.beta3;
        H_ = 0.5 * (H_ + H_.transpose());
        llt_.compute(H_);
        definite_ = n == 0 || (llt_.info() == Eigen::Success && llt_.matrixLLT().diagonal().minCoeff() > 1e-12);
    }

    [[nodiscard]] const GammaConfig& config() const noexcept { return cfg_; }

    [[nodiscard]] GammaSolution solve(const Vector& z_ini) const { return solve(z_ini, spec_.y_r, spec_.u_r); }

    [[nodiscard]] GammaSolution solve(const Vector& z_ini, const Vector& y_r, const Vector& u_r) const {
        const auto& f = *f_;
        require_dims(z_ini.size() == f.L11.rows(), "z_ini has wrong length");
        GammaSolution s;
        s.gamma1 = detail::solve_lower_checked(f.L11, z_ini, "L11");
        return finish(std::move(s), y_r, u_r);
    }

    /// Same, with gamma1 supplied (used when L11 is handled by the caller).
    [[nodiscard]] GammaSolution solve_from_gamma1(Vector gamma1, const Vector& y_r, const Vector& u_r) const {
        GammaSolution s;
        s.gamma1 = std::move(gamma1);
        return finish(std::move(s), y_r, u_r);
    }

private:
    [[nodiscard]] GammaSolution finish(GammaSolution s, const Vector& y_r, const Vector& u_r) const {
        const auto& f = *f_;
        const Index mT = f.L22.rows();
        const Index pT = f.L33.rows();
        const Vector base_u = f.L21 * s.gamma1;
        const Index n = n2_ + n3_;
        Vector x = Vector::Zero(n);
        if (n > 0) {
            const Vector b = AtQ_ * (y_r - f.L31 * s.gamma1) + BtR_ * (u_r - base_u);
            if (spec_.u_box) {
                require(definite_, ErrorCode::NotPositiveDefinite, "input bounds need a definite gamma Hessian");
                LinearInequalities cons{Matrix(0, n), Vector(0)};
                cons.append_box(B_, base_u, *spec_.u_box);
                x = solve_inequality_qp(2.0 * H_, -2.0 * b, cons).x;
            } else if (definite_) {
                x = llt_.solve(b);
            } else {
                x = detail::unconstrained_minimizer(H_, -b);
            }
        }
        s.gamma2 = Vector::Zero(mT);
        s.gamma3 = Vector::Zero(pT);
        if (n2_ > 0)
            s.gamma2 = x.head(n2_);
        if (n3_ > 0)
            s.gamma3.head(n3_) = x.tail(n3_);
        s.u_f = base_u + f.L22 * s.gamma2;
        return s;
    }

    const LqFactors* f_;
    ControlSpec spec_;
    GammaConfig cfg_;
    Index n2_ = 0;
    Index n3_ = 0;
    Matrix A_, B_, AtQ_, BtR_, H_;
    Eigen::LLT<Matrix> llt_;
    bool definite_ = true;
};

inline Vector gamma_solve(const LqFactors& f, const Vector& z_ini, const ControlSpec& spec, const GammaConfig& cfg) {
    return GammaProblem(f, spec, cfg).solve(z_ini).u_f;
}

/// sigma_hat = Tr(L33) / (pT)
inline double sigma_hat_lq(const LqFactors& f) {
    return f.L33.diagonal().sum() / static_cast<double>(f.L33.rows());
}

/// Output-error regulariser weight sigma_hat^2 Tr[Q_o] / N.
inline GammaConfig thm3_config(const LqFactors& f, const ControlSpec& spec) {
    const double s = sigma_hat_lq(f);
    return {s * s * spec.Q_o.trace() / static_cast<double>(f.N), kInf};
}

inline Vector thm3_solve(const LqFactors& f, const Vector& z_ini, const ControlSpec& spec) {
    return gamma_solve(f, z_ini, spec, thm3_config(f, spec));
}

/// lambda1 = +inf imposes the consistency constraint exactly.
struct DeePcConfig {
    double lambda1 = kInf;
    double lambda2 = 0.0;
};

inline GammaConfig deepc_to_gamma(const DeePcConfig& cfg) {
    require(cfg.lambda1 >= 0.0 && cfg.lambda2 >= 0.0 && std::isfinite(cfg.lambda2), ErrorCode::Config,
            "DeePC weights must satisfy lambda1 in [0, inf], lambda2 in [0, inf)");
    return {cfg.lambda2, std::isinf(cfg.lambda1) ? kInf : cfg.lambda1 + cfg.lambda2};
}

struct DeePcSolution {
    Vector alpha;  // N
    Vector u_f;
};

inline constexpr double kInitialConditionTolerance = 1e-6;

class DeePcProblem {
public:
    DeePcProblem(const LqFactors& f, const ControlSpec& spec, const DeePcConfig& cfg)
        : f_(&f), cfg_(cfg), gamma_(f, spec, deepc_to_gamma(cfg)), spec_y_r_(spec.y_r), spec_u_r_(spec.u_r) {
        Eigen::CompleteOrthogonalDecomposition<Matrix> cod(f.L11);
        L11_pinv_ = cod.pseudoInverse();
    }

    [[nodiscard]] DeePcSolution solve(const Vector& z_ini) const { return solve(z_ini, spec_y_r_, spec_u_r_); }

    [[nodiscard]] DeePcSolution solve(const Vector& z_ini, const Vector& y_r, const Vector& u_r) const {
        const auto& f = *f_;
        require_dims(z_ini.size() == f.L11.rows(), "z_ini has wrong length");
        Vector g1 = L11_pinv_ * z_ini;
        const double residual = (f.L11 * g1 - z_ini).norm();
        if (residual > kInitialConditionTolerance)
            throw Error(ErrorCode::Infeasible, "z_ini lies outside the row space of Z_P (residual " +
                                                   std::to_string(residual) + ")");
        const auto gs = gamma_.solve_from_gamma1(std::move(g1), y_r, u_r);
        DeePcSolution out;
        out.alpha = f.Q1.transpose() * gs.gamma1 + f.Q2.transpose() * gs.gamma2 + f.Q3.transpose() * gs.gamma3;
        out.u_f = gs.u_f;
        return out;
    }

private:
    const LqFactors* f_;
    DeePcConfig cfg_;
    GammaProblem gamma_;
    Matrix L11_pinv_;
    Vector spec_y_r_, spec_u_r_;
};

/// Full DeePC solve from the Hankel blocks.
inline DeePcSolution deepc_solve_full(const HankelBlock& Z_P, const HankelBlock& U_F, const HankelBlock& Y_F,
                                      const Vector& z_ini, const ControlSpec& spec, const DeePcConfig& cfg) {
    const auto f = lq_decompose(Z_P, U_F, Y_F);
    return DeePcProblem(f, spec, cfg).solve(z_ini);
}

inline Vector deepc_solve(const HankelBlock& Z_P, const HankelBlock& U_F, const HankelBlock& Y_F,
                          const Vector& z_ini, const ControlSpec& spec, const DeePcConfig& cfg) {
    return deepc_solve_full(Z_P, U_F, Y_F, z_ini, spec, cfg).u_f;
}

// ---------------------------------------------------------------------------
// Bank of T VARX models, row i regressing Y_{rho+i} on [Z_P; U_F; Y_{rho+1..rho+i-1}].

struct VarxBank {
    Matrix Phi_P;  // pT x (m+p)rho, fully parametrised
    Matrix Phi_u;  // pT x mT, full
    Matrix Phi_y;  // pT x pT, strictly lower block triangular
    Matrix W;      // I - Phi_y
    Matrix D33;    // block diagonal, lower triangular blocks; diagonal for p = 1
    Matrix residual;  // Y_F - Phi_P Z_P - Phi_u U_F - Phi_y Y_F
};

inline VarxBank varx_bank_fit(const HankelBlock& Z_P, const HankelBlock& U_F, const HankelBlock& Y_F) {
    const Index N = Z_P.values.cols();
    require_dims(U_F.values.cols() == N && Y_F.values.cols() == N, "Hankel blocks differ in column count");
    const Index p = Y_F.v_dim;
    const Index T = Y_F.block_rows();
    const Index a = Z_P.values.rows();
    const Index b = U_F.values.rows();
    const Index pT = p * T;

    VarxBank bank{Matrix::Zero(pT, a), Matrix::Zero(pT, b), Matrix::Zero(pT, pT), Matrix(), Matrix::Zero(pT, pT),
                  Matrix(pT, N)};
    for (Index i = 0; i < T; ++i) {
        const Index d = a + b + i * p;
        Matrix Z(d, N);
        Z << Z_P.values, U_F.values, Y_F.values.topRows(i * p);
        const Matrix Y = Y_F.values.middleRows(i * p, p);
        const auto ls = detail::solve_least_squares(Z, Y);
        bank.Phi_P.middleRows(i * p, p) = ls.Theta.leftCols(a);
        bank.Phi_u.middleRows(i * p, p) = ls.Theta.middleCols(a, b);
        if (i > 0)
            bank.Phi_y.block(i * p, 0, p, i * p) = ls.Theta.rightCols(i * p);
        bank.residual.middleRows(i * p, p) = ls.residual;

        Eigen::LLT<Matrix> llt(ls.residual * ls.residual.transpose());
        require(llt.info() == Eigen::Success, ErrorCode::SingularGram,
                "residual covariance of VARX row " + std::to_string(i + 1) + " is singular");
        bank.D33.block(i * p, i * p, p, p) = llt.matrixL();
    }
    bank.W = Matrix::Identity(pT, pT) - bank.Phi_y;
    return bank;
}

inline VarxBank varx_bank_fit(const PartitionedData& parts) { return varx_bank_fit(parts.Z_P, parts.U_F, parts.Y_F); }

} // namespace fce
