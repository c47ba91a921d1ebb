#pragma once

// Small dense convex quadratic programs
//
//     minimize  1/2 x^T H x + g^T x + c   subject to  C x <= d
//
// solved in closed form when unconstrained and by a dual active-set method
// (Goldfarb-Idnani) otherwise. Problem sizes here are a few dozen variables,
// so every iteration re-solves the active-set system from scratch.

#include "core.hpp"

#include <Eigen/Eigenvalues>

#include <optional>
#include <vector>

namespace fce {

struct QuadraticObjective {
    Matrix H;
    Vector g;
    double c = 0.0;

    // Certainty-equivalence part J and uncertainty part r; H = H_J + H_r etc.
    Matrix H_J, H_r;
    Vector g_J, g_r;
    double c_J = 0.0;
    double c_r = 0.0;

    [[nodiscard]] Index size() const noexcept { return g.size(); }

    [[nodiscard]] double value(const Vector& u) const { return 0.5 * u.dot(H * u) + g.dot(u) + c; }
    [[nodiscard]] double J(const Vector& u) const { return 0.5 * u.dot(H_J * u) + g_J.dot(u) + c_J; }
    [[nodiscard]] double r(const Vector& u) const { return 0.5 * u.dot(H_r * u) + g_r.dot(u) + c_r; }

    static QuadraticObjective from_parts(Matrix H_J, Vector g_J, double c_J, Matrix H_r, Vector g_r, double c_r) {
        QuadraticObjective q;
        q.H = H_J + H_r;
        q.g = g_J + g_r;
        q.c = c_J + c_r;
        q.H_J = std::move(H_J);
        q.g_J = std::move(g_J);
        q.c_J = c_J;
        q.H_r = std::move(H_r);
        q.g_r = std::move(g_r);
        q.c_r = c_r;
        return q;
    }
};

struct CostComponents {
    double J = 0.0;
    double r = 0.0;
};

inline CostComponents fce_components(const QuadraticObjective& obj, const Vector& u_f) {
    return {obj.J(u_f), obj.r(u_f)};
}

/// Per-entry bounds; infinite entries are ignored.
struct Box {
    Vector lower;
    Vector upper;

    static Box uniform(Index n, double lo, double hi) { return {Vector::Constant(n, lo), Vector::Constant(n, hi)}; }
};

/// y = A u + b
struct AffineMap {
    Matrix A;
    Vector b;

    [[nodiscard]] Vector operator()(const Vector& u) const { return A * u + b; }
};

struct LinearInequalities {
    Matrix C;  // rows are constraints C x <= d
    Vector d;

    [[nodiscard]] Index size() const noexcept { return d.size(); }

    void append(const Matrix& rows, const Vector& rhs) {
        Matrix C2(C.rows() + rows.rows(), rows.cols());
        Vector d2(d.size() + rhs.size());
        if (C.rows() > 0)
            C2.topRows(C.rows()) = C;
        C2.bottomRows(rows.rows()) = rows;
        d2 << d, rhs;
        C = std::move(C2);
        d = std::move(d2);
    }

    /// lower <= M x + b <= upper
    void append_box(const Matrix& M, const Vector& b, const Box& box) {
        require_dims(box.lower.size() == M.rows() && box.upper.size() == M.rows(), "box has wrong length");
        for (Index i = 0; i < M.rows(); ++i) {
            require(box.lower(i) <= box.upper(i), ErrorCode::Infeasible,
                    "box entry " + std::to_string(i) + " has lower > upper");
            if (std::isfinite(box.upper(i)))
                append(M.row(i), Vector::Constant(1, box.upper(i) - b(i)));
            if (std::isfinite(box.lower(i)))
                append(-M.row(i), Vector::Constant(1, b(i) - box.lower(i)));
        }
    }
};

struct QpResult {
    Vector x;
    Vector multipliers;  // one per inequality, >= 0
    std::vector<Index> active;
    int iterations = 0;
};

namespace detail {

inline constexpr double kCurvatureFloor = 1e-10;

/// Minimiser of 1/2 x^T H x + g^T x; minimum-norm when H has curvature below 1e-10.
inline Vector unconstrained_minimizer(const Matrix& H, const Vector& g) {
    Eigen::LLT<Matrix> llt(H);
    if (llt.info() == Eigen::Success) {
        const auto& L = llt.matrixL();
        double dmin = kInf;
        for (Index i = 0; i < H.rows(); ++i)
            dmin = std::min(dmin, L(i, i) * L(i, i));
        if (dmin > kCurvatureFloor)
            return llt.solve(-g);
    }
    Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (H + H.transpose()));
    const Vector& ev = es.eigenvalues();
    const Matrix& V = es.eigenvectors();
    Vector coeff = V.transpose() * (-g);
    for (Index i = 0; i < ev.size(); ++i)
        coeff(i) = ev(i) > kCurvatureFloor ? coeff(i) / ev(i) : 0.0;
    return V * coeff;
}

} // namespace detail

/// Dual active-set solve of min 1/2 x^T H x + g^T x s.t. C x <= d, H positive definite.
inline QpResult solve_inequality_qp(const Matrix& H, const Vector& g, const LinearInequalities& cons,
                                    int max_iterations = -1) {
    const Index n = g.size();
    require_dims(H.rows() == n && H.cols() == n, "Hessian has wrong size");
    QpResult res;
    res.multipliers = Vector::Zero(cons.size());
    if (cons.size() == 0) {
        res.x = detail::unconstrained_minimizer(H, g);
        return res;
    }
    require_dims(cons.C.cols() == n, "constraint matrix has wrong width");
    Eigen::LLT<Matrix> llt(H);
    require(llt.info() == Eigen::Success, ErrorCode::NotPositiveDefinite,
            "constrained QP needs a positive definite Hessian");
    if (max_iterations < 0)
        max_iterations = static_cast<int>(100 * n);

    // Constraint i in a^T x >= b form: a = -C_i, b = -d_i.
    const double scale = std::max(1.0, cons.d.cwiseAbs().maxCoeff());
    const double feas_tol = 1e-10 * scale;
    Vector x = llt.solve(-g);
    std::vector<Index> active;
    std::vector<double> lambda;
    auto slack = [&](Index i) { return cons.d(i) - cons.C.row(i).dot(x); };

    int iter = 0;
    while (true) {
        Index violated = -1;
        double worst = -feas_tol;
        for (Index i = 0; i < cons.size(); ++i) {
            const double s = slack(i);
            if (s < worst) {
                worst = s;
                violated = i;
            }
        }
        if (violated < 0)
            break;

        const Vector a_p = -cons.C.row(violated).transpose();
        double lambda_p = 0.0;
        while (true) {
            if (++iter > max_iterations)
                throw Error(ErrorCode::MaxIterations, "active-set QP exceeded " + std::to_string(max_iterations) +
                                                          " iterations");
            const Index q = static_cast<Index>(active.size());
            Vector z;
            Vector r(q);
            const Vector Hinv_a = llt.solve(a_p);
            if (q > 0) {
                Matrix N(n, q);
                for (Index j = 0; j < q; ++j)
                    N.col(j) = -cons.C.row(active[j]).transpose();
                const Matrix Hinv_N = llt.solve(N);
                const Matrix M = N.transpose() * Hinv_N;
                r = M.ldlt().solve(N.transpose() * Hinv_a);
                z = Hinv_a - Hinv_N * r;
            } else {
                z = Hinv_a;
            }

            // Partial step: the first active multiplier to reach zero.
            double t1 = kInf;
            Index drop = -1;
            for (Index j = 0; j < q; ++j)
                if (r(j) > 1e-14 && lambda[j] / r(j) < t1) {
                    t1 = lambda[j] / r(j);
                    drop = j;
                }
            // Full step: the violated constraint becomes active.
            const double curvature = z.dot(a_p);
            const bool z_zero = z.norm() <= 1e-14 * std::max(1.0, a_p.norm());
            const double t2 = (!z_zero && curvature > 1e-14) ? slack(violated) < 0 ? -slack(violated) / curvature : 0.0
                                                               : kInf;
            const double t = std::min(t1, t2);
            if (!std::isfinite(t))
                throw Error(ErrorCode::Infeasible, "constraints have no common point");

            for (Index j = 0; j < q; ++j)
                lambda[j] -= t * r(j);
            lambda_p += t;
            if (std::isfinite(t2))
                x += t * z;

            if (t == t2) {
                active.push_back(violated);
                lambda.push_back(lambda_p);
                break;
            }
            active.erase(active.begin() + drop);
            lambda.erase(lambda.begin() + drop);
        }
    }

    res.x = x;
    res.active = active;
    res.iterations = iter;
    for (std::size_t j = 0; j < active.size(); ++j)
        res.multipliers(active[j]) = std::max(0.0, lambda[j]);
    return res;
}

/// Stationarity, primal feasibility and complementarity residual (max-norm).
inline double kkt_residual(const Matrix& H, const Vector& g, const LinearInequalities& cons, const QpResult& res) {
    Vector grad = H * res.x + g;
    double viol = 0.0;
    double comp = 0.0;
    if (cons.size() > 0) {
        grad += cons.C.transpose() * res.multipliers;
        const Vector s = cons.d - cons.C * res.x;
        viol = std::max(0.0, -s.minCoeff());
        comp = (s.cwiseProduct(res.multipliers)).cwiseAbs().maxCoeff();
    }
    return std::max({grad.cwiseAbs().maxCoeff(), viol, comp});
}

/// Minimiser of the objective under optional input boxes and boxes on an affine output map.
inline Vector solve_qp(const QuadraticObjective& obj, const std::optional<Box>& u_box = std::nullopt,
                       const std::optional<Box>& y_box = std::nullopt,
                       const std::optional<AffineMap>& output_map = std::nullopt) {
    const Index n = obj.size();
    LinearInequalities cons{Matrix(0, n), Vector(0)};
    if (u_box)
        cons.append_box(Matrix::Identity(n, n), Vector::Zero(n), *u_box);
    if (y_box) {
        require(output_map.has_value(), ErrorCode::Dimension, "output box needs the expected-output map");
        require_dims(output_map->A.cols() == n, "output map has wrong width");
        cons.append_box(output_map->A, output_map->b, *y_box);
    }
    const auto res = solve_inequality_qp(obj.H, obj.g, cons);
    return res.x;
}

} // namespace fce
