#pragma once

// Receding-horizon control laws for run_closed_loop.

#include "fce_controller.hpp"
#include "plant_sim.hpp"
#include "subspace_ddpc.hpp"

#include <functional>
#include <memory>

namespace fce {

class FceControl final : public Controller {
public:
    FceControl(const ArxModel& model, const ControlSpec& spec) : problem_(model, spec) {}

    [[nodiscard]] std::string name() const override { return "fce"; }
    [[nodiscard]] Index horizon() const override { return problem_.spec().T; }

    Vector compute(const StepContext& ctx) override {
        const auto obj = problem_.assemble(ctx.z_ini, ctx.y_r, problem_.spec().u_r);
        Vector u;
        if (problem_.spec().u_box || problem_.spec().y_box) {
            std::optional<AffineMap> map;
            if (problem_.spec().y_box)
                map = problem_.expected_output_map(ctx.z_ini);
            u = solve_qp(obj, problem_.spec().u_box, problem_.spec().y_box, map);
        } else {
            u = solve_qp(obj);
        }
        last_ = fce_components(obj, u);
        return u;
    }

    [[nodiscard]] std::optional<CostComponents> last_costs() const override { return last_; }
    [[nodiscard]] const FceProblem& problem() const noexcept { return problem_; }

private:
    FceProblem problem_;
    std::optional<CostComponents> last_;
};

class GammaControl final : public Controller {
public:
    GammaControl(std::shared_ptr<const LqFactors> f, const ControlSpec& spec, const GammaConfig& cfg,
                 std::string label = "gamma")
        : f_(std::move(f)), problem_(*f_, spec, cfg), u_r_(spec.u_r), T_(spec.T), label_(std::move(label)) {}

    [[nodiscard]] std::string name() const override { return label_; }
    [[nodiscard]] Index horizon() const override { return T_; }
    Vector compute(const StepContext& ctx) override { return problem_.solve(ctx.z_ini, ctx.y_r, u_r_).u_f; }

private:
    std::shared_ptr<const LqFactors> f_;
    GammaProblem problem_;
    Vector u_r_;
    Index T_;
    std::string label_;
};

class DeePcControl final : public Controller {
public:
    DeePcControl(std::shared_ptr<const LqFactors> f, const ControlSpec& spec, const DeePcConfig& cfg)
        : f_(std::move(f)), problem_(*f_, spec, cfg), u_r_(spec.u_r), T_(spec.T) {}

    [[nodiscard]] std::string name() const override { return "deepc"; }
    [[nodiscard]] Index horizon() const override { return T_; }
    Vector compute(const StepContext& ctx) override { return problem_.solve(ctx.z_ini, ctx.y_r, u_r_).u_f; }

private:
    std::shared_ptr<const LqFactors> f_;
    DeePcProblem problem_;
    Vector u_r_;
    Index T_;
};

/// MPC with the true plant; the observer follows every sample from the plant's initial state.
class OracleMpcControl final : public Controller {
public:
    OracleMpcControl(const PlantModel& plant, const ControlSpec& spec, Vector x0 = Vector())
        : plant_(plant), spec_(spec), observer_(plant_, x0.size() ? std::move(x0) : Vector::Zero(plant.n())) {
        spec_.validate();
        require_dims(spec.m == plant.m() && spec.p == plant.p(), "control spec does not match the plant");
        mats_ = state_prediction_matrices(plant_, spec.T);
        H_ = 2.0 * (mats_.Gu.transpose() * spec_.Q_o * mats_.Gu + spec_.R);
        H_ = 0.5 * (H_ + H_.transpose());
        GtQ_ = mats_.Gu.transpose() * spec_.Q_o;
        llt_.compute(H_);
    }

    OracleMpcControl(const OracleMpcControl&) = delete;
    OracleMpcControl& operator=(const OracleMpcControl&) = delete;

    [[nodiscard]] std::string name() const override { return "mpc_oracle"; }
    [[nodiscard]] Index horizon() const override { return spec_.T; }

    void observe(const Vector& y, const Vector& u) override { observer_.update(y, u); }

    Vector compute(const StepContext& ctx) override {
        const Vector free = mats_.Ox * observer_.state();
        const Vector g = -2.0 * (GtQ_ * (ctx.y_r - free) + spec_.R * spec_.u_r);
        if (!spec_.u_box && !spec_.y_box)
            return llt_.solve(-g);
        QuadraticObjective obj;
        obj.H = H_;
        obj.g = g;
        return solve_qp(obj, spec_.u_box, spec_.y_box, AffineMap{mats_.Gu, free});
    }

    [[nodiscard]] const StateObserver& observer() const noexcept { return observer_; }

private:
    PlantModel plant_;
    ControlSpec spec_;
    StateObserver observer_;
    StatePredictionMatrices mats_;
    Matrix H_, GtQ_;
    Eigen::LLT<Matrix> llt_;
};

/// Wraps a callable; handy for fixed or scripted input sequences.
class FunctionControl final : public Controller {
public:
    using Fn = std::function<Vector(const StepContext&)>;
    FunctionControl(Index T, Fn fn, std::string label = "function")
        : T_(T), fn_(std::move(fn)), label_(std::move(label)) {}

    [[nodiscard]] std::string name() const override { return label_; }
    [[nodiscard]] Index horizon() const override { return T_; }
    Vector compute(const StepContext& ctx) override { return fn_(ctx); }

private:
    Index T_;
    Fn fn_;
    std::string label_;
};

} // namespace fce
