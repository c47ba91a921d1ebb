#pragma once

// Simulation of the innovation-form plant
//
//     x(t+1) = A x(t) + B u(t) + K e(t)
//     y(t)   = C x(t) + D u(t) + e(t),     e ~ N(0, sigma2 I_p)
//
// open loop under filtered white-noise excitation, and closed loop under a
// receding-horizon controller.

#include "predictor.hpp"
#include "qp.hpp"

#include <chrono>
#include <cmath>
#include <memory>
#include <random>
#include <string>
#include <vector>

namespace fce {

inline std::mt19937_64 make_rng(std::uint64_t seed, std::uint64_t stream) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
    return std::mt19937_64(seq);
}

enum RngStream : std::uint64_t { kInputStream = 1, kNoiseStream = 2, kWarmupInputStream = 3, kWarmupNoiseStream = 4 };

inline Matrix gaussian_matrix(std::mt19937_64& rng, Index rows, Index cols, double stddev) {
    std::normal_distribution<double> dist(0.0, 1.0);
    Matrix out(rows, cols);
    for (Index i = 0; i < rows; ++i)
        for (Index j = 0; j < cols; ++j)
            out(i, j) = stddev * dist(rng);
    return out;
}

struct ExcitationSpec {
    double cutoff = 1.8;  // rad/sample
    double pre_filter_variance = 1.0;
    std::uint64_t seed = 0;

    void validate() const {
        require(cutoff > 0.0 && cutoff < M_PI, ErrorCode::Config, "cutoff must lie in (0, pi)");
        require(pre_filter_variance >= 0.0, ErrorCode::Config, "pre-filter variance must be >= 0");
    }
};

/// Second-order Butterworth low-pass, bilinear transform with prewarping.
struct Biquad {
    double b0, b1, b2, a1, a2;

    static Biquad butterworth_lowpass(double cutoff) {
        const double k = std::tan(cutoff / 2.0);
        const double k2 = k * k;
        const double den = 1.0 + std::sqrt(2.0) * k + k2;
        const double b0 = k2 / den;
        return {b0, 2.0 * b0, b0, 2.0 * (k2 - 1.0) / den, (1.0 - std::sqrt(2.0) * k + k2) / den};
    }

    /// Filters every column independently from zero initial conditions.
    [[nodiscard]] Matrix apply(const Matrix& x) const {
        Matrix y(x.rows(), x.cols());
        for (Index c = 0; c < x.cols(); ++c) {
            double x1 = 0, x2 = 0, y1 = 0, y2 = 0;
            for (Index t = 0; t < x.rows(); ++t) {
                const double v = b0 * x(t, c) + b1 * x1 + b2 * x2 - a1 * y1 - a2 * y2;
                x2 = x1;
                x1 = x(t, c);
                y2 = y1;
                y1 = v;
                y(t, c) = v;
            }
        }
        return y;
    }
};

inline Matrix excitation_signal(const ExcitationSpec& exc, Index m, Index length, std::mt19937_64& rng) {
    exc.validate();
    const Matrix white = gaussian_matrix(rng, length, m, std::sqrt(exc.pre_filter_variance));
    return Biquad::butterworth_lowpass(exc.cutoff).apply(white);
}

/// Runs the plant from state x over the given inputs and innovations (rows are samples).
inline Matrix propagate(const PlantModel& plant, Vector& x, const Matrix& u, const Matrix& e) {
    Matrix y(u.rows(), plant.p());
    for (Index t = 0; t < u.rows(); ++t) {
        const Vector ut = u.row(t).transpose();
        const Vector et = e.row(t).transpose();
        y.row(t) = (plant.C * x + plant.D * ut + et).transpose();
        x = plant.A * x + plant.B * ut + plant.K * et;
    }
    return y;
}

inline constexpr Index kOpenLoopBurnIn = 200;

struct OpenLoopRecord {
    Dataset data;
    Matrix y_clean;  // same input, zero innovations
    Matrix e_log;
};

inline OpenLoopRecord simulate_open_loop_record(const PlantModel& plant, const ExcitationSpec& exc, Index n_data,
                                                std::uint64_t seed) {
    require(n_data >= 1, ErrorCode::InsufficientSamples, "N_data must be at least 1");
    const Index total = n_data + kOpenLoopBurnIn;
    auto input_rng = make_rng(seed ^ (exc.seed * 0x9E3779B97F4A7C15ULL), kInputStream);
    auto noise_rng = make_rng(seed, kNoiseStream);
    const Matrix u = excitation_signal(exc, plant.m(), total, input_rng);
    const Matrix e = gaussian_matrix(noise_rng, total, plant.p(), std::sqrt(plant.sigma2));

    Vector x = Vector::Zero(plant.n());
    const Matrix y = propagate(plant, x, u, e);
    Vector xc = Vector::Zero(plant.n());
    const Matrix yc = propagate(plant, xc, u, Matrix::Zero(total, plant.p()));

    return {Dataset(u.bottomRows(n_data), y.bottomRows(n_data)), yc.bottomRows(n_data), e.bottomRows(n_data)};
}

inline Dataset simulate_open_loop(const PlantModel& plant, const ExcitationSpec& exc, Index n_data,
                                  std::uint64_t seed) {
    return simulate_open_loop_record(plant, exc, n_data, seed).data;
}

/// 10 log10 of noise-free output variance over the variance of the noise contribution.
inline double measure_snr_db(const OpenLoopRecord& rec) {
    const Matrix noise = rec.data.y_log() - rec.y_clean;
    auto variance = [](const Matrix& v) {
        const Eigen::RowVectorXd mean = v.colwise().mean();
        return (v.rowwise() - mean).squaredNorm() / static_cast<double>(v.rows());
    };
    return 10.0 * std::log10(variance(rec.y_clean) / variance(noise));
}

// ---------------------------------------------------------------------------
// References

enum class ReferenceKind { SquareWave, Multilevel, Constant };

inline std::string to_string(ReferenceKind k) {
    switch (k) {
    case ReferenceKind::SquareWave: return "square_wave";
    case ReferenceKind::Multilevel: return "multilevel";
    case ReferenceKind::Constant: return "constant";
    }
    return "?";
}

inline ReferenceKind parse_reference_kind(const std::string& s) {
    if (s == "square_wave")
        return ReferenceKind::SquareWave;
    if (s == "multilevel")
        return ReferenceKind::Multilevel;
    if (s == "constant")
        return ReferenceKind::Constant;
    throw Error(ErrorCode::Config, "unknown reference kind '" + s + "'");
}

inline constexpr Index kSquareWaveOffset = 460;

struct ReferenceSpec {
    ReferenceKind kind = ReferenceKind::SquareWave;
    Index T_v = 500;
    Index period = 0;  // square wave; 0 selects T_v - 460
    double amplitude = 1.0;  // square wave amplitude or constant value
    std::vector<double> levels{0.0, 1.0, -0.5, 0.8, -1.0};
    Index hold = 100;  // samples per multilevel step

    static ReferenceSpec square_wave(Index T_v) { return {ReferenceKind::SquareWave, T_v}; }
    static ReferenceSpec multilevel(Index T_v) { return {ReferenceKind::Multilevel, T_v}; }
    static ReferenceSpec constant(Index T_v, double value) {
        ReferenceSpec s{ReferenceKind::Constant, T_v};
        s.amplitude = value;
        return s;
    }
};

/// Scalar reference of length T_v + lookahead (final value held), copied to all p outputs.
inline Matrix make_reference(const ReferenceSpec& spec, Index lookahead = 0, Index p = 1) {
    require(spec.T_v >= 1, ErrorCode::Config, "T_v must be at least 1");
    require(lookahead >= 0 && p >= 1, ErrorCode::Dimension, "bad reference dimensions");
    Vector r(spec.T_v);
    switch (spec.kind) {
    case ReferenceKind::SquareWave: {
        Index period = spec.period;
        if (period == 0) {
            require(spec.T_v > kSquareWaveOffset, ErrorCode::Config,
                    "square wave period T_v - 460 needs T_v > 460 (got " + std::to_string(spec.T_v) + ")");
            period = spec.T_v - kSquareWaveOffset;
        }
        require(period >= 2, ErrorCode::Config, "square wave period must be at least 2");
        for (Index t = 0; t < spec.T_v; ++t)
            r(t) = 2 * (t % period) < period ? spec.amplitude : -spec.amplitude;
        break;
    }
    case ReferenceKind::Multilevel:
        require(!spec.levels.empty() && spec.hold >= 1, ErrorCode::Config, "multilevel reference needs levels");
        for (Index t = 0; t < spec.T_v; ++t)
            r(t) = spec.levels[static_cast<std::size_t>((t / spec.hold) % static_cast<Index>(spec.levels.size()))];
        break;
    case ReferenceKind::Constant:
        r.setConstant(spec.amplitude);
        break;
    }
    Matrix out(spec.T_v + lookahead, p);
    for (Index t = 0; t < out.rows(); ++t)
        out.row(t).setConstant(r(std::min(t, spec.T_v - 1)));
    return out;
}

// ---------------------------------------------------------------------------
// Closed loop

struct StepContext {
    Index t = 0;
    const Vector& z_ini;  // [y; u] blocks, oldest first
    const Vector& y_r;    // pT window starting at t
};

class Controller {
public:
    virtual ~Controller() = default;
    [[nodiscard]] virtual std::string name() const = 0;
    [[nodiscard]] virtual Index horizon() const = 0;
    /// Input sequence u_f for the coming horizon.
    virtual Vector compute(const StepContext& ctx) = 0;
    /// Every measured sample, warmup included, in time order.
    virtual void observe(const Vector& /*y*/, const Vector& /*u*/) {}
    /// Cost split at the last solution, when the law has one.
    [[nodiscard]] virtual std::optional<CostComponents> last_costs() const { return std::nullopt; }
};

inline constexpr double kBlowupThreshold = 1e6;
inline constexpr Index kClosedLoopWarmup = 50;

struct ClosedLoopOptions {
    Index T_v = 500;
    Index rho = 1;
    Index warmup = kClosedLoopWarmup;
    ExcitationSpec excitation;
    double r = 5e-6;  // input weight of the index
    std::uint64_t seed = 0;
};

struct ClosedLoopResult {
    Matrix y_log;   // T_v x p (fewer rows when halted)
    Matrix u_log;   // T_v x m
    Matrix e_log;   // innovations applied during the closed loop
    Matrix y_ref;   // T_v x p
    Matrix warmup_y, warmup_u;
    std::vector<double> step_J, step_r;  // filled when the controller reports a cost split
    double J_a = 0.0;
    bool unstable = false;
    Index steps = 0;
    double solve_seconds = 0.0;
};

/// (1/T_v) sum ||y - y_r||^2 + r ||u||^2 over rows.
inline double performance_index(const Matrix& y_log, const Matrix& u_log, const Matrix& y_ref, double r) {
    require_dims(y_log.rows() == u_log.rows() && y_log.rows() == y_ref.rows(), "log lengths differ");
    require_dims(y_log.cols() == y_ref.cols(), "output and reference widths differ");
    require(y_log.rows() >= 1, ErrorCode::InsufficientSamples, "empty logs");
    return ((y_log - y_ref).squaredNorm() + r * u_log.squaredNorm()) / static_cast<double>(y_log.rows());
}

/// z_ini from the samples t-rho .. t-1 of the logs (rows), oldest block first.
inline Vector stack_z_ini(const Matrix& y_hist, const Matrix& u_hist, Index end, Index rho) {
    require(end >= rho, ErrorCode::InsufficientSamples, "not enough history for z_ini");
    const Index p = y_hist.cols();
    const Index m = u_hist.cols();
    Vector z((m + p) * rho);
    for (Index k = 0; k < rho; ++k) {
        const Index row = end - rho + k;
        z.segment(k * (m + p), p) = y_hist.row(row).transpose();
        z.segment(k * (m + p) + p, m) = u_hist.row(row).transpose();
    }
    return z;
}

/// Warmup under excitation from x = 0, then T_v receding-horizon steps on the
/// reference (rows: at least T_v + T - 1 samples, lookahead held otherwise).
inline ClosedLoopResult run_closed_loop(const PlantModel& plant, Controller& controller, const Matrix& reference,
                                        const ClosedLoopOptions& opt) {
    const Index m = plant.m();
    const Index p = plant.p();
    const Index T = controller.horizon();
    require(opt.T_v >= 1 && opt.rho >= 1, ErrorCode::Config, "T_v and rho must be positive");
    require(opt.warmup >= opt.rho, ErrorCode::InsufficientSamples, "warmup must supply at least rho samples");
    require_dims(reference.cols() == p && reference.rows() >= opt.T_v, "reference has wrong shape");

    auto warm_in = make_rng(opt.seed, kWarmupInputStream);
    auto warm_noise = make_rng(opt.seed, kWarmupNoiseStream);
    auto noise_rng = make_rng(opt.seed, kNoiseStream);
    const double sd = std::sqrt(plant.sigma2);

    ClosedLoopResult res;
    Vector x = Vector::Zero(plant.n());
    res.warmup_u = excitation_signal(opt.excitation, m, opt.warmup, warm_in);
    const Matrix warm_e = gaussian_matrix(warm_noise, opt.warmup, p, sd);
    res.warmup_y = propagate(plant, x, res.warmup_u, warm_e);
    for (Index t = 0; t < opt.warmup; ++t)
        controller.observe(res.warmup_y.row(t).transpose(), res.warmup_u.row(t).transpose());

    res.e_log = gaussian_matrix(noise_rng, opt.T_v, p, sd);
    res.y_ref = reference.topRows(opt.T_v);

    const Index total = opt.warmup + opt.T_v;
    Matrix y_hist(total, p), u_hist(total, m);
    y_hist.topRows(opt.warmup) = res.warmup_y;
    u_hist.topRows(opt.warmup) = res.warmup_u;

    Vector y_r(p * T);
    for (Index t = 0; t < opt.T_v; ++t) {
        const Index now = opt.warmup + t;
        const Vector z_ini = stack_z_ini(y_hist, u_hist, now, opt.rho);
        for (Index h = 0; h < T; ++h)
            y_r.segment(h * p, p) = reference.row(std::min(t + h, reference.rows() - 1)).transpose();

        Vector u_f;
        const auto start = std::chrono::steady_clock::now();
        try {
            u_f = controller.compute({t, z_ini, y_r});
        } catch (const Error& err) {
            throw Error(err.code(), controller.name() + " failed at closed-loop step " + std::to_string(t) + ": " +
                                        err.what());
        }
        res.solve_seconds += std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        require_dims(u_f.size() == m * T, "controller returned a wrong-length input sequence");
        if (auto costs = controller.last_costs()) {
            res.step_J.push_back(costs->J);
            res.step_r.push_back(costs->r);
        }

        const Vector u = u_f.head(m);
        const Vector e = res.e_log.row(t).transpose();
        const Vector y = plant.C * x + plant.D * u + e;
        x = plant.A * x + plant.B * u + plant.K * e;
        y_hist.row(now) = y.transpose();
        u_hist.row(now) = u.transpose();
        controller.observe(y, u);
        res.steps = t + 1;

        if (!y.allFinite() || y.norm() > kBlowupThreshold || !u.allFinite()) {
            res.unstable = true;
            break;
        }
    }

    res.y_log = y_hist.middleRows(opt.warmup, res.steps);
    res.u_log = u_hist.middleRows(opt.warmup, res.steps);
    res.J_a = res.unstable ? kInf : performance_index(res.y_log, res.u_log, res.y_ref, opt.r);
    return res;
}

inline void write_closed_loop_csv(std::ostream& os, const ClosedLoopResult& res) {
    const Index p = res.y_log.cols();
    const Index m = res.u_log.cols();
    os << "t";
    for (Index j = 0; j < p; ++j)
        os << ",y" << j;
    for (Index j = 0; j < m; ++j)
        os << ",u" << j;
    for (Index j = 0; j < p; ++j)
        os << ",y_r" << j;
    os << '\n';
    for (Index t = 0; t < res.steps; ++t) {
        os << t;
        for (Index j = 0; j < p; ++j)
            os << ',' << detail::format_double(res.y_log(t, j));
        for (Index j = 0; j < m; ++j)
            os << ',' << detail::format_double(res.u_log(t, j));
        for (Index j = 0; j < p; ++j)
            os << ',' << detail::format_double(res.y_ref(t, j));
        os << '\n';
    }
}

} // namespace fce
