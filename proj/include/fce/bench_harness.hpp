#pragma once

// Monte-Carlo comparison of the controllers: per run a fresh training set,
// AIC order, fits, optional oracle tuning on closed-loop experiments with the
// true plant, then one closed-loop test per scheme on a shared noise stream.

#include "controllers.hpp"

#include <algorithm>
#include <atomic>
#include <map>
#include <mutex>
#include <thread>

namespace fce {

enum class SchemeKind { Fce, DeePc, Gamma2, Gamma3, Gamma23, Thm3, MpcOracle };
enum class Tuning { None, OfflineOracle, Online };

inline std::string to_string(SchemeKind k) {
    switch (k) {
    case SchemeKind::Fce: return "fce";
    case SchemeKind::DeePc: return "deepc";
    case SchemeKind::Gamma2: return "gamma2";
    case SchemeKind::Gamma3: return "gamma3";
    case SchemeKind::Gamma23: return "gamma23";
    case SchemeKind::Thm3: return "thm3";
    case SchemeKind::MpcOracle: return "mpc_oracle";
    }
    return "?";
}

inline std::string to_string(Tuning t) {
    switch (t) {
    case Tuning::None: return "none";
    case Tuning::OfflineOracle: return "offline_oracle";
    case Tuning::Online: return "online";
    }
    return "?";
}

inline SchemeKind parse_scheme_kind(const std::string& s) {
    for (auto k : {SchemeKind::Fce, SchemeKind::DeePc, SchemeKind::Gamma2, SchemeKind::Gamma3, SchemeKind::Gamma23,
                   SchemeKind::Thm3, SchemeKind::MpcOracle})
        if (to_string(k) == s)
            return k;
    throw Error(ErrorCode::Config, "unknown scheme '" + s + "'");
}

inline Tuning parse_tuning(const std::string& s) {
    for (auto t : {Tuning::None, Tuning::OfflineOracle, Tuning::Online})
        if (to_string(t) == s)
            return t;
    throw Error(ErrorCode::Config, "unknown tuning mode '" + s + "'");
}

inline bool is_tunable(SchemeKind k) {
    return k == SchemeKind::DeePc || k == SchemeKind::Gamma2 || k == SchemeKind::Gamma3 || k == SchemeKind::Gamma23;
}

/// Regularisation point: (beta2, beta3) for the gamma schemes, (lambda1, lambda2) for DeePC.
/// gamma2 uses beta3 = inf, gamma3 uses beta2 = 0.
struct ParamPoint {
    double a = 0.0;
    double b = 0.0;
    bool operator==(const ParamPoint&) const = default;
};

struct SchemeSpec {
    SchemeKind kind = SchemeKind::Fce;
    Tuning tuning = Tuning::None;
    std::optional<ParamPoint> fixed;  // explicit parameters, bypassing tuning

    [[nodiscard]] std::string label() const {
        if (!is_tunable(kind))
            return to_string(kind);
        if (fixed)
            return to_string(kind) + "_fixed";
        return to_string(kind) + (tuning == Tuning::Online ? "_online" : "_oracle");
    }

    void validate() const {
        if (fixed)
            return;
        if (is_tunable(kind))
            require(tuning != Tuning::None, ErrorCode::Config, to_string(kind) + " needs a tuning mode or parameters");
        else
            require(tuning == Tuning::None, ErrorCode::Config, to_string(kind) + " has no parameters to tune");
        if (kind == SchemeKind::DeePc || kind == SchemeKind::Gamma23)
            require(tuning != Tuning::Online, ErrorCode::Config, to_string(kind) + " has no online rule");
    }
};

// ---------------------------------------------------------------------------
// Grids

inline std::vector<double> logspace(double lo_exp, double hi_exp, int n) {
    std::vector<double> out;
    for (int i = 0; i < n; ++i)
        out.push_back(std::pow(10.0, n == 1 ? lo_exp : lo_exp + (hi_exp - lo_exp) * i / (n - 1)));
    return out;
}

inline std::vector<double> with_ends(std::vector<double> v, bool zero, bool inf) {
    if (zero)
        v.insert(v.begin(), 0.0);
    if (inf)
        v.push_back(kInf);
    return v;
}

inline std::vector<ParamPoint> product_grid(const std::vector<double>& a, const std::vector<double>& b) {
    std::vector<ParamPoint> out;
    for (double x : a)
        for (double y : b)
            out.push_back({x, y});
    return out;
}

inline std::vector<ParamPoint> line_grid_a(const std::vector<double>& a, double b) {
    std::vector<ParamPoint> out;
    for (double x : a)
        out.push_back({x, b});
    return out;
}

inline std::vector<ParamPoint> line_grid_b(double a, const std::vector<double>& b) {
    std::vector<ParamPoint> out;
    for (double y : b)
        out.push_back({a, y});
    return out;
}

/// Default grids: at most 25 points; full grids follow the published ranges.
inline std::vector<ParamPoint> default_grid(SchemeKind kind, bool full) {
    switch (kind) {
    case SchemeKind::Gamma2:
        return line_grid_a(with_ends(logspace(-3, 1, full ? 200 : 23), true, true), kInf);
    case SchemeKind::Gamma3:
        return line_grid_b(0.0, with_ends(logspace(-7, -3, full ? 200 : 23), true, true));
    case SchemeKind::Gamma23:
        if (full)
            return product_grid(with_ends(logspace(-3, 1, 12), true, true), with_ends(logspace(-7, -3, 12), true, true));
        return product_grid(with_ends(logspace(-3, 1, 3), true, true), with_ends(logspace(-7, -3, 3), true, true));
    case SchemeKind::DeePc:
        if (full)
            return product_grid(with_ends(logspace(-6, -1, 9), true, true), with_ends(logspace(-7, -2.5, 10), true, false));
        return product_grid(with_ends(logspace(-6, -1, 3), true, true), with_ends(logspace(-7, -2.5, 4), true, false));
    default:
        throw Error(ErrorCode::Config, to_string(kind) + " has no parameter grid");
    }
}

/// Lower cost wins; equal costs go to the more regularised point (lexicographic in (a, b)).
inline bool preferred(const ParamPoint& cand, double J_cand, const ParamPoint& best, double J_best) {
    if (J_cand != J_best)
        return J_cand < J_best;
    return std::pair(cand.a, cand.b) > std::pair(best.a, best.b);
}

// ---------------------------------------------------------------------------
// Per-run context

struct BenchmarkConfig {
    PlantModel plant = benchmark_plant();
    ExcitationSpec excitation;
    Index N_data = 250;
    Index T = 20;
    Index T_v = 500;
    Index n_runs = 20;
    double q_o = 1.0;
    double r = 5e-6;
    int setup = 1;
    Index rho_max = 15;
    std::optional<Index> rho_fixed;
    Index warmup = kClosedLoopWarmup;
    std::vector<SchemeSpec> schemes;
    std::map<SchemeKind, std::vector<ParamPoint>> grids;  // overrides of the default grids
    bool full_grids = false;
    std::uint64_t base_seed = 1;
    int jobs = 1;
    std::optional<ReferenceSpec> tuning_reference;  // overrides the setup
    std::optional<ReferenceSpec> test_reference;

    [[nodiscard]] ControlSpec control_spec() const {
        return ControlSpec::tracking(T, plant.m(), plant.p(), q_o, r);
    }

    [[nodiscard]] std::vector<ParamPoint> grid(SchemeKind k) const {
        if (auto it = grids.find(k); it != grids.end())
            return it->second;
        return default_grid(k, full_grids);
    }

    [[nodiscard]] ReferenceSpec tuning_ref() const {
        if (tuning_reference)
            return *tuning_reference;
        return setup == 2 ? ReferenceSpec::multilevel(T_v) : ReferenceSpec::square_wave(T_v);
    }
    [[nodiscard]] ReferenceSpec test_ref() const {
        if (test_reference)
            return *test_reference;
        return setup == 1 ? ReferenceSpec::square_wave(T_v) : ReferenceSpec::multilevel(T_v);
    }

    void validate() const {
        require(n_runs >= 1, ErrorCode::Config, "runs must be at least 1");
        require(N_data >= 1 && T >= 1 && T_v >= 1, ErrorCode::Config, "N_data, T and T_v must be positive");
        require(setup >= 1 && setup <= 3, ErrorCode::Config, "setup must be 1, 2 or 3");
        require(rho_max >= 1, ErrorCode::Config, "rho_max must be at least 1");
        require(q_o > 0.0 && r > 0.0, ErrorCode::Config, "q_o and r must be positive");
        require(jobs >= 1, ErrorCode::Config, "jobs must be at least 1");
        require(!schemes.empty(), ErrorCode::Config, "no schemes configured");
        for (const auto& s : schemes) {
            s.validate();
            if (is_tunable(s.kind) && s.tuning == Tuning::OfflineOracle && !s.fixed)
                require(!grid(s.kind).empty(), ErrorCode::Config, "empty grid for " + s.label());
        }
        for (const auto& [k, g] : grids)
            require(!g.empty(), ErrorCode::Config, "empty grid for " + to_string(k));
    }
};

inline std::vector<SchemeSpec> all_schemes() {
    return {{SchemeKind::Fce, Tuning::None},
            {SchemeKind::DeePc, Tuning::OfflineOracle},
            {SchemeKind::Gamma2, Tuning::OfflineOracle},
            {SchemeKind::Gamma2, Tuning::Online},
            {SchemeKind::Gamma3, Tuning::OfflineOracle},
            {SchemeKind::Gamma3, Tuning::Online},
            {SchemeKind::Gamma23, Tuning::OfflineOracle},
            {SchemeKind::Thm3, Tuning::None},
            {SchemeKind::MpcOracle, Tuning::None}};
}

/// Everything a controller may be built from for one Monte-Carlo run.
struct RunContext {
    Dataset data;
    Index rho = 0;
    ArxModel model;
    std::shared_ptr<const LqFactors> lq;
    ControlSpec spec;
    const PlantModel* plant = nullptr;
    double training_seconds = 0.0;
};

inline RunContext prepare_run(const PlantModel& plant, const Dataset& data, const ControlSpec& spec, Index rho_max,
                              std::optional<Index> rho_fixed) {
    const auto start = std::chrono::steady_clock::now();
    RunContext ctx;
    ctx.data = data;
    ctx.plant = &plant;
    ctx.spec = spec;
    if (rho_fixed) {
        ctx.rho = *rho_fixed;
    } else {
        // Keep the LQ partition well posed for the largest admissible order.
        Index cap = rho_max;
        const Index m = data.m(), p = data.p();
        while (cap > 1 && data.size() - cap - spec.T + 1 < (m + p) * cap + (m + p) * spec.T)
            --cap;
        ctx.rho = select_order_aic(data, cap);
    }
    const auto parts = partition(data, ctx.rho, spec.T);
    ctx.model = fit_arx(parts);
    ctx.lq = std::make_shared<const LqFactors>(lq_decompose(parts));
    ctx.training_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return ctx;
}

/// Online rule: sigma_hat^2 Tr[Q_o] / N with sigma_hat = Tr(L33)/(pT).
inline ParamPoint online_point(SchemeKind kind, const RunContext& ctx) {
    const double w = thm3_config(*ctx.lq, ctx.spec).beta2;
    switch (kind) {
    case SchemeKind::Gamma2: return {w, kInf};
    case SchemeKind::Gamma3: return {0.0, w};
    default: throw Error(ErrorCode::Config, to_string(kind) + " has no online rule");
    }
}

inline std::unique_ptr<Controller> make_controller(SchemeKind kind, const RunContext& ctx,
                                                   std::optional<ParamPoint> point = std::nullopt) {
    switch (kind) {
    case SchemeKind::Fce:
        return std::make_unique<FceControl>(ctx.model, ctx.spec);
    case SchemeKind::MpcOracle:
        return std::make_unique<OracleMpcControl>(*ctx.plant, ctx.spec);
    case SchemeKind::Thm3:
        return std::make_unique<GammaControl>(ctx.lq, ctx.spec, thm3_config(*ctx.lq, ctx.spec), "thm3");
    case SchemeKind::Gamma2:
    case SchemeKind::Gamma3:
    case SchemeKind::Gamma23: {
        require(point.has_value(), ErrorCode::Config, to_string(kind) + " needs parameters");
        GammaConfig g{point->a, point->b};
        if (kind == SchemeKind::Gamma2)
            g.beta3 = kInf;
        if (kind == SchemeKind::Gamma3)
            g.beta2 = 0.0;
        return std::make_unique<GammaControl>(ctx.lq, ctx.spec, g, to_string(kind));
    }
    case SchemeKind::DeePc:
        require(point.has_value(), ErrorCode::Config, "deepc needs parameters");
        return std::make_unique<DeePcControl>(ctx.lq, ctx.spec, DeePcConfig{point->a, point->b});
    }
    throw Error(ErrorCode::Config, "unknown scheme");
}

/// Closed-loop cost of one controller; failures count as unstable.
inline ClosedLoopResult evaluate(const PlantModel& plant, Controller& c, const Matrix& ref,
                                 const ClosedLoopOptions& opt) {
    try {
        return run_closed_loop(plant, c, ref, opt);
    } catch (const Error&) {
        ClosedLoopResult res;
        res.J_a = kInf;
        res.unstable = true;
        return res;
    }
}

struct GridSearchResult {
    ParamPoint best;
    double best_J = kInf;
    std::vector<double> costs;  // one per grid point
};

/// Oracle tuning: one closed-loop experiment per point with a fixed seed.
inline GridSearchResult grid_search(SchemeKind kind, const std::vector<ParamPoint>& grid, const RunContext& ctx,
                                    const Matrix& tuning_reference, const ClosedLoopOptions& opt) {
    require(!grid.empty(), ErrorCode::Config, "grid is empty");
    GridSearchResult out;
    bool found = false;
    for (const auto& point : grid) {
        double J = kInf;
        try {
            auto c = make_controller(kind, ctx, point);
            J = evaluate(*ctx.plant, *c, tuning_reference, opt).J_a;
        } catch (const Error&) {
            J = kInf;
        }
        out.costs.push_back(J);
        if (!std::isfinite(J))
            continue;
        if (!found || preferred(point, J, out.best, out.best_J)) {
            out.best = point;
            out.best_J = J;
            found = true;
        }
    }
    if (!found)
        throw Error(ErrorCode::AllPointsUnstable, "every grid point of " + to_string(kind) + " was unstable");
    return out;
}

// ---------------------------------------------------------------------------
// Statistics

struct SummaryStats {
    std::size_t n = 0;
    double median = 0, q1 = 0, q3 = 0;
    double whisker_low = 0, whisker_high = 0;
    double instability_fraction = 0;
    std::size_t n_unstable = 0;
};

/// Type-7 (linear interpolation) quantile of sorted data; +inf entries stay at the top.
inline double quantile_sorted(const std::vector<double>& s, double prob) {
    const double h = (static_cast<double>(s.size()) - 1.0) * prob;
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const auto hi = std::min(lo + 1, s.size() - 1);
    const double w = h - static_cast<double>(lo);
    if (w == 0.0 || s[lo] == s[hi])
        return s[lo];
    if (std::isinf(s[hi]))
        return kInf;
    return s[lo] + w * (s[hi] - s[lo]);
}

inline SummaryStats summarize(std::vector<double> samples) {
    require(!samples.empty(), ErrorCode::InsufficientSamples, "no samples to summarize");
    std::sort(samples.begin(), samples.end());
    SummaryStats st;
    st.n = samples.size();
    st.n_unstable = static_cast<std::size_t>(std::count(samples.begin(), samples.end(), kInf));
    st.instability_fraction = static_cast<double>(st.n_unstable) / static_cast<double>(st.n);
    st.median = quantile_sorted(samples, 0.5);
    st.q1 = quantile_sorted(samples, 0.25);
    st.q3 = quantile_sorted(samples, 0.75);
    const double iqr = st.q3 - st.q1;
    const double lo_fence = std::isfinite(iqr) ? st.q1 - 1.5 * iqr : -kInf;
    const double hi_fence = std::isfinite(iqr) ? st.q3 + 1.5 * iqr : kInf;
    st.whisker_low = *std::find_if(samples.begin(), samples.end(), [&](double v) { return v >= lo_fence; });
    st.whisker_high = *std::find_if(samples.rbegin(), samples.rend(), [&](double v) { return v <= hi_fence; });
    return st;
}

// ---------------------------------------------------------------------------
// Benchmark

struct SchemeTiming {
    double training = 0;  // seconds per run
    double offline_search = 0;
    double optimization = 0;  // per closed-loop step
};

struct SchemeRecord {
    SchemeSpec scheme;
    std::vector<double> samples;  // J_a per run, +inf when unstable
    std::vector<std::optional<ParamPoint>> params;
    std::vector<std::string> failures;  // empty string when the run went through
    SummaryStats stats;
    SchemeTiming timing;
};

struct BenchmarkReport {
    int setup = 1;
    Index n_runs = 0;
    std::vector<Index> rho_hat;
    std::vector<SchemeRecord> schemes;

    [[nodiscard]] const SchemeRecord& scheme(const std::string& label) const {
        for (const auto& s : schemes)
            if (s.scheme.label() == label)
                return s;
        throw Error(ErrorCode::Config, "scheme '" + label + "' not in report");
    }
};

inline std::uint64_t dataset_seed(const BenchmarkConfig& cfg, Index run) {
    return cfg.base_seed + static_cast<std::uint64_t>(run);
}

inline std::uint64_t closed_loop_seed(const BenchmarkConfig& cfg, Index run) {
    return (cfg.base_seed + static_cast<std::uint64_t>(run)) * 1000003ULL + 17ULL;
}

struct RunOutcome {
    Index rho = 0;
    std::vector<double> J;
    std::vector<std::optional<ParamPoint>> params;
    std::vector<std::string> failures;
    std::vector<SchemeTiming> timing;
};

inline RunOutcome execute_run(const BenchmarkConfig& cfg, Index run) {
    const std::size_t ns = cfg.schemes.size();
    RunOutcome out;
    out.J.assign(ns, kInf);
    out.params.assign(ns, std::nullopt);
    out.failures.assign(ns, "");
    out.timing.assign(ns, {});

    RunContext ctx;
    try {
        const Dataset data = simulate_open_loop(cfg.plant, cfg.excitation, cfg.N_data, dataset_seed(cfg, run));
        ctx = prepare_run(cfg.plant, data, cfg.control_spec(), cfg.rho_max, cfg.rho_fixed);
    } catch (const Error& e) {
        for (auto& f : out.failures)
            f = std::string("training: ") + e.what();
        return out;
    }
    out.rho = ctx.rho;

    ClosedLoopOptions opt;
    opt.T_v = cfg.T_v;
    opt.rho = ctx.rho;
    opt.warmup = std::max(cfg.warmup, ctx.rho);
    opt.excitation = cfg.excitation;
    opt.r = cfg.r;
    opt.seed = closed_loop_seed(cfg, run);
    const Matrix tune_ref = make_reference(cfg.tuning_ref(), cfg.T, cfg.plant.p());
    const Matrix test_ref = make_reference(cfg.test_ref(), cfg.T, cfg.plant.p());

    std::map<SchemeKind, GridSearchResult> tuned;  // shared by repeated schemes
    for (std::size_t i = 0; i < ns; ++i) {
        const auto& s = cfg.schemes[i];
        out.timing[i].training = ctx.training_seconds;
        try {
            std::optional<ParamPoint> point = s.fixed;
            if (!point && is_tunable(s.kind)) {
                if (s.tuning == Tuning::Online) {
                    point = online_point(s.kind, ctx);
                } else {
                    const auto start = std::chrono::steady_clock::now();
                    auto it = tuned.find(s.kind);
                    if (it == tuned.end())
                        it = tuned.emplace(s.kind, grid_search(s.kind, cfg.grid(s.kind), ctx, tune_ref, opt)).first;
                    point = it->second.best;
                    out.timing[i].offline_search =
                        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
                }
            }
            out.params[i] = point;
            auto c = make_controller(s.kind, ctx, point);
            const auto res = run_closed_loop(cfg.plant, *c, test_ref, opt);
            out.J[i] = res.J_a;
            out.timing[i].optimization = res.steps > 0 ? res.solve_seconds / static_cast<double>(res.steps) : 0.0;
        } catch (const Error& e) {
            out.J[i] = kInf;
            out.failures[i] = e.what();
        }
    }
    return out;
}

inline BenchmarkReport run_benchmark(const BenchmarkConfig& cfg) {
    cfg.validate();
    std::vector<RunOutcome> outcomes(static_cast<std::size_t>(cfg.n_runs));
    std::atomic<Index> next{0};
    auto worker = [&] {
        for (Index run = next++; run < cfg.n_runs; run = next++)
            outcomes[static_cast<std::size_t>(run)] = execute_run(cfg, run);
    };
    const int jobs = static_cast<int>(std::min<Index>(cfg.jobs, cfg.n_runs));
    if (jobs <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int j = 0; j < jobs; ++j)
            pool.emplace_back(worker);
        for (auto& t : pool)
            t.join();
    }

    BenchmarkReport rep;
    rep.setup = cfg.setup;
    rep.n_runs = cfg.n_runs;
    for (const auto& o : outcomes)
        rep.rho_hat.push_back(o.rho);
    for (std::size_t i = 0; i < cfg.schemes.size(); ++i) {
        SchemeRecord rec;
        rec.scheme = cfg.schemes[i];
        for (const auto& o : outcomes) {
            rec.samples.push_back(o.J[i]);
            rec.params.push_back(o.params[i]);
            rec.failures.push_back(o.failures[i]);
            rec.timing.training += o.timing[i].training;
            rec.timing.offline_search += o.timing[i].offline_search;
            rec.timing.optimization += o.timing[i].optimization;
        }
        const double n = static_cast<double>(cfg.n_runs);
        rec.timing.training /= n;
        rec.timing.offline_search /= n;
        rec.timing.optimization /= n;
        rec.stats = summarize(rec.samples);
        rep.schemes.push_back(std::move(rec));
    }
    return rep;
}

} // namespace fce
