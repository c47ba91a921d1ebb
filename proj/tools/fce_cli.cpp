#include "fce/fce.hpp"

#include <CLI11.hpp>

#include <iomanip>
#include <iostream>

namespace fs = std::filesystem;
using namespace fce;

namespace {

struct Options {
    std::string config;
    std::string out;
    std::string data;
    std::optional<std::uint64_t> seed;
    std::optional<Index> runs;
    std::optional<int> jobs;
    bool full_grids = false;
};

RunConfig load(const Options& o) {
    RunConfig rc = load_run_config(o.config);
    if (o.seed)
        rc.bench.base_seed = *o.seed;
    if (o.runs)
        rc.bench.n_runs = *o.runs;
    if (o.jobs)
        rc.bench.jobs = *o.jobs;
    if (o.full_grids)
        rc.bench.full_grids = true;
    rc.bench.validate();
    return rc;
}

Dataset training_data(const Options& o, const RunConfig& rc) {
    if (!o.data.empty())
        return load_dataset(o.data);
    if (rc.dataset)
        return load_dataset((fs::path(o.config).parent_path() / *rc.dataset).string());
    const auto& b = rc.bench;
    return simulate_open_loop(b.plant, b.excitation, b.N_data, b.base_seed);
}

int cmd_simulate(const Options& o) {
    const auto rc = load(o);
    const auto& b = rc.bench;
    const auto rec = simulate_open_loop_record(b.plant, b.excitation, b.N_data, b.base_seed);
    save_dataset(o.out, rec.data);
    std::cout << "seed " << b.base_seed << "\n";
    if (b.plant.sigma2 > 0.0)
        std::cout << "snr_db " << std::fixed << std::setprecision(3) << measure_snr_db(rec) << "\n";
    else
        std::cout << "snr_db inf\n";
    std::cout << "wrote " << o.out << " (" << rec.data.size() << " samples)\n";
    return 0;
}

int cmd_fit(const Options& o) {
    const auto rc = load(o);
    const auto& b = rc.bench;
    const Dataset data = training_data(o, rc);
    const auto ctx = prepare_run(b.plant, data, b.control_spec(), b.rho_max, b.rho_fixed);
    if (!b.rho_fixed) {
        std::cout << "rho  sigma2_hat        aic\n";
        for (const auto& c : aic_table(data, std::min<Index>(b.rho_max, data.size() - 2)))
            std::cout << std::setw(3) << c.rho << "  " << std::setw(12) << c.sigma2_hat << "  " << c.aic << "\n";
    }
    std::cout << "selected rho " << ctx.rho << ", sigma2_hat " << ctx.model.sigma2_hat << ", sigma_hat(L33) "
              << sigma_hat_lq(*ctx.lq) << "\n";
    write_text(o.out, model_to_json(ctx.model).dump(2) + "\n");
    return 0;
}

int cmd_control(const Options& o) {
    const auto rc = load(o);
    const auto& b = rc.bench;
    const SchemeSpec scheme = rc.control ? *rc.control : b.schemes.front();
    RunContext ctx;
    if (scheme.kind == SchemeKind::MpcOracle) {
        // The true-plant law needs no training data.
        ctx.plant = &b.plant;
        ctx.spec = b.control_spec();
        ctx.rho = b.rho_fixed.value_or(1);
    } else {
        ctx = prepare_run(b.plant, training_data(o, rc), b.control_spec(), b.rho_max, b.rho_fixed);
    }

    ClosedLoopOptions opt;
    opt.T_v = b.T_v;
    opt.rho = ctx.rho;
    opt.warmup = std::max(b.warmup, ctx.rho);
    opt.excitation = b.excitation;
    opt.r = b.r;
    opt.seed = closed_loop_seed(b, 0);
    const Matrix ref = make_reference(b.test_ref(), b.T, b.plant.p());

    std::optional<ParamPoint> point = scheme.fixed;
    if (!point && is_tunable(scheme.kind)) {
        if (scheme.tuning == Tuning::Online) {
            point = online_point(scheme.kind, ctx);
        } else {
            const Matrix tune_ref = make_reference(b.tuning_ref(), b.T, b.plant.p());
            point = grid_search(scheme.kind, b.grid(scheme.kind), ctx, tune_ref, opt).best;
        }
    }
    auto controller = make_controller(scheme.kind, ctx, point);
    const auto res = run_closed_loop(b.plant, *controller, ref, opt);

    fs::create_directories(o.out);
    std::ostringstream csv;
    write_closed_loop_csv(csv, res);
    write_text(fs::path(o.out) / "closed_loop.csv", csv.str());

    Json s;
    s["scheme"] = scheme.label();
    s["seed"] = b.base_seed;
    s["rho"] = ctx.rho;
    s["params"] = point ? Json::array({detail::number_json(point->a), detail::number_json(point->b)}) : Json();
    s["J_a"] = detail::number_json(res.J_a);
    s["unstable"] = res.unstable;
    s["steps"] = res.steps;
    if (!res.step_J.empty()) {
        s["step_J"] = res.step_J;
        s["step_r"] = res.step_r;
    }
    write_text(fs::path(o.out) / "summary.json", s.dump(2) + "\n");
    std::cout << scheme.label() << ": J_a " << (res.unstable ? std::string("inf (unstable)") : std::to_string(res.J_a))
              << ", rho " << ctx.rho << "\n";
    return 0;
}

void print_table(std::ostream& os, const Json& rep) {
    os << "setup " << rep.at("setup") << ", runs " << rep.at("runs") << "\n";
    os << std::left << std::setw(16) << "scheme" << std::right << std::setw(14) << "median" << std::setw(14) << "q1"
       << std::setw(14) << "q3" << std::setw(12) << "unstable" << "\n";
    for (const auto& s : rep.at("schemes")) {
        const auto& st = s.at("stats");
        auto num = [](const Json& v) {
            if (v.is_string())
                return v.get<std::string>();
            std::ostringstream o;
            o << std::setprecision(5) << v.get<double>();
            return o.str();
        };
        os << std::left << std::setw(16) << s.at("label").get<std::string>() << std::right << std::setw(14)
           << num(st.at("median")) << std::setw(14) << num(st.at("q1")) << std::setw(14) << num(st.at("q3"))
           << std::setw(12) << st.at("instability_fraction").get<double>() << "\n";
    }
}

int cmd_bench(const Options& o) {
    const auto rc = load(o);
    const auto rep = run_benchmark(rc.bench);
    const auto files = write_report(rep, o.out);
    print_table(std::cout, report_to_json(rep));
    std::cout << "wrote " << files.size() << " files to " << o.out << "\n";
    return 0;
}

int cmd_report(const Options& o) {
    fs::path path = o.config;
    if (fs::is_directory(path))
        path /= "report.json";
    if (!fs::exists(path))
        throw Error(ErrorCode::Config, "config not found: " + path.string());
    std::ifstream is(path);
    Json rep;
    try {
        rep = Json::parse(is);
        std::ostringstream table;
        print_table(table, rep);
        std::cout << table.str();
        if (!o.out.empty())
            write_text(o.out, table.str());
    } catch (const Json::exception& e) {
        throw Error(ErrorCode::Config, path.string() + ": " + e.what());
    }
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Final Control Error predictive control toolkit"};
    app.require_subcommand(1);
    Options o;

    auto add_common = [&](CLI::App* sub, bool needs_out) {
        sub->add_option("--config", o.config, "JSON configuration file")->required();
        auto* out = sub->add_option("--out", o.out, "output file or directory");
        if (needs_out)
            out->required();
        sub->add_option("--seed", o.seed, "override the configured seed");
    };

    auto* sim = app.add_subcommand("simulate", "generate an open-loop training dataset");
    add_common(sim, true);
    auto* fit = app.add_subcommand("fit", "select the ARX order and fit the predictor");
    add_common(fit, true);
    fit->add_option("--data", o.data, "dataset CSV (default: simulate from the config)");
    auto* ctl = app.add_subcommand("control", "run one closed-loop episode");
    add_common(ctl, true);
    ctl->add_option("--data", o.data, "dataset CSV (default: simulate from the config)");
    auto* bench = app.add_subcommand("bench", "run the Monte-Carlo benchmark");
    add_common(bench, true);
    bench->add_option("--runs", o.runs, "number of Monte-Carlo runs");
    bench->add_flag("--full-grids", o.full_grids, "use the full tuning grids");
    bench->add_option("--jobs", o.jobs, "worker threads (parallel across runs)");
    auto* report = app.add_subcommand("report", "print the summary table of a benchmark report");
    report->add_option("--config", o.config, "report.json or benchmark output directory")->required();
    report->add_option("--out", o.out, "also write the table to this file");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (*sim)
            return cmd_simulate(o);
        if (*fit)
            return cmd_fit(o);
        if (*ctl)
            return cmd_control(o);
        if (*bench)
            return cmd_bench(o);
        if (*report)
            return cmd_report(o);
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return e.code() == ErrorCode::Config ? 2 : 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}
