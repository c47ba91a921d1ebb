#pragma once

// JSON run configuration, model persistence and report output.

#include "bench_harness.hpp"

#include <json.hpp>

#include <filesystem>
#include <set>

namespace fce {

using Json = nlohmann::json;

struct RunConfig {
    BenchmarkConfig bench;
    std::optional<std::string> dataset;
    std::optional<SchemeSpec> control;
    int verbosity = 0;
};

namespace detail {

inline void reject_unknown(const Json& obj, const std::set<std::string>& allowed, const std::string& where) {
    require(obj.is_object(), ErrorCode::Config, where + " must be an object");
    for (const auto& [key, _] : obj.items())
        if (!allowed.count(key))
            throw Error(ErrorCode::Config, "unknown key '" + key + "' in " + where);
}

inline double json_number(const Json& v, const std::string& what) {
    if (v.is_number())
        return v.get<double>();
    if (v.is_string()) {
        const auto s = v.get<std::string>();
        if (s == "inf" || s == "+inf")
            return kInf;
        if (s == "-inf")
            return -kInf;
    }
    throw Error(ErrorCode::Config, what + " must be a number or \"inf\"");
}

inline Index json_index(const Json& v, const std::string& what) {
    require(v.is_number_integer(), ErrorCode::Config, what + " must be an integer");
    return v.get<Index>();
}

inline Matrix json_matrix(const Json& v, const std::string& what) {
    require(v.is_array() && !v.empty(), ErrorCode::Config, what + " must be a nonempty array of rows");
    const Index rows = static_cast<Index>(v.size());
    require(v[0].is_array() && !v[0].empty(), ErrorCode::Config, what + " rows must be nonempty arrays");
    const Index cols = static_cast<Index>(v[0].size());
    Matrix M(rows, cols);
    for (Index i = 0; i < rows; ++i) {
        require(v[i].is_array() && static_cast<Index>(v[i].size()) == cols, ErrorCode::Config,
                what + " has ragged rows");
        for (Index j = 0; j < cols; ++j)
            M(i, j) = json_number(v[i][j], what);
    }
    return M;
}

inline Json number_json(double v) {
    if (std::isinf(v))
        return v > 0 ? Json("inf") : Json("-inf");
    return v;
}

inline Json matrix_json(const Matrix& M) {
    Json rows = Json::array();
    for (Index i = 0; i < M.rows(); ++i) {
        Json row = Json::array();
        for (Index j = 0; j < M.cols(); ++j)
            row.push_back(M(i, j));
        rows.push_back(row);
    }
    return rows;
}

inline ParamPoint json_point(const Json& v, const std::string& what) {
    require(v.is_array() && v.size() == 2, ErrorCode::Config, what + " must be a pair [a, b]");
    return {json_number(v[0], what), json_number(v[1], what)};
}

inline ReferenceSpec json_reference(const Json& v, Index T_v) {
    reject_unknown(v, {"kind", "period", "amplitude", "levels", "hold"}, "reference");
    ReferenceSpec r;
    r.T_v = T_v;
    require(v.contains("kind") && v["kind"].is_string(), ErrorCode::Config, "reference.kind is required");
    r.kind = parse_reference_kind(v["kind"].get<std::string>());
    if (v.contains("period"))
        r.period = json_index(v["period"], "reference.period");
    if (v.contains("amplitude"))
        r.amplitude = json_number(v["amplitude"], "reference.amplitude");
    if (v.contains("hold"))
        r.hold = json_index(v["hold"], "reference.hold");
    if (v.contains("levels")) {
        require(v["levels"].is_array(), ErrorCode::Config, "reference.levels must be an array");
        r.levels.clear();
        for (const auto& l : v["levels"])
            r.levels.push_back(json_number(l, "reference.levels"));
    }
    return r;
}

inline SchemeSpec json_scheme(const Json& v) {
    SchemeSpec s;
    if (v.is_string()) {
        s.kind = parse_scheme_kind(v.get<std::string>());
        s.tuning = is_tunable(s.kind) ? Tuning::OfflineOracle : Tuning::None;
    } else {
        reject_unknown(v, {"name", "tuning", "params"}, "scheme");
        require(v.contains("name") && v["name"].is_string(), ErrorCode::Config, "scheme.name is required");
        s.kind = parse_scheme_kind(v["name"].get<std::string>());
        s.tuning = is_tunable(s.kind) ? Tuning::OfflineOracle : Tuning::None;
        if (v.contains("tuning")) {
            require(v["tuning"].is_string(), ErrorCode::Config, "scheme.tuning must be a string");
            s.tuning = parse_tuning(v["tuning"].get<std::string>());
        }
        if (v.contains("params")) {
            require(is_tunable(s.kind), ErrorCode::Config, to_string(s.kind) + " takes no params");
            s.fixed = json_point(v["params"], "scheme.params");
        }
    }
    s.validate();
    return s;
}

inline PlantModel json_plant(const Json& v, double sigma2) {
    if (v.is_string()) {
        require(v.get<std::string>() == "benchmark", ErrorCode::Config, "unknown plant preset '" +
                                                                            v.get<std::string>() + "'");
        return benchmark_plant(sigma2);
    }
    reject_unknown(v, {"A", "B", "C", "D", "K"}, "plant");
    for (const char* k : {"A", "B", "C", "D", "K"})
        require(v.contains(k), ErrorCode::Config, std::string("plant.") + k + " is required");
    try {
        return {json_matrix(v["A"], "plant.A"), json_matrix(v["B"], "plant.B"), json_matrix(v["C"], "plant.C"),
                json_matrix(v["D"], "plant.D"), json_matrix(v["K"], "plant.K"), sigma2};
    } catch (const Error& e) {
        if (e.code() == ErrorCode::Config)
            throw;
        throw Error(ErrorCode::Config, std::string("plant: ") + e.what());
    }
}

} // namespace detail

inline RunConfig parse_run_config(const Json& j) {
    using namespace detail;
    reject_unknown(j,
                   {"seed", "plant", "sigma2", "excitation", "N_data", "T", "T_v", "runs", "q_o", "r", "setup", "rho",
                    "rho_max", "warmup", "schemes", "grids", "full_grids", "jobs", "reference", "tuning_reference",
                    "control", "dataset", "verbosity"},
                   "config");
    RunConfig rc;
    auto& b = rc.bench;
    if (j.contains("seed")) {
        require(j["seed"].is_number_unsigned() || j["seed"].is_number_integer(), ErrorCode::Config,
                "seed must be an integer");
        b.base_seed = j["seed"].get<std::uint64_t>();
    }
    const double sigma2 = j.contains("sigma2") ? json_number(j["sigma2"], "sigma2") : 4.81e-3;
    require(sigma2 >= 0.0 && std::isfinite(sigma2), ErrorCode::Config, "sigma2 must be finite and >= 0");
    b.plant = j.contains("plant") ? json_plant(j["plant"], sigma2) : benchmark_plant(sigma2);
    if (j.contains("excitation")) {
        const auto& e = j["excitation"];
        reject_unknown(e, {"cutoff", "variance", "seed"}, "excitation");
        if (e.contains("cutoff"))
            b.excitation.cutoff = json_number(e["cutoff"], "excitation.cutoff");
        if (e.contains("variance"))
            b.excitation.pre_filter_variance = json_number(e["variance"], "excitation.variance");
        if (e.contains("seed"))
            b.excitation.seed = static_cast<std::uint64_t>(json_index(e["seed"], "excitation.seed"));
        try {
            b.excitation.validate();
        } catch (const Error& err) {
            throw Error(ErrorCode::Config, err.what());
        }
    }
    if (j.contains("N_data"))
        b.N_data = json_index(j["N_data"], "N_data");
    if (j.contains("T"))
        b.T = json_index(j["T"], "T");
    if (j.contains("T_v"))
        b.T_v = json_index(j["T_v"], "T_v");
    if (j.contains("runs"))
        b.n_runs = json_index(j["runs"], "runs");
    if (j.contains("q_o"))
        b.q_o = json_number(j["q_o"], "q_o");
    if (j.contains("r"))
        b.r = json_number(j["r"], "r");
    if (j.contains("setup"))
        b.setup = static_cast<int>(json_index(j["setup"], "setup"));
    if (j.contains("rho") && !j["rho"].is_null()) {
        b.rho_fixed = json_index(j["rho"], "rho");
        require(*b.rho_fixed >= 1, ErrorCode::Config, "rho must be at least 1");
    }
    if (j.contains("rho_max"))
        b.rho_max = json_index(j["rho_max"], "rho_max");
    if (j.contains("warmup"))
        b.warmup = json_index(j["warmup"], "warmup");
    if (j.contains("full_grids")) {
        require(j["full_grids"].is_boolean(), ErrorCode::Config, "full_grids must be a boolean");
        b.full_grids = j["full_grids"].get<bool>();
    }
    if (j.contains("jobs"))
        b.jobs = static_cast<int>(json_index(j["jobs"], "jobs"));
    if (j.contains("schemes")) {
        require(j["schemes"].is_array(), ErrorCode::Config, "schemes must be an array");
        for (const auto& s : j["schemes"])
            b.schemes.push_back(json_scheme(s));
    } else {
        b.schemes = all_schemes();
    }
    if (j.contains("grids")) {
        const auto& g = j["grids"];
        reject_unknown(g, {"gamma2", "gamma3", "gamma23", "deepc"}, "grids");
        for (const auto& [name, pts] : g.items()) {
            require(pts.is_array(), ErrorCode::Config, "grids." + name + " must be an array");
            std::vector<ParamPoint> grid;
            for (const auto& p : pts)
                grid.push_back(json_point(p, "grids." + name));
            b.grids[parse_scheme_kind(name)] = grid;
        }
    }
    if (j.contains("reference"))
        b.test_reference = json_reference(j["reference"], b.T_v);
    if (j.contains("tuning_reference"))
        b.tuning_reference = json_reference(j["tuning_reference"], b.T_v);
    if (j.contains("control"))
        rc.control = json_scheme(j["control"]);
    if (j.contains("dataset")) {
        require(j["dataset"].is_string(), ErrorCode::Config, "dataset must be a path string");
        rc.dataset = j["dataset"].get<std::string>();
    }
    if (j.contains("verbosity"))
        rc.verbosity = static_cast<int>(json_index(j["verbosity"], "verbosity"));
    b.validate();
    return rc;
}

inline RunConfig load_run_config(const std::string& path) {
    if (!std::filesystem::exists(path))
        throw Error(ErrorCode::Config, "config not found: " + path);
    std::ifstream is(path);
    require(static_cast<bool>(is), ErrorCode::Config, "config not readable: " + path);
    Json j;
    try {
        j = Json::parse(is);
    } catch (const Json::parse_error& e) {
        throw Error(ErrorCode::Config, path + ": " + e.what());
    }
    return parse_run_config(j);
}

// ---------------------------------------------------------------------------
// ArxModel persistence

inline Json model_to_json(const ArxModel& m) {
    Json j;
    j["rho"] = m.rho;
    j["m"] = m.m;
    j["p"] = m.p;
    j["N"] = m.N;
    j["sigma2_hat"] = m.sigma2_hat;
    j["theta_bar"] = std::vector<double>(m.theta_bar.data(), m.theta_bar.data() + m.theta_bar.size());
    j["S"] = detail::matrix_json(m.S);
    return j;
}

inline ArxModel model_from_json(const Json& j) {
    detail::reject_unknown(j, {"rho", "m", "p", "N", "sigma2_hat", "theta_bar", "S"}, "model");
    ArxModel m;
    try {
        m.rho = j.at("rho").get<Index>();
        m.m = j.at("m").get<Index>();
        m.p = j.at("p").get<Index>();
        m.N = j.at("N").get<Index>();
        m.sigma2_hat = j.at("sigma2_hat").get<double>();
        const auto theta = j.at("theta_bar").get<std::vector<double>>();
        m.theta_bar = Eigen::Map<const Vector>(theta.data(), static_cast<Index>(theta.size()));
    } catch (const Json::exception& e) {
        throw Error(ErrorCode::Parse, std::string("model: ") + e.what());
    }
    m.S = detail::json_matrix(j.at("S"), "model.S");
    const Index d = m.regressor_dim();
    require_dims(m.theta_bar.size() == m.p * d && m.S.rows() == d && m.S.cols() == d, "model arrays have wrong size");
    return m;
}

// ---------------------------------------------------------------------------
// Report output. The JSON omits wall-clock timing so that it depends on the
// configuration alone; timing goes to its own CSV.

inline Json stats_json(const SummaryStats& s) {
    using detail::number_json;
    return {{"n", s.n},
            {"median", number_json(s.median)},
            {"q1", number_json(s.q1)},
            {"q3", number_json(s.q3)},
            {"whisker_low", number_json(s.whisker_low)},
            {"whisker_high", number_json(s.whisker_high)},
            {"instability_fraction", s.instability_fraction},
            {"n_unstable", s.n_unstable}};
}

inline Json report_to_json(const BenchmarkReport& rep) {
    Json j;
    j["setup"] = rep.setup;
    j["runs"] = rep.n_runs;
    j["rho_hat"] = rep.rho_hat;
    Json schemes = Json::array();
    for (const auto& s : rep.schemes) {
        Json js;
        js["label"] = s.scheme.label();
        js["scheme"] = to_string(s.scheme.kind);
        js["tuning"] = to_string(s.scheme.tuning);
        Json samples = Json::array();
        for (double v : s.samples)
            samples.push_back(detail::number_json(v));
        js["J_a"] = samples;
        Json params = Json::array();
        for (const auto& p : s.params)
            params.push_back(p ? Json::array({detail::number_json(p->a), detail::number_json(p->b)}) : Json());
        js["params"] = params;
        js["failures"] = s.failures;
        js["stats"] = stats_json(s.stats);
        schemes.push_back(js);
    }
    j["schemes"] = schemes;
    return j;
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream os(path);
    require(static_cast<bool>(os), ErrorCode::Parse, "cannot write '" + path.string() + "'");
    os << text;
}

inline std::vector<std::filesystem::path> write_report(const BenchmarkReport& rep, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    std::vector<std::filesystem::path> files;
    files.push_back(dir / "report.json");
    write_text(files.back(), report_to_json(rep).dump(2) + "\n");
    for (const auto& s : rep.schemes) {
        std::ostringstream os;
        os << "run,J_a,unstable\n";
        for (std::size_t i = 0; i < s.samples.size(); ++i)
            os << i << ',' << (std::isinf(s.samples[i]) ? "inf" : detail::format_double(s.samples[i])) << ','
               << (std::isinf(s.samples[i]) ? 1 : 0) << '\n';
        files.push_back(dir / ("samples_" + s.scheme.label() + ".csv"));
        write_text(files.back(), os.str());
    }
    std::ostringstream t;
    t << "scheme,training_s,offline_search_s,optimization_s\n";
    for (const auto& s : rep.schemes)
        t << s.scheme.label() << ',' << detail::format_double(s.timing.training) << ','
          << detail::format_double(s.timing.offline_search) << ',' << detail::format_double(s.timing.optimization)
          << '\n';
    files.push_back(dir / "timing.csv");
    write_text(files.back(), t.str());
    return files;
}

} // namespace fce
