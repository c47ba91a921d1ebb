#include "test_util.hpp"

#include <fce/config.hpp>

#include <gtest/gtest.h>

#include <filesystem>

using namespace fce;
using namespace fce::testing;

namespace {

ErrorCode parse_error(const std::string& text) {
    try {
        (void)parse_run_config(Json::parse(text));
    } catch (const Error& e) {
        return e.code();
    }
    return ErrorCode::Dimension;  // sentinel: parse succeeded
}

} // namespace

TEST(RunConfig, Defaults) {
    const auto rc = parse_run_config(Json::object());
    const auto& b = rc.bench;
    EXPECT_EQ(b.N_data, 250);
    EXPECT_EQ(b.T, 20);
    EXPECT_EQ(b.T_v, 500);
    EXPECT_EQ(b.n_runs, 20);
    EXPECT_EQ(b.r, 5e-6);
    EXPECT_EQ(b.plant.sigma2, 4.81e-3);
    EXPECT_EQ(b.schemes.size(), 9U);
    EXPECT_FALSE(rc.control.has_value());
}

TEST(RunConfig, UnknownKeysAreRejected) {
    EXPECT_EQ(parse_error(R"({"sead": 1})"), ErrorCode::Config);
    EXPECT_EQ(parse_error(R"({"excitation": {"cutof": 1.8}})"), ErrorCode::Config);
    EXPECT_EQ(parse_error(R"({"reference": {"kind": "constant", "amp": 1}})"), ErrorCode::Config);
    EXPECT_EQ(parse_error(R"({"schemes": [{"name": "fce", "tune": "online"}]})"), ErrorCode::Config);
    EXPECT_EQ(parse_error(R"({"grids": {"gamma4": []}})"), ErrorCode::Config);
}

TEST(RunConfig, BadValuesAreConfigErrors) {
    EXPECT_EQ(parse_error(R"({"runs": 0})"), ErrorCode::Config);
    EXPECT_EQ(parse_error(R"({"T": 2.5})"), ErrorCode::Config);
    EXPECT_EQ(parse_error(R"({"setup": 4})"), ErrorCode::Config);
    EXPECT_EQ(parse_error(R"({"sigma2": -1})"), ErrorCode::Config);
    EXPECT_EQ(parse_error(R"({"schemes": ["pid"]})"), ErrorCode::Config);
    EXPECT_EQ(parse_error(R"({"schemes": [{"name": "deepc", "tuning": "online"}]})"), ErrorCode::Config);
    EXPECT_EQ(parse_error(R"({"schemes": [{"name": "fce", "params": [0, 1]}]})"), ErrorCode::Config);
    EXPECT_EQ(parse_error(R"({"plant": "other"})"), ErrorCode::Config);
    EXPECT_EQ(parse_error(R"({"plant": {"A": [[0.5]], "B": [[1]], "C": [[1]], "D": [[0]], "K": [[5]]}})"),
              ErrorCode::Config);
}

TEST(RunConfig, FieldsAndInfinity) {
    const auto rc = parse_run_config(Json::parse(R"({
        "seed": 42, "sigma2": 0, "N_data": 300, "T": 10, "T_v": 120, "runs": 3, "r": 1e-4,
        "setup": 2, "rho": 4, "jobs": 2, "full_grids": true,
        "excitation": {"cutoff": 1.5, "variance": 2.0, "seed": 9},
        "schemes": ["fce", {"name": "gamma2", "tuning": "online"},
                    {"name": "deepc", "params": ["inf", 1e-3]}],
        "grids": {"gamma3": [[0, 1e-6], [0, "inf"]]},
        "reference": {"kind": "constant", "amplitude": 0.5},
        "control": "mpc_oracle"
    })"));
    const auto& b = rc.bench;
    EXPECT_EQ(b.base_seed, 42U);
    EXPECT_EQ(b.plant.sigma2, 0.0);
    EXPECT_EQ(b.N_data, 300);
    EXPECT_EQ(b.T_v, 120);
    EXPECT_EQ(b.rho_fixed, Index{4});
    EXPECT_TRUE(b.full_grids);
    EXPECT_EQ(b.excitation.cutoff, 1.5);
    EXPECT_EQ(b.excitation.pre_filter_variance, 2.0);
    EXPECT_EQ(b.excitation.seed, 9U);
    ASSERT_EQ(b.schemes.size(), 3U);
    EXPECT_EQ(b.schemes[1].label(), "gamma2_online");
    ASSERT_TRUE(b.schemes[2].fixed.has_value());
    EXPECT_TRUE(std::isinf(b.schemes[2].fixed->a));
    EXPECT_EQ(b.schemes[2].fixed->b, 1e-3);
    ASSERT_EQ(b.grid(SchemeKind::Gamma3).size(), 2U);
    EXPECT_TRUE(std::isinf(b.grid(SchemeKind::Gamma3)[1].b));
    EXPECT_EQ(b.test_ref().kind, ReferenceKind::Constant);
    EXPECT_EQ(b.test_ref().T_v, 120);
    EXPECT_EQ(b.tuning_ref().kind, ReferenceKind::Multilevel);
    ASSERT_TRUE(rc.control.has_value());
    EXPECT_EQ(rc.control->kind, SchemeKind::MpcOracle);
}

TEST(RunConfig, ExplicitPlant) {
    const auto rc = parse_run_config(Json::parse(
        R"({"sigma2": 0.01, "plant": {"A": [[0.5]], "B": [[1]], "C": [[1]], "D": [[0]], "K": [[0.2]]}})"));
    EXPECT_EQ(rc.bench.plant.n(), 1);
    EXPECT_EQ(rc.bench.plant.sigma2, 0.01);
}

TEST(RunConfig, MissingFile) {
    try {
        (void)load_run_config("/nonexistent/config.json");
        FAIL() << "expected an error";
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::Config);
        EXPECT_NE(std::string(e.what()).find("config not found"), std::string::npos);
    }
}

TEST(RunConfig, MalformedJson) {
    const auto path = std::filesystem::temp_directory_path() / "fce_bad_config.json";
    write_text(path, "{\"seed\": ");
    try {
        (void)load_run_config(path.string());
        FAIL() << "expected an error";
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::Config);
    }
    std::filesystem::remove(path);
}

TEST(RunConfig, ShippedConfigsParse) {
    const std::filesystem::path dir = FCE_CONFIG_DIR;
    int count = 0;
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
        if (entry.path().extension() != ".json")
            continue;
        EXPECT_NO_THROW((void)load_run_config(entry.path().string())) << entry.path();
        ++count;
    }
    EXPECT_GE(count, 3);
}

TEST(ModelJson, RoundTrip) {
    const auto data = benchmark_dataset(3);
    const auto model = fit_arx(partition(data, 4, 20));
    const auto text = model_to_json(model).dump();
    const auto back = model_from_json(Json::parse(text));
    EXPECT_EQ(back.rho, model.rho);
    EXPECT_EQ(back.N, model.N);
    EXPECT_EQ(back.sigma2_hat, model.sigma2_hat);
    EXPECT_EQ(back.theta_bar, model.theta_bar);
    EXPECT_EQ(back.S, model.S);
}

TEST(ModelJson, Rejects) {
    auto j = model_to_json(fit_arx(partition(benchmark_dataset(3), 2, 20)));
    auto extra = j;
    extra["bias"] = 1;
    EXPECT_THROW((void)model_from_json(extra), Error);
    auto missing = j;
    missing.erase("S");
    EXPECT_THROW((void)model_from_json(missing), std::exception);
    auto wrong = j;
    wrong["rho"] = 3;
    EXPECT_THROW((void)model_from_json(wrong), Error);
}

TEST(ReportJson, InfinityIsText) {
    BenchmarkReport rep;
    rep.n_runs = 2;
    rep.rho_hat = {3, 4};
    SchemeRecord rec;
    rec.scheme = {SchemeKind::Fce, Tuning::None};
    rec.samples = {1.5, kInf};
    rec.params = {std::nullopt, std::nullopt};
    rec.failures = {"", "blowup"};
    rec.stats = summarize(rec.samples);
    rep.schemes.push_back(rec);
    const auto j = report_to_json(rep);
    EXPECT_EQ(j["schemes"][0]["J_a"][1], "inf");
    EXPECT_EQ(j["schemes"][0]["stats"]["instability_fraction"], 0.5);
    EXPECT_EQ(j["schemes"][0]["label"], "fce");
}

TEST(ReportFiles, OnePerSchemePlusTwo) {
    BenchmarkReport rep;
    rep.n_runs = 1;
    rep.rho_hat = {3};
    for (auto kind : {SchemeKind::Fce, SchemeKind::MpcOracle}) {
        SchemeRecord rec;
        rec.scheme = {kind, Tuning::None};
        rec.samples = {1.0};
        rec.params = {std::nullopt};
        rec.failures = {""};
        rec.stats = summarize(rec.samples);
        rep.schemes.push_back(rec);
    }
    const auto dir = std::filesystem::temp_directory_path() / "fce_report_test";
    std::filesystem::remove_all(dir);
    const auto files = write_report(rep, dir);
    EXPECT_EQ(files.size(), 4U);
    for (const auto& f : files)
        EXPECT_TRUE(std::filesystem::exists(f)) << f;
    EXPECT_TRUE(std::filesystem::exists(dir / "samples_mpc_oracle.csv"));
    std::filesystem::remove_all(dir);
}
