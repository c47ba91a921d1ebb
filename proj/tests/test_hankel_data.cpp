#include "test_util.hpp"

#include <gtest/gtest.h>

#include <sstream>

using namespace fce;
using namespace fce::testing;

TEST(BuildHankel, ScalarSequenceMatchesDefinition) {
    Matrix v(3, 1);
    v << 1, 2, 3;
    const auto h = build_hankel(v, 1, 2, 2, true);
    Matrix expected(2, 2);
    expected << 1, 2, 2, 3;
    expected /= std::sqrt(2.0);
    EXPECT_LT((h.values - expected).cwiseAbs().maxCoeff(), 1e-15);
    EXPECT_EQ(h.N, 2);
    EXPECT_EQ(h.block_rows(), 2);
}

TEST(BuildHankel, DegenerateWindowIsOneSample) {
    Matrix v(4, 2);
    v << 1, 2, 3, 4, 5, 6, 7, 8;
    const auto h = build_hankel(v, 3, 3, 1, false);
    ASSERT_EQ(h.values.rows(), 2);
    ASSERT_EQ(h.values.cols(), 1);
    EXPECT_EQ(h.values(0, 0), 5);
    EXPECT_EQ(h.values(1, 0), 6);
}

TEST(BuildHankel, WindowPastTheLogThrows) {
    Matrix v = Matrix::Ones(5, 1);
    try {
        (void)build_hankel(v, 2, 4, 3, true);
        FAIL() << "expected an error";
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::InsufficientSamples);
    }
    EXPECT_NO_THROW((void)build_hankel(v, 2, 4, 2, true));
}

TEST(BuildHankel, ShiftPropertyAndScaling) {
    std::mt19937_64 rng(3);
    const Matrix v = random_matrix(rng, 40, 3);
    const auto a = build_hankel(v, 2, 6, 20, false);
    const auto b = build_hankel(v, 3, 7, 20, false);
    for (Index i = 1; i < 5; ++i)
        EXPECT_EQ(a.values.middleRows(i * 3, 3), b.values.middleRows((i - 1) * 3, 3));
    const auto s = build_hankel(v, 2, 6, 20, true);
    EXPECT_LT((s.values - a.values / std::sqrt(20.0)).cwiseAbs().maxCoeff(), 1e-15);
    EXPECT_LT((s.unscaled() - a.values).cwiseAbs().maxCoeff(), 1e-13);
    EXPECT_LT((a.as_scaled() - s.values).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Partition, ColumnCountsForBenchmarkSizes) {
    const auto data = benchmark_dataset(11);
    const auto parts = partition(data, 3, 20);
    EXPECT_EQ(parts.N_arx, 247);
    EXPECT_EQ(parts.N_lq, 228);
    EXPECT_EQ(parts.Z_P.values.rows(), 6);
    EXPECT_EQ(parts.Z_P.values.cols(), 228);
    EXPECT_EQ(parts.arx_Z_P.values.cols(), 247);
    EXPECT_EQ(parts.Y_next.values.rows(), 1);
    EXPECT_EQ(parts.U_F.values.rows(), 20);
    EXPECT_EQ(parts.Y_F.values.rows(), 20);
}

TEST(Partition, HorizonTooLong) {
    const auto data = benchmark_dataset(12, 23);
    try {
        (void)partition(data, 3, 20);
        FAIL() << "expected an error";
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::HorizonTooLong);
    }
    // Enough samples for N_data > rho + T but not for full row rank.
    try {
        (void)partition(benchmark_dataset(12, 45), 3, 20);
        FAIL() << "expected an error";
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::HorizonTooLong);
    }
}

TEST(Partition, PastBlockHasFullRowRank) {
    const auto parts = partition(benchmark_dataset(13), 8, 20);
    Eigen::JacobiSVD<Matrix> svd(parts.Z_P.values);
    const auto& sv = svd.singularValues();
    EXPECT_GT(sv(sv.size() - 1) / sv(0), 1e-6);
}

TEST(Partition, ColumnsStackJointSamplesOldestFirst) {
    const auto data = benchmark_dataset(14, 60);
    const Index rho = 4;
    const auto parts = partition(data, rho, 5);
    const Matrix Z = parts.Z_P.unscaled();
    const Matrix z = data.z_log();
    for (Index j = 0; j < parts.N_lq; ++j)
        for (Index i = 0; i < rho; ++i) {
            // 1-based sample j + i + 1 is row j + i.
            EXPECT_NEAR(Z(2 * i, j), z(j + i, 0), 1e-12);
            EXPECT_NEAR(Z(2 * i + 1, j), z(j + i, 1), 1e-12);
        }
    const Matrix Y = parts.Y_next.unscaled();
    for (Index j = 0; j < parts.N_arx; ++j)
        EXPECT_NEAR(Y(0, j), data.y_log()(j + rho, 0), 1e-12);
    const Matrix U = parts.U_F.unscaled();
    EXPECT_NEAR(U(0, 0), data.u_log()(rho, 0), 1e-12);
}

TEST(DatasetCsv, RoundTripIsBitwise) {
    const auto data = benchmark_dataset(21);
    std::stringstream ss;
    write_dataset_csv(ss, data);
    const auto back = read_dataset_csv(ss);
    EXPECT_EQ(back.size(), 250);
    EXPECT_EQ(back.m(), 1);
    EXPECT_EQ(back.p(), 1);
    EXPECT_TRUE(back == data);
}

TEST(DatasetCsv, InputsComeFirst) {
    std::stringstream ss("m=1,p=2\n1,2,3\n4,5,6\n");
    const auto d = read_dataset_csv(ss);
    EXPECT_EQ(d.u_log()(1, 0), 4);
    EXPECT_EQ(d.y_log()(0, 0), 2);
    EXPECT_EQ(d.y_log()(1, 1), 6);
}

TEST(DatasetCsv, Errors) {
    auto code_of = [](const std::string& text) {
        std::stringstream ss(text);
        try {
            (void)read_dataset_csv(ss);
        } catch (const Error& e) {
            return e.code();
        }
        return ErrorCode::Config;  // no error
    };
    EXPECT_EQ(code_of(""), ErrorCode::Parse);
    EXPECT_EQ(code_of("m=1,p=1\n1,2\n3\n"), ErrorCode::Parse);
    EXPECT_EQ(code_of("m=1,p=1\n1,x\n"), ErrorCode::Parse);
    EXPECT_EQ(code_of("m=0,p=1\n1\n"), ErrorCode::Dimension);
    EXPECT_EQ(code_of("u,y\n1,2\n"), ErrorCode::Parse);
}

TEST(Dataset, RejectsMismatchedLogs) {
    EXPECT_THROW(Dataset(Matrix::Zero(3, 1), Matrix::Zero(4, 1)), Error);
    EXPECT_THROW(Dataset(Matrix::Zero(3, 0), Matrix::Zero(3, 1)), Error);
}
