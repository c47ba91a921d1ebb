#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace fce {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

inline constexpr double kInf = std::numeric_limits<double>::infinity();

enum class ErrorCode {
    InsufficientSamples,
    Dimension,
    Parse,
    HorizonTooLong,
    SingularGram,
    SingularFactor,
    NotPositiveDefinite,
    UnstableObserver,
    Infeasible,
    MaxIterations,
    AllPointsUnstable,
    Config,
};

inline const char* to_string(ErrorCode code) {
    switch (code) {
    case ErrorCode::InsufficientSamples: return "insufficient samples";
    case ErrorCode::Dimension: return "dimension mismatch";
    case ErrorCode::Parse: return "parse error";
    case ErrorCode::HorizonTooLong: return "horizon too long";
    case ErrorCode::SingularGram: return "singular Gram matrix";
    case ErrorCode::SingularFactor: return "singular factor";
    case ErrorCode::NotPositiveDefinite: return "not positive definite";
    case ErrorCode::UnstableObserver: return "unstable observer";
    case ErrorCode::Infeasible: return "infeasible constraints";
    case ErrorCode::MaxIterations: return "iteration limit reached";
    case ErrorCode::AllPointsUnstable: return "all grid points unstable";
    case ErrorCode::Config: return "configuration error";
    }
    return "unknown error";
}

/// Every failure raised by the library carries a machine-readable code.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& what)
        : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

    [[nodiscard]] ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

inline void require(bool cond, ErrorCode code, const std::string& what) {
    if (!cond)
        throw Error(code, what);
}

inline void require_dims(bool cond, const std::string& what) {
    require(cond, ErrorCode::Dimension, what);
}

inline bool is_symmetric(const Matrix& M, double tol = 1e-10) {
    if (M.rows() != M.cols())
        return false;
    const double scale = std::max(1.0, M.cwiseAbs().maxCoeff());
    return (M - M.transpose()).cwiseAbs().maxCoeff() <= tol * scale;
}

inline bool is_positive_definite(const Matrix& M) {
    if (!is_symmetric(M))
        return false;
    Eigen::LLT<Matrix> llt(M);
    return llt.info() == Eigen::Success;
}

// Reverse the order of the blocks of a stacked vector/matrix (block size `block` rows).
inline Matrix reverse_row_blocks(const Matrix& M, Index block) {
    const Index nb = M.rows() / block;
    Matrix out(M.rows(), M.cols());
    for (Index k = 0; k < nb; ++k)
        out.middleRows(k * block, block) = M.middleRows((nb - 1 - k) * block, block);
    return out;
}

} // namespace fce
