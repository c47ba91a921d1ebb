#pragma once

// Input/output logs and the scaled block-Hankel matrices built from them.
//
// Time indices follow the 1-based convention of the data record: sample
// t = 1 is row 0 of a log. The joint signal is z(t) = [y(t); u(t)], output
// block above input block, everywhere in the library.

#include "core.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

namespace fce {

class Dataset {
public:
    Dataset() = default;

    Dataset(Matrix u_log, Matrix y_log) : u_(std::move(u_log)), y_(std::move(y_log)) {
        require(u_.rows() == y_.rows(), ErrorCode::Dimension, "input and output logs differ in length");
        require(u_.rows() >= 1, ErrorCode::InsufficientSamples, "dataset must hold at least one sample");
        require(u_.cols() >= 1 && y_.cols() >= 1, ErrorCode::Dimension, "empty channel group");
    }

    [[nodiscard]] const Matrix& u_log() const noexcept { return u_; }
    [[nodiscard]] const Matrix& y_log() const noexcept { return y_; }
    [[nodiscard]] Index m() const noexcept { return u_.cols(); }
    [[nodiscard]] Index p() const noexcept { return y_.cols(); }
    [[nodiscard]] Index size() const noexcept { return u_.rows(); }

    /// Joint signal, one row per sample: [y(t)^T u(t)^T].
    [[nodiscard]] Matrix z_log() const {
        Matrix z(size(), p() + m());
        z << y_, u_;
        return z;
    }

    /// Samples [first, first + count) as a new dataset.
    [[nodiscard]] Dataset slice(Index first, Index count) const {
        require(first >= 0 && count >= 1 && first + count <= size(), ErrorCode::InsufficientSamples,
                "slice outside the log");
        return {u_.middleRows(first, count), y_.middleRows(first, count)};
    }

    bool operator==(const Dataset& o) const { return u_ == o.u_ && y_ == o.y_; }

private:
    Matrix u_;
    Matrix y_;
};

struct HankelBlock {
    Matrix values;      // (t1 - t0 + 1) * v_dim rows, N columns
    Index t0 = 1;
    Index t1 = 1;
    Index N = 1;
    Index v_dim = 1;
    bool scaled = true;

    [[nodiscard]] Index block_rows() const noexcept { return t1 - t0 + 1; }

    /// The same block without the 1/sqrt(N) factor.
    [[nodiscard]] Matrix unscaled() const {
        return scaled ? Matrix(values * std::sqrt(static_cast<double>(N))) : values;
    }
    [[nodiscard]] Matrix as_scaled() const {
        return scaled ? values : Matrix(values / std::sqrt(static_cast<double>(N)));
    }
};

/// Block (i, j) equals signal(t0 + i + j), 1-based time, times 1/sqrt(N) when scaled.
inline HankelBlock build_hankel(const Matrix& signal, Index t0, Index t1, Index N, bool scaled) {
    require(t0 >= 1 && t1 >= t0, ErrorCode::Dimension, "Hankel window needs 1 <= t0 <= t1");
    require(N >= 1, ErrorCode::Dimension, "Hankel needs at least one column");
    require(t1 + N - 1 <= signal.rows(), ErrorCode::InsufficientSamples,
            "Hankel window [" + std::to_string(t0) + "," + std::to_string(t1) + "] with " + std::to_string(N) +
                " columns exceeds log length " + std::to_string(signal.rows()));

    const Index v = signal.cols();
    const Index nb = t1 - t0 + 1;
    HankelBlock h{Matrix(nb * v, N), t0, t1, N, v, scaled};
    for (Index j = 0; j < N; ++j)
        for (Index i = 0; i < nb; ++i)
            h.values.block(i * v, j, v, 1) = signal.row(t0 - 1 + i + j).transpose();
    if (scaled)
        h.values /= std::sqrt(static_cast<double>(N));
    return h;
}

struct PartitionedData {
    Index rho = 0;
    Index T = 0;
    Index m = 0;
    Index p = 0;

    // One-step (ARX) partition: N_arx = N_data - rho columns.
    HankelBlock arx_Z_P;
    HankelBlock Y_next;
    Index N_arx = 0;

    // Multi-step (LQ) partition: N_lq = N_data - rho - T + 1 columns.
    HankelBlock Z_P;
    HankelBlock U_F;
    HankelBlock Y_F;
    Index N_lq = 0;
};

/// One-step partition only (Z_P and Y_{rho+1} over N_data - rho columns). T is left at 0.
inline PartitionedData partition_arx(const Dataset& data, Index rho) {
    require(rho >= 1, ErrorCode::Dimension, "order must be positive");
    require(data.size() > rho, ErrorCode::InsufficientSamples, "need N_data > rho");
    PartitionedData parts;
    parts.rho = rho;
    parts.m = data.m();
    parts.p = data.p();
    parts.N_arx = data.size() - rho;
    parts.arx_Z_P = build_hankel(data.z_log(), 1, rho, parts.N_arx, true);
    parts.Y_next = build_hankel(data.y_log(), rho + 1, rho + 1, parts.N_arx, true);
    return parts;
}

/// Past/future partitions for order rho and horizon T. Future windows start at rho + 1.
inline PartitionedData partition(const Dataset& data, Index rho, Index T) {
    require(rho >= 1 && T >= 1, ErrorCode::Dimension, "order and horizon must be positive");
    const Index n_data = data.size();
    const Index m = data.m();
    const Index p = data.p();
    require(n_data > rho + T, ErrorCode::HorizonTooLong,
            "need N_data > rho + T (N_data=" + std::to_string(n_data) + ", rho=" + std::to_string(rho) +
                ", T=" + std::to_string(T) + ")");
    const Index n_lq = n_data - rho - T + 1;
    require(n_lq >= (m + p) * rho + m * T, ErrorCode::HorizonTooLong,
            "N_lq=" + std::to_string(n_lq) + " columns cannot give full row rank for " +
                std::to_string((m + p) * rho + m * T) + " past/future rows");

    PartitionedData parts = partition_arx(data, rho);
    parts.T = T;
    parts.N_lq = n_lq;

    const Matrix z = data.z_log();
    parts.Z_P = build_hankel(z, 1, rho, parts.N_lq, true);
    parts.U_F = build_hankel(data.u_log(), rho + 1, rho + T, parts.N_lq, true);
    parts.Y_F = build_hankel(data.y_log(), rho + 1, rho + T, parts.N_lq, true);
    return parts;
}

// ---------------------------------------------------------------------------
// CSV persistence: header "m=<int>,p=<int>", then one line per sample with the
// m inputs followed by the p outputs, 17 significant digits.

namespace detail {

inline std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t'))
        s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r'))
        s.remove_suffix(1);
    return s;
}

inline std::vector<std::string_view> split(std::string_view line, char sep = ',') {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const auto pos = line.find(sep, start);
        out.push_back(trim(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start)));
        if (pos == std::string_view::npos)
            break;
        start = pos + 1;
    }
    return out;
}

inline double parse_double(std::string_view s, std::size_t line_no) {
    if (s == "inf" || s == "+inf")
        return kInf;
    if (s == "-inf")
        return -kInf;
    double v = 0.0;
    const auto* first = s.data();
    const auto* last = s.data() + s.size();
    if (!s.empty() && *first == '+')
        ++first;
    const auto [ptr, ec] = std::from_chars(first, last, v);
    if (ec != std::errc() || ptr != last || s.empty())
        throw Error(ErrorCode::Parse, "line " + std::to_string(line_no) + ": bad number '" + std::string(s) + "'");
    return v;
}

inline long parse_int(std::string_view s, std::size_t line_no) {
    long v = 0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size() || s.empty())
        throw Error(ErrorCode::Parse, "line " + std::to_string(line_no) + ": bad integer '" + std::string(s) + "'");
    return v;
}

} // namespace detail

inline void write_dataset_csv(std::ostream& os, const Dataset& data) {
    os << "m=" << data.m() << ",p=" << data.p() << '\n';
    for (Index t = 0; t < data.size(); ++t) {
        for (Index j = 0; j < data.m(); ++j)
            os << (j ? "," : "") << detail::format_double(data.u_log()(t, j));
        for (Index j = 0; j < data.p(); ++j)
            os << ',' << detail::format_double(data.y_log()(t, j));
        os << '\n';
    }
}

inline Dataset read_dataset_csv(std::istream& is) {
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        if (!detail::trim(line).empty())
            break;
    }
    if (detail::trim(line).empty())
        throw Error(ErrorCode::Parse, "empty dataset file");

    long m = -1;
    long p = -1;
    for (auto field : detail::split(line)) {
        const auto eq = field.find('=');
        if (eq == std::string_view::npos)
            throw Error(ErrorCode::Parse, "header must read m=<int>,p=<int>");
        const auto key = detail::trim(field.substr(0, eq));
        const auto val = detail::parse_int(detail::trim(field.substr(eq + 1)), line_no);
        if (key == "m")
            m = val;
        else if (key == "p")
            p = val;
        else
            throw Error(ErrorCode::Parse, "unknown header key '" + std::string(key) + "'");
    }
    if (m < 0 || p < 0)
        throw Error(ErrorCode::Parse, "header must declare both m and p");
    if (m == 0 || p == 0)
        throw Error(ErrorCode::Dimension, "empty channel group in header");

    std::vector<double> values;
    Index rows = 0;
    while (std::getline(is, line)) {
        ++line_no;
        if (detail::trim(line).empty())
            continue;
        const auto fields = detail::split(line);
        if (static_cast<long>(fields.size()) != m + p)
            throw Error(ErrorCode::Parse, "line " + std::to_string(line_no) + ": expected " + std::to_string(m + p) +
                                              " fields, got " + std::to_string(fields.size()));
        for (auto f : fields)
            values.push_back(detail::parse_double(f, line_no));
        ++rows;
    }
    if (rows == 0)
        throw Error(ErrorCode::Parse, "dataset has no samples");

    Matrix u(rows, m);
    Matrix y(rows, p);
    for (Index t = 0; t < rows; ++t) {
        for (long j = 0; j < m; ++j)
            u(t, j) = values[t * (m + p) + j];
        for (long j = 0; j < p; ++j)
            y(t, j) = values[t * (m + p) + m + j];
    }
    return {std::move(u), std::move(y)};
}

inline void save_dataset(const std::string& path, const Dataset& data) {
    std::ofstream os(path);
    require(static_cast<bool>(os), ErrorCode::Parse, "cannot open '" + path + "' for writing");
    write_dataset_csv(os, data);
}

inline Dataset load_dataset(const std::string& path) {
    std::ifstream is(path);
    require(static_cast<bool>(is), ErrorCode::Parse, "cannot open '" + path + "'");
    return read_dataset_csv(is);
}

} // namespace fce
