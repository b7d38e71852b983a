#pragma once

// Shared building blocks: error types, a dense row-major matrix, number
// formatting/parsing helpers, TSV line splitting and a small blocked
// parallel-for.

#include <algorithm>
#include <charconv>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <istream>
#include <initializer_list>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <system_error>
#include <thread>
#include <vector>

namespace valuekit {

inline constexpr std::string_view kToolName = "valuekit";
inline constexpr std::string_view kVersion = "0.1.0";

// ============================================================================
// ERRORS
// ============================================================================

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Malformed input table. Carries the source name and 1-based line/column
// (column 0 when the problem is not tied to a single cell).
class ParseError : public Error {
public:
    ParseError(std::string source, std::size_t line, std::size_t column, const std::string& what)
        : Error(source + ":" + std::to_string(line) + (column ? ":" + std::to_string(column) : "") +
                ": " + what),
          source_(std::move(source)), line_(line), column_(column) {}

    const std::string& source() const noexcept { return source_; }
    std::size_t line() const noexcept { return line_; }
    std::size_t column() const noexcept { return column_; }

private:
    std::string source_;
    std::size_t line_;
    std::size_t column_;
};

class ValidationError : public Error {
public:
    using Error::Error;
};

class AlignmentError : public Error {
public:
    using Error::Error;
};

// Raised when a tuning operation is handed held-out test labels.
class FreezeViolation : public Error {
public:
    using Error::Error;
};

// Raised when a manifest's recorded input digest no longer matches the file.
class DriftError : public Error {
public:
    using Error::Error;
};

// Non-fatal findings (lenient-mode recomputations, infeasible precision
// floors). Callers that do not care pass nullptr.
struct Diagnostics {
    std::vector<std::string> warnings;

    void warn(std::string message) { warnings.push_back(std::move(message)); }
};

inline void warn(Diagnostics* diag, std::string message) {
    if (diag != nullptr) diag->warn(std::move(message));
}

// ============================================================================
// MATRIX
// ============================================================================

template <class T>
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, T fill = T{})
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    bool empty() const noexcept { return rows_ == 0; }

    T& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
    const T& operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }

    std::span<T> row(std::size_t r) noexcept { return {data_.data() + r * cols_, cols_}; }
    std::span<const T> row(std::size_t r) const noexcept { return {data_.data() + r * cols_, cols_}; }

    std::vector<T> column(std::size_t c) const {
        std::vector<T> out(rows_);
        for (std::size_t r = 0; r < rows_; ++r) out[r] = (*this)(r, c);
        return out;
    }

    std::span<const T> values() const noexcept { return data_; }
    std::span<T> values() noexcept { return data_; }

    bool operator==(const Matrix&) const = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<T> data_;
};

using BinaryMatrix = Matrix<std::uint8_t>;
using RealMatrix = Matrix<double>;

inline BinaryMatrix column_matrix(std::span<const std::uint8_t> column) {
    BinaryMatrix out(column.size(), 1);
    std::copy(column.begin(), column.end(), out.values().begin());
    return out;
}

// ============================================================================
// NUMBERS
// ============================================================================

// Shortest decimal representation that parses back to the same double.
inline std::string format_real(double x) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof buf, x);
    return std::string(buf, res.ptr);
}

inline std::string format_fixed(double x, int decimals) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", decimals, x);
    return buf;
}

inline std::optional<double> parse_real(std::string_view s) {
    double x = 0.0;
    if (!s.empty() && s.front() == '+') s.remove_prefix(1);
    auto res = std::from_chars(s.data(), s.data() + s.size(), x);
    if (res.ec != std::errc{} || res.ptr != s.data() + s.size()) return std::nullopt;
    return x;
}

template <class Int>
std::optional<Int> parse_int(std::string_view s) {
    Int x{};
    auto res = std::from_chars(s.data(), s.data() + s.size(), x);
    if (res.ec != std::errc{} || res.ptr != s.data() + s.size() || s.empty()) return std::nullopt;
    return x;
}

// ============================================================================
// TSV
// ============================================================================

inline std::vector<std::string_view> split_tabs(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        auto pos = line.find('\t', start);
        if (pos == std::string_view::npos) {
            out.push_back(line.substr(start));
            return out;
        }
        out.push_back(line.substr(start, pos - start));
        start = pos + 1;
    }
}

// Reads non-comment lines. Lines starting with '#' carry provenance headers
// and are skipped; a trailing '\r' is dropped.
class TsvLineReader {
public:
    explicit TsvLineReader(std::istream& in) : in_(in) {}

    bool next(std::string& line) {
        while (std::getline(in_, line)) {
            ++line_no_;
            if (!line.empty() && line.back() == '\r') line.pop_back();
            if (!line.empty() && line.front() == '#') continue;
            return true;
        }
        return false;
    }

    std::size_t line_number() const noexcept { return line_no_; }

private:
    std::istream& in_;
    std::size_t line_no_ = 0;
};

inline std::string provenance_line(std::uint64_t seed) {
    return "# " + std::string(kToolName) + " " + std::string(kVersion) + " seed=" + std::to_string(seed);
}

// ============================================================================
// RANDOMNESS
// ============================================================================

// Engine keyed by (master seed, sub-stream ids). Streams are independent of
// scheduling, which keeps chunked and multi-worker runs bit-identical.
inline std::mt19937_64 seeded_engine(std::initializer_list<std::uint64_t> parts) {
    std::vector<std::uint32_t> words;
    words.reserve(parts.size() * 2);
    for (auto p : parts) {
        words.push_back(static_cast<std::uint32_t>(p));
        words.push_back(static_cast<std::uint32_t>(p >> 32));
    }
    std::seed_seq seq(words.begin(), words.end());
    return std::mt19937_64(seq);
}

// ============================================================================
// PARALLELISM
// ============================================================================

// Splits [0, count) into contiguous blocks, one per worker. `body(begin, end)`
// must only write to state owned by its own index range.
template <class Body>
void parallel_blocks(std::size_t count, unsigned workers, Body&& body) {
    if (workers <= 1 || count < 2) {
        body(std::size_t{0}, count);
        return;
    }
    const std::size_t n_workers = std::min<std::size_t>(workers, count);
    const std::size_t chunk = (count + n_workers - 1) / n_workers;
    std::vector<std::jthread> threads;
    threads.reserve(n_workers);
    for (std::size_t w = 0; w < n_workers; ++w) {
        std::size_t begin = w * chunk;
        std::size_t end = std::min(count, begin + chunk);
        if (begin >= end) break;
        threads.emplace_back([&body, begin, end] { body(begin, end); });
    }
}

}  // namespace valuekit
