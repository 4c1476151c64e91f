#pragma once

#include <charconv>
#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace carve {

// Error categories mirror the CLI exit-code contract:
// IoError -> 2, ValidationError -> 3, MissingArtifactError -> 4, BadArgumentError -> 5.
struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct ValidationError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct MissingArtifactError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct BadArgumentError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Dense row-major matrix of doubles. Deliberately minimal; the project works
// at desk scale and favors plain loops over a linear-algebra dependency.
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

    double& at(std::size_t r, std::size_t c) { return data[r * cols + c]; }
    double at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

    std::span<double> row(std::size_t r) { return {data.data() + r * cols, cols}; }
    std::span<const double> row(std::size_t r) const { return {data.data() + r * cols, cols}; }

    void push_row(std::span<const double> v) {
        if (cols == 0) cols = v.size();
        if (v.size() != cols) throw ValidationError("Matrix::push_row: width mismatch");
        data.insert(data.end(), v.begin(), v.end());
        ++rows;
    }

    bool operator==(const Matrix& other) const = default;
};

// Shortest decimal form that parses back to the identical double.
inline std::string format_double(double x) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), x);
    return std::string(buf, res.ptr);
}

inline double parse_double(const std::string& s, const std::string& context) {
    double out = 0.0;
    auto res = std::from_chars(s.data(), s.data() + s.size(), out);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
        throw IoError("failed to parse number '" + s + "' (" + context + ")");
    }
    return out;
}

// FNV-1a, used for graph hashes and named seed sub-streams.
inline std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 14695981039346656037ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

}  // namespace carve
