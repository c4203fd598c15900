#pragma once

#include <charconv>
#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace eigencl {

inline constexpr const char* kToolVersion = "0.1.0";

// Error taxonomy. The CLI maps config/io/parse errors to exit code 2 and
// numeric/contract errors to exit code 1.
struct error : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct config_error : error {
    using error::error;
};
struct io_error : error {
    using error::error;
};
struct parse_error : error {
    using error::error;
};
struct numeric_error : error {
    using error::error;
};
struct contract_error : error {
    using error::error;
};

// Dense row-major matrix of doubles. Deliberately minimal: the pipeline
// needs storage, element access and row views, nothing fancier.
class Matrix {
  public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }

    double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
    double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

    std::span<double> row(std::size_t i) { return {data_.data() + i * cols_, cols_}; }
    std::span<const double> row(std::size_t i) const { return {data_.data() + i * cols_, cols_}; }

    std::vector<double>& data() { return data_; }
    const std::vector<double>& data() const { return data_; }

    bool operator==(const Matrix&) const = default;

  private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

double dot(std::span<const double> a, std::span<const double> b);
double norm2(std::span<const double> a);
double squared_distance(std::span<const double> a, std::span<const double> b);

// y = M * x for a square symmetric matrix stored densely.
void matvec(const Matrix& m, std::span<const double> x, std::span<double> y);

// Deterministic RNG. Distribution sampling is hand-rolled on top of the
// raw mt19937_64 stream so outputs are identical across standard library
// implementations, not just across runs.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    // uniform in [0, 1)
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // standard normal via Box-Muller, one spare cached
    double gaussian();

    // uniform integer in [0, n)
    std::size_t index(std::size_t n);

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::swap(v[i - 1], v[index(i)]);
        }
    }

  private:
    std::mt19937_64 engine_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

// Stable substream derivation (splitmix64 finalizer over seed and stream id).
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

// Shortest decimal representation that round-trips the double exactly.
std::string format_double(double v);
double parse_double_strict(std::string_view s, const std::string& context);

// FNV-1a 64-bit, used for manifest content hashes.
std::uint64_t fnv1a64(std::span<const unsigned char> bytes);
std::uint64_t fnv1a64_file(const std::string& path);
std::string to_hex(std::uint64_t v);

}  // namespace eigencl
