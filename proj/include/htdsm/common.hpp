#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace htdsm {

// ----------------------------- errors -----------------------------

/// Argument outside the mathematical domain of an operation.
class DomainError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

/// Iterative numerics that failed to converge or produced non-finite values.
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ScheduleError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class MetricError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Raised when a training step produces a non-finite loss or parameter.
class TrainingError : public std::runtime_error {
public:
    TrainingError(const std::string& what, std::size_t step, double sigma)
        : std::runtime_error(what), step_(step), sigma_(sigma) {}

    std::size_t step() const noexcept { return step_; }
    double sigma() const noexcept { return sigma_; }

private:
    std::size_t step_;
    double sigma_;
};

// ----------------------------- random streams -----------------------------

using Rng = std::mt19937_64;

/// SplitMix64 finalizer; used to decorrelate derived seeds.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
    z += 0x9E3779B97F4A7C15ull;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

/// Deterministic substream seed for (master seed, stream index).
constexpr std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream) noexcept {
    return mix64(mix64(master) ^ mix64(stream + 0x632BE59BD9B4E019ull));
}

inline Rng make_rng(std::uint64_t master, std::uint64_t stream = 0) {
    return Rng{derive_seed(master, stream)};
}

// ----------------------------- point sets -----------------------------

/// Row-major collection of equal-dimension points.
class PointSet {
public:
    PointSet() = default;
    PointSet(std::size_t dim, std::size_t count) : dim_(dim), data_(dim * count, 0.0) {}
    PointSet(std::size_t dim, std::vector<double> data);

    std::size_t dim() const noexcept { return dim_; }
    std::size_t size() const noexcept { return dim_ == 0 ? 0 : data_.size() / dim_; }
    bool empty() const noexcept { return data_.empty(); }

    std::span<const double> row(std::size_t i) const { return {data_.data() + i * dim_, dim_}; }
    std::span<double> row(std::size_t i) { return {data_.data() + i * dim_, dim_}; }

    void push_back(std::span<const double> point);

    const std::vector<double>& data() const noexcept { return data_; }

private:
    std::size_t dim_ = 0;
    std::vector<double> data_;
};

double squared_distance(std::span<const double> a, std::span<const double> b);

}  // namespace htdsm
