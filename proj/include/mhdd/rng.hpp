#pragma once

#include <cstdint>
#include <random>

namespace mhdd {

/// SplitMix64 stream generator; also used to derive independent child seeds.
class splitmix64 {
public:
    explicit splitmix64(std::uint64_t seed) noexcept : state_(seed) {}
    std::uint64_t next() noexcept;
    std::uint64_t state() const noexcept { return state_; }

private:
    std::uint64_t state_;
};

/// Deterministic child seed for stream `index` under `master`.
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index) noexcept;

/// Gaussian source used by all stochastic model operations.
class normal_source {
public:
    explicit normal_source(std::uint64_t seed) : engine_(seed) {}
    double operator()() { return dist_(engine_); }

private:
    std::mt19937_64 engine_;
    std::normal_distribution<double> dist_{0.0, 1.0};
};

}  // namespace mhdd
