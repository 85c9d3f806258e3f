#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <random>
#include <stdexcept>
#include <string>

namespace tradi {

// All numerics are 64-bit; activations and weight blocks are row-major.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

// Error taxonomy. The CLI maps these onto distinct exit codes.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};
// Invalid architecture, experiment config, or mode selection.
struct ConfigError : Error {
  using Error::Error;
};
// Caller violated an operation precondition (shape mismatch, empty batch, ...).
struct ContractError : Error {
  using Error::Error;
};
// Non-finite values, overflow, failed factorization.
struct NumericError : Error {
  using Error::Error;
};
// Malformed input file contents.
struct FormatError : Error {
  using Error::Error;
};
// Missing or unreadable files.
struct IoError : Error {
  using Error::Error;
};

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Decorrelated child seed for a named stream; chains for nested streams.
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream) {
  return splitmix64(master ^ splitmix64(stream + 0x517cc1b727220a95ULL));
}

inline std::mt19937_64 make_rng(std::uint64_t seed) {
  return std::mt19937_64(splitmix64(seed));
}

// Runs fn(0..n-1) on up to `workers` threads. Serial when workers <= 1.
// Exceptions thrown by fn are collected and the first one rethrown.
void parallel_for(int n, int workers, const std::function<void(int)>& fn);

}  // namespace tradi
