#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

namespace stalesim {

using ParamVector = std::vector<double>;
using Rng = std::mt19937_64;

// Sparse parameter change, kept sorted by index so that applying it is
// order-deterministic.
struct SparseDelta {
  std::vector<std::size_t> index;
  std::vector<double> value;

  std::size_t size() const { return index.size(); }
  bool empty() const { return index.empty(); }

  static SparseDelta from_map(const std::map<std::size_t, double>& entries, bool drop_zeros = false);
};

using ParamDelta = std::variant<ParamVector, SparseDelta>;

void add_into(ParamVector& target, const ParamDelta& delta);
ParamVector densify(const ParamDelta& delta, std::size_t dim);
// Throws std::out_of_range if the delta does not fit a model of dimension `dim`.
void check_extent(const ParamDelta& delta, std::size_t dim);
bool all_finite(std::span<const double> values);

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class NonFiniteError : public Error {
 public:
  using Error::Error;
};

class FormatError : public Error {
 public:
  FormatError(const std::string& what, std::size_t position)
      : Error(what + " (at " + std::to_string(position) + ")"), position_(position) {}
  std::size_t position() const { return position_; }

 private:
  std::size_t position_;
};

class MissingFileError : public Error {
 public:
  using Error::Error;
};

class InfeasibleMeanError : public Error {
 public:
  using Error::Error;
};

class UnsupportedOptimizerError : public Error {
 public:
  using Error::Error;
};

class ZeroVectorError : public Error {
 public:
  using Error::Error;
};

class InsufficientHistoryError : public Error {
 public:
  using Error::Error;
};

class MissingBaselineError : public Error {
 public:
  using Error::Error;
};

class UnknownMetricError : public Error {
 public:
  using Error::Error;
};

class MissingProbesError : public Error {
 public:
  using Error::Error;
};

// Independent random streams of one run, all derived from the master seed.
enum class Stream : std::uint64_t {
  Init = 1,
  Shard = 2,
  Delay = 3,
  Worker = 4,
  Probe = 5,
  Eval = 6,
  Data = 7,
};

std::uint64_t derive_seed(std::uint64_t master, Stream stream, std::uint64_t index = 0);

inline Rng make_rng(std::uint64_t master, Stream stream, std::uint64_t index = 0) {
  return Rng(derive_seed(master, stream, index));
}

}  // namespace stalesim
