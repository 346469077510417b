#include "stalesim/common.hpp"

#include <cmath>

namespace stalesim {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

SparseDelta SparseDelta::from_map(const std::map<std::size_t, double>& entries, bool drop_zeros) {
  SparseDelta out;
  out.index.reserve(entries.size());
  out.value.reserve(entries.size());
  for (const auto& [i, v] : entries) {
    if (drop_zeros && v == 0.0) continue;
    out.index.push_back(i);
    out.value.push_back(v);
  }
  return out;
}

void add_into(ParamVector& target, const ParamDelta& delta) {
  if (const auto* dense = std::get_if<ParamVector>(&delta)) {
    const std::size_t n = dense->size();
    double* t = target.data();
    const double* d = dense->data();
    for (std::size_t i = 0; i < n; ++i) t[i] += d[i];
    return;
  }
  const auto& sparse = std::get<SparseDelta>(delta);
  for (std::size_t k = 0; k < sparse.index.size(); ++k) target[sparse.index[k]] += sparse.value[k];
}

ParamVector densify(const ParamDelta& delta, std::size_t dim) {
  check_extent(delta, dim);
  if (const auto* dense = std::get_if<ParamVector>(&delta)) return *dense;
  ParamVector out(dim, 0.0);
  add_into(out, delta);
  return out;
}

void check_extent(const ParamDelta& delta, std::size_t dim) {
  if (const auto* dense = std::get_if<ParamVector>(&delta)) {
    if (dense->size() != dim) throw std::out_of_range("dense delta dimension mismatch");
    return;
  }
  for (std::size_t i : std::get<SparseDelta>(delta).index) {
    if (i >= dim) throw std::out_of_range("sparse delta index outside parameter space");
  }
}

bool all_finite(std::span<const double> values) {
  for (double v : values) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

std::uint64_t derive_seed(std::uint64_t master, Stream stream, std::uint64_t index) {
  std::uint64_t h = splitmix64(master);
  h = splitmix64(h ^ static_cast<std::uint64_t>(stream));
  return splitmix64(h ^ (index * 0x2545f4914f6cdd1dULL));
}

}  // namespace stalesim
