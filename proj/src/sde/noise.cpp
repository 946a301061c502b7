#include "hdpde/sde/noise.hpp"

#include <cmath>
#include <numbers>
#include <numeric>
#include <stdexcept>

namespace hdpde::sde {

std::uint64_t mix64(std::uint64_t x) {
  // SplitMix64 finalizer.
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

NoiseSource::NoiseSource(std::uint64_t seed, std::uint64_t stream)
    : seed_(seed), stream_(stream), key_(mix64(seed ^ mix64(stream + 0x51ed27ULL))) {}

NoiseSource NoiseSource::split(std::uint64_t key) const {
  return NoiseSource(seed_, mix64(stream_ * 0x2545f4914f6cdd1dULL + key + 1));
}

std::uint64_t NoiseSource::bits(std::uint64_t counter) const {
  return mix64(key_ ^ mix64(counter));
}

double NoiseSource::uniform(std::uint64_t counter) const {
  return (static_cast<double>(bits(counter) >> 11) + 0.5) * 0x1.0p-53;
}

double NoiseSource::gaussian(std::uint64_t counter) const {
  const double u1 = uniform(2 * counter);
  const double u2 = uniform(2 * counter + 1);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

double NoiseSource::rademacher(std::uint64_t counter) const {
  return (bits(counter) >> 63) ? 1.0 : -1.0;
}

Eigen::MatrixXd NoiseSource::gaussian_matrix(Eigen::Index rows, Eigen::Index cols,
                                             std::uint64_t offset) const {
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i)
      m(i, j) = gaussian(offset + static_cast<std::uint64_t>(j * rows + i));
  return m;
}

Eigen::MatrixXd NoiseSource::uniform_matrix(Eigen::Index rows, Eigen::Index cols,
                                            std::uint64_t offset) const {
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i)
      m(i, j) = uniform(offset + static_cast<std::uint64_t>(j * rows + i));
  return m;
}

Eigen::MatrixXd NoiseSource::rademacher_matrix(Eigen::Index rows,
                                               Eigen::Index cols,
                                               std::uint64_t offset) const {
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i)
      m(i, j) = rademacher(offset + static_cast<std::uint64_t>(j * rows + i));
  return m;
}

Eigen::MatrixXd NoiseSource::next_gaussian_matrix(Eigen::Index rows,
                                                  Eigen::Index cols) {
  Eigen::MatrixXd m = gaussian_matrix(rows, cols, cursor_);
  cursor_ += static_cast<std::uint64_t>(rows * cols);
  return m;
}

Eigen::MatrixXd NoiseSource::next_uniform_matrix(Eigen::Index rows,
                                                 Eigen::Index cols) {
  Eigen::MatrixXd m = uniform_matrix(rows, cols, cursor_);
  cursor_ += static_cast<std::uint64_t>(rows * cols);
  return m;
}

Eigen::MatrixXd NoiseSource::next_rademacher_matrix(Eigen::Index rows,
                                                    Eigen::Index cols) {
  Eigen::MatrixXd m = rademacher_matrix(rows, cols, cursor_);
  cursor_ += static_cast<std::uint64_t>(rows * cols);
  return m;
}

std::uint64_t NoiseSource::next_index(std::uint64_t n) {
  if (n == 0) throw std::invalid_argument("next_index: empty range");
  const auto k = static_cast<std::uint64_t>(next_uniform() * static_cast<double>(n));
  return k < n ? k : n - 1;
}

std::vector<int> NoiseSource::next_subset(int n, int k) {
  if (k < 0 || k > n) throw std::invalid_argument("next_subset: need 0 <= k <= n");
  std::vector<int> pool(n);
  std::iota(pool.begin(), pool.end(), 0);
  for (int i = 0; i < k; ++i) {
    const int j = i + static_cast<int>(next_index(static_cast<std::uint64_t>(n - i)));
    std::swap(pool[i], pool[j]);
  }
  pool.resize(k);
  return pool;
}

}  // namespace hdpde::sde
