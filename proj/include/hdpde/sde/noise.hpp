#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <vector>

namespace hdpde::sde {

/// Counter-based random source: every draw is a pure function of
/// (seed, stream, counter), so draws do not depend on generation order.
/// The sequential `next_*` helpers walk a private counter.
class NoiseSource {
 public:
  explicit NoiseSource(std::uint64_t seed = 0, std::uint64_t stream = 0);

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t stream() const noexcept { return stream_; }

  /// Independent child stream.
  NoiseSource split(std::uint64_t key) const;

  std::uint64_t bits(std::uint64_t counter) const;
  /// Uniform in the open interval (0, 1).
  double uniform(std::uint64_t counter) const;
  double gaussian(std::uint64_t counter) const;
  double rademacher(std::uint64_t counter) const;

  /// Entry (i, j) uses counter offset + j * rows + i.
  Eigen::MatrixXd gaussian_matrix(Eigen::Index rows, Eigen::Index cols,
                                  std::uint64_t offset = 0) const;
  Eigen::MatrixXd uniform_matrix(Eigen::Index rows, Eigen::Index cols,
                                 std::uint64_t offset = 0) const;
  Eigen::MatrixXd rademacher_matrix(Eigen::Index rows, Eigen::Index cols,
                                    std::uint64_t offset = 0) const;

  double next_uniform() { return uniform(cursor_++); }
  double next_gaussian() { return gaussian(cursor_++); }
  Eigen::MatrixXd next_gaussian_matrix(Eigen::Index rows, Eigen::Index cols);
  Eigen::MatrixXd next_uniform_matrix(Eigen::Index rows, Eigen::Index cols);
  Eigen::MatrixXd next_rademacher_matrix(Eigen::Index rows, Eigen::Index cols);
  /// Uniform integer in [0, n).
  std::uint64_t next_index(std::uint64_t n);
  /// k distinct indices from [0, n), in draw order.
  std::vector<int> next_subset(int n, int k);

 private:
  std::uint64_t seed_;
  std::uint64_t stream_;
  std::uint64_t key_;
  std::uint64_t cursor_ = 0;
};

std::uint64_t mix64(std::uint64_t x);

}  // namespace hdpde::sde
