#pragma once

#include <cstdint>
#include <random>

#include "wsqp/grid.hpp"

namespace wsqp {

/// Seeded generator. Streams derived from (master, stream) are independent of
/// the order in which they are created.
class Rng {
 public:
  explicit Rng(std::uint64_t master, std::uint64_t stream = 0) {
    std::seed_seq seq{static_cast<std::uint32_t>(master), static_cast<std::uint32_t>(master >> 32),
                      static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
    engine_.seed(seq);
  }

  double normal() { return normal_(engine_); }
  double uniform(double a, double b) { return a + (b - a) * unit_(engine_); }
  int index(int n) { return std::uniform_int_distribution<int>(0, n - 1)(engine_); }

  void fill_normal(Field& f) {
    for (double& v : f.values()) v = normal();
  }

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
  std::uniform_real_distribution<double> unit_{0.0, 1.0};
};

}  // namespace wsqp
