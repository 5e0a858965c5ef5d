#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace actionkit {

inline constexpr double kGradCheckTolerance = 1e-4;

struct GradCheckItem {
  std::string name;
  double max_rel_err = 0.0;
  bool pass() const { return max_rel_err < kGradCheckTolerance; }
};

// Finite-difference checks (double precision) for every differentiable op and
// each excitation path across several shape configurations.
std::vector<GradCheckItem> run_gradcheck_suite(std::uint64_t seed = 2024);

}  // namespace actionkit
