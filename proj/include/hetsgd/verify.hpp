#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace hetsgd::verify {

inline constexpr int kCriteria = 14;

struct CriterionResult {
  int id = 0;
  std::string name;
  bool passed = false;
  std::string detail;
  double seconds = 0;
};

std::string criterion_name(int id);

/// Runs one acceptance check. Exceptions are caught and reported as failures.
CriterionResult run_criterion(int id, std::uint64_t seed = 20240601);

/// Empty ids runs all of them, in id order.
std::vector<CriterionResult> run_all(const std::vector<int>& ids = {}, std::uint64_t seed = 20240601);

}  // namespace hetsgd::verify
