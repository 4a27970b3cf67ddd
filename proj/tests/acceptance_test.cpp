// One line per acceptance criterion. Exit status is nonzero if any fails.
// Optional arguments select criterion ids.
#include <cstdlib>
#include <iostream>
#include <vector>

#include "hetsgd/extended.hpp"
#include "hetsgd/verify.hpp"

int main(int argc, char** argv) {
  std::vector<int> ids;
  for (int i = 1; i < argc; ++i) ids.push_back(std::atoi(argv[i]));
  bool all = true;
  for (int id : ids.empty() ? std::vector<int>{1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13, 14} : ids) {
    auto r = hetsgd::verify::run_criterion(id);
    all = all && r.passed;
    std::cout << "criterion " << r.id << " [" << r.name << "]: " << (r.passed ? "PASS" : "FAIL") << " ("
              << hetsgd::format_number(r.seconds) << " s) " << r.detail << std::endl;
  }
  return all ? 0 : 1;
}
