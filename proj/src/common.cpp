#include <cstdio>
#include <sstream>

#include "hetsgd/error.hpp"
#include "hetsgd/extended.hpp"
#include "hetsgd/numeric.hpp"

namespace hetsgd {

namespace {
std::string join_problems(const std::vector<std::string>& problems) {
  std::ostringstream os;
  os << "invalid config (" << problems.size() << " problem" << (problems.size() == 1 ? "" : "s") << ")";
  for (const auto& p : problems) os << "\n  - " << p;
  return os.str();
}
}  // namespace

ConfigError::ConfigError(std::vector<std::string> problems)
    : std::runtime_error(join_problems(problems)), problems_(std::move(problems)) {}

std::string format_number(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

std::string Extended::to_string() const { return format_number(v_); }

double bisect_leftmost(double lo, double hi, const std::function<bool(double)>& pred) {
  while (true) {
    double mid = lo + (hi - lo) / 2;
    if (!(mid > lo && mid < hi)) break;
    if (pred(mid)) {
      hi = mid;
    } else {
      lo = mid;
    }
  }
  return hi;
}

}  // namespace hetsgd
