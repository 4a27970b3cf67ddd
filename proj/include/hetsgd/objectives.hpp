#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <variant>
#include <vector>

#include "hetsgd/bound_calc.hpp"
#include "hetsgd/rng.hpp"

namespace hetsgd::objectives {

using Vector = Eigen::VectorXd;
using bounds::ProblemConstants;

/// Constants of the chain function: F_T(0) - inf F_T <= 12 T, smoothness 152,
/// gradient sup-norm 23.
inline constexpr double kChainGap = 12.0;
inline constexpr double kChainSmoothness = 152.0;
inline constexpr double kChainGradBound = 23.0;

/// f(x) = L/2 |x|^2
struct Quadratic {
  double L = 1.0;
  int dim = 1;
};
/// f_i(x) = L/2 |x - centers[i]|^2, f = mean of f_i. One center per worker.
struct HeterQuadratic {
  double L = 1.0;
  std::vector<Vector> centers;
  int dim = 1;
};
/// f(x) = scale * (L lambda^2 / 152) F_T(x / lambda)
struct WorstCaseChain {
  int length = 1;
  double lambda = 1.0;
  double L = 1.0;
  double scale = 1.0;
};
using Objective = std::variant<Quadratic, HeterQuadratic, WorstCaseChain>;

/// Isotropic additive noise with total variance sigma2.
struct GaussianNoise {
  double sigma2 = 0.0;
};
/// Coordinates past prog(x) multiplied by Bernoulli(p)/p.
struct ZeroOut {
  double p = 1.0;
};
struct ExactOracle {};
using OracleSpec = std::variant<GaussianNoise, ZeroOut, ExactOracle>;

struct ProblemSpec {
  Objective objective;
  ProblemConstants consts;
  OracleSpec oracle = ExactOracle{};
  Vector x0;  // empty means all-zero

  int dim() const;
  Vector start() const;
};

/// Validates dimensions, centers and oracle parameters.
void validate(const ProblemSpec& problem);

/// Largest 1-based index with a nonzero entry, 0 for the zero vector.
int prog(const Vector& x);

double psi(double x);
double psi_deriv(double x);
double phi(double x);
double phi_deriv(double x);

struct ValueGrad {
  double value = 0;
  Vector grad;
};
/// F_T and its gradient; x must have length T.
ValueGrad worst_case_grad(const Vector& x, int T);
double worst_case_value(const Vector& x, int T);

enum class Setup { homog, heter };

struct ScaledWorstCase {
  ProblemSpec problem;
  int chain_length = 0;
  double lambda = 0;
  double zero_out_p = 1;     // homogeneous only
  std::int64_t blocks = 1;   // heterogeneous block count
};
/// Scaled chain so that f(0) - inf f <= delta and eps-stationarity needs prog = T.
ScaledWorstCase scaled_worst_case(const ProblemConstants& c, Setup setup,
                                  const bounds::UniversalConstants& uc = {}, std::int64_t blocks = 1);

Vector zero_out_oracle(const Vector& grad, int progress, double p, Rng& rng);
/// In-place variant. Zero entries are skipped since the mask cannot change them.
void zero_out_inplace(Vector& grad, int progress, double p, Rng& rng);

double value(const ProblemSpec& problem, const Vector& x);
Vector gradient(const ProblemSpec& problem, const Vector& x);
/// Known minimum value, if any.
std::optional<double> optimal_value(const ProblemSpec& problem);
/// Gradient of worker i's local function (equals the full gradient for homogeneous objectives).
void local_gradient_into(const ProblemSpec& problem, int worker, const Vector& x, Vector& out);

/// Applies the oracle's randomness to an exact gradient taken at x.
void add_oracle_noise(const ProblemSpec& problem, const Vector& x, Rng& rng, Vector& grad);

/// Stochastic gradient of worker i's function at x.
void noisy_grad_into(const ProblemSpec& problem, int worker, const Vector& x, Rng& rng, Vector& out);
Vector noisy_grad(const ProblemSpec& problem, const Vector& x, Rng& rng, int worker = 0);

}  // namespace hetsgd::objectives
