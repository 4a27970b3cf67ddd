#include "hetsgd/objectives.hpp"

#include <boost/random/normal_distribution.hpp>
#include <cmath>
#include <string>

#include "hetsgd/error.hpp"
#include "hetsgd/numeric.hpp"

namespace hetsgd::objectives {

namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

const double kSqrtE = std::sqrt(std::exp(1.0));
const double kPhiScale = std::sqrt(2.0 * M_PI * std::exp(1.0));

void check_dim(const ProblemSpec& p, const Vector& x) {
  if (x.size() != p.dim()) {
    throw DomainError("dimension mismatch: expected " + std::to_string(p.dim()) + ", got " + std::to_string(x.size()));
  }
}

}  // namespace

int ProblemSpec::dim() const {
  return std::visit(overloaded{
                        [](const Quadratic& q) { return q.dim; },
                        [](const HeterQuadratic& q) { return q.dim; },
                        [](const WorstCaseChain& w) { return w.length; },
                    },
                    objective);
}

Vector ProblemSpec::start() const {
  if (x0.size() == 0) return Vector::Zero(dim());
  return x0;
}

void validate(const ProblemSpec& p) {
  std::visit(overloaded{
                 [](const Quadratic& q) {
                   if (!(q.L > 0) || q.dim < 1) throw DomainError("quadratic: need L > 0 and dim >= 1");
                 },
                 [&](const HeterQuadratic& q) {
                   if (!(q.L > 0) || q.dim < 1) throw DomainError("heter_quadratic: need L > 0 and dim >= 1");
                   if (q.centers.empty()) throw DomainError("heter_quadratic: need one center per worker");
                   for (const auto& b : q.centers) {
                     if (b.size() != q.dim) throw DomainError("heter_quadratic: center dimension mismatch");
                   }
                 },
                 [](const WorstCaseChain& w) {
                   if (w.length < 1 || !(w.lambda > 0) || !(w.L > 0) || !(w.scale > 0))
                     throw DomainError("worst_case_chain: need T >= 1, lambda > 0, L > 0");
                 },
             },
             p.objective);
  std::visit(overloaded{
                 [](const GaussianNoise& g) {
                   if (!(g.sigma2 >= 0)) throw DomainError("gaussian oracle: sigma2 must be >= 0");
                 },
                 [](const ZeroOut& z) {
                   if (!(z.p > 0 && z.p <= 1)) throw DomainError("zero_out oracle: p must be in (0, 1]");
                 },
                 [](const ExactOracle&) {},
             },
             p.oracle);
  if (p.x0.size() != 0 && p.x0.size() != p.dim()) throw DomainError("x0 dimension mismatch");
}

int prog(const Vector& x) {
  for (Eigen::Index i = x.size(); i > 0; --i) {
    if (x[i - 1] != 0.0) return static_cast<int>(i);
  }
  return 0;
}

double psi(double x) {
  double d = 2 * x - 1;
  if (d <= 1e-8) return 0.0;
  return std::exp(1.0 - 1.0 / (d * d));
}

double psi_deriv(double x) {
  double d = 2 * x - 1;
  if (d <= 1e-8) return 0.0;
  return std::exp(1.0 - 1.0 / (d * d)) * 4.0 / (d * d * d);
}

double phi(double x) { return kPhiScale * 0.5 * std::erfc(-x / M_SQRT2); }

double phi_deriv(double x) { return kSqrtE * std::exp(-0.5 * x * x); }

double worst_case_value(const Vector& x, int T) {
  if (x.size() != T) throw DomainError("worst_case: x must have length T");
  double f = -psi(1.0) * phi(x[0]);
  for (int i = 1; i < T; ++i) {
    f += psi(-x[i - 1]) * phi(-x[i]) - psi(x[i - 1]) * phi(x[i]);
  }
  return f;
}

ValueGrad worst_case_grad(const Vector& x, int T) {
  if (x.size() != T) throw DomainError("worst_case: x must have length T");
  ValueGrad out;
  out.grad = Vector::Zero(T);
  out.value = -psi(1.0) * phi(x[0]);
  out.grad[0] = -psi(1.0) * phi_deriv(x[0]);
  for (int i = 1; i < T; ++i) {
    const double a = x[i - 1], b = x[i];
    const double pm = psi(-a), pp = psi(a);
    out.value += pm * phi(-b) - pp * phi(b);
    // d/db of the pair term
    out.grad[i] += -pm * phi_deriv(-b) - pp * phi_deriv(b);
    // d/da of the pair term
    out.grad[i - 1] += -psi_deriv(-a) * phi(-b) - psi_deriv(a) * phi(b);
  }
  return out;
}

ScaledWorstCase scaled_worst_case(const ProblemConstants& c, Setup setup, const bounds::UniversalConstants& uc,
                                  std::int64_t blocks) {
  if (!(c.L > 0) || !(c.delta > 0) || !(c.epsilon > 0) || !(c.sigma2 >= 0))
    throw DomainError("scaled_worst_case: need L, delta, epsilon > 0 and sigma2 >= 0");
  if (!(c.epsilon < uc.c_prime * c.L * c.delta))
    throw PreconditionError("scaled_worst_case: requires epsilon < c' * L * delta");
  ScaledWorstCase out;
  out.blocks = blocks;
  if (setup == Setup::homog) {
    out.lambda = std::sqrt(2 * c.epsilon) * kChainSmoothness / c.L;
    out.chain_length = static_cast<int>(snap_floor(c.delta * c.L / (2 * c.epsilon * kChainSmoothness * kChainGap)));
    out.zero_out_p =
        c.sigma2 == 0 ? 1.0 : std::min(2 * c.epsilon * kChainGradBound * kChainGradBound / c.sigma2, 1.0);
    out.blocks = 1;
  } else {
    if (blocks < 1) throw DomainError("scaled_worst_case: blocks must be >= 1");
    const double S = static_cast<double>(blocks);
    out.lambda = std::sqrt(4 * c.epsilon * kChainSmoothness * kChainSmoothness / (c.L * c.L * S));
    out.chain_length = static_cast<int>(
        snap_floor(c.delta * kChainSmoothness / (c.L * out.lambda * out.lambda * S * kChainGap)));
    out.zero_out_p = 1.0;  // per-window probabilities come from the window parameters
  }
  if (out.chain_length < 1) throw PreconditionError("scaled_worst_case: chain length is zero; decrease epsilon");
  out.problem.objective = WorstCaseChain{out.chain_length, out.lambda, c.L, 1.0};
  out.problem.consts = c;
  out.problem.oracle = ZeroOut{out.zero_out_p};
  out.problem.x0 = Vector::Zero(out.chain_length);
  return out;
}

void zero_out_inplace(Vector& grad, int progress, double p, Rng& rng) {
  if (!(p > 0 && p <= 1)) throw DomainError("zero_out_oracle: p must be in (0, 1]");
  if (p == 1.0) return;
  std::bernoulli_distribution keep(p);
  for (Eigen::Index j = std::max(progress, 0); j < grad.size(); ++j) {
    if (grad[j] == 0.0) continue;
    grad[j] = keep(rng) ? grad[j] / p : 0.0;
  }
}

Vector zero_out_oracle(const Vector& grad, int progress, double p, Rng& rng) {
  Vector out = grad;
  zero_out_inplace(out, progress, p, rng);
  return out;
}

double value(const ProblemSpec& p, const Vector& x) {
  check_dim(p, x);
  return std::visit(overloaded{
                        [&](const Quadratic& q) { return 0.5 * q.L * x.squaredNorm(); },
                        [&](const HeterQuadratic& q) {
                          double s = 0;
                          for (const auto& b : q.centers) s += 0.5 * q.L * (x - b).squaredNorm();
                          return s / static_cast<double>(q.centers.size());
                        },
                        [&](const WorstCaseChain& w) {
                          return w.scale * (w.L * w.lambda * w.lambda / kChainSmoothness) *
                                 worst_case_value(x / w.lambda, w.length);
                        },
                    },
                    p.objective);
}

Vector gradient(const ProblemSpec& p, const Vector& x) {
  check_dim(p, x);
  return std::visit(overloaded{
                        [&](const Quadratic& q) -> Vector { return q.L * x; },
                        [&](const HeterQuadratic& q) -> Vector {
                          Vector mean = Vector::Zero(q.dim);
                          for (const auto& b : q.centers) mean += b;
                          mean /= static_cast<double>(q.centers.size());
                          return q.L * (x - mean);
                        },
                        [&](const WorstCaseChain& w) -> Vector {
                          return w.scale * (w.L * w.lambda / kChainSmoothness) *
                                 worst_case_grad(x / w.lambda, w.length).grad;
                        },
                    },
                    p.objective);
}

std::optional<double> optimal_value(const ProblemSpec& p) {
  return std::visit(overloaded{
                        [](const Quadratic&) -> std::optional<double> { return 0.0; },
                        [&](const HeterQuadratic& q) -> std::optional<double> {
                          Vector mean = Vector::Zero(q.dim);
                          for (const auto& b : q.centers) mean += b;
                          mean /= static_cast<double>(q.centers.size());
                          return value(p, mean);
                        },
                        [](const WorstCaseChain&) -> std::optional<double> { return std::nullopt; },
                    },
                    p.objective);
}

void local_gradient_into(const ProblemSpec& p, int worker, const Vector& x, Vector& out) {
  std::visit(overloaded{
                 [&](const Quadratic& q) { out.noalias() = q.L * x; },
                 [&](const HeterQuadratic& q) {
                   if (worker < 0 || worker >= static_cast<int>(q.centers.size()))
                     throw DomainError("heter_quadratic: worker index out of range");
                   out.noalias() = q.L * (x - q.centers[static_cast<std::size_t>(worker)]);
                 },
                 [&](const WorstCaseChain&) { out = gradient(p, x); },
             },
             p.objective);
}

void add_oracle_noise(const ProblemSpec& p, const Vector& x, Rng& rng, Vector& out) {
  std::visit(overloaded{
                 [&](const GaussianNoise& g) {
                   if (g.sigma2 == 0) return;
                   boost::random::normal_distribution<double> noise(0.0, std::sqrt(g.sigma2 / static_cast<double>(out.size())));
                   for (Eigen::Index j = 0; j < out.size(); ++j) out[j] += noise(rng);
                 },
                 [&](const ZeroOut& z) { zero_out_inplace(out, prog(x), z.p, rng); },
                 [](const ExactOracle&) {},
             },
             p.oracle);
}

void noisy_grad_into(const ProblemSpec& p, int worker, const Vector& x, Rng& rng, Vector& out) {
  check_dim(p, x);
  local_gradient_into(p, worker, x, out);
  add_oracle_noise(p, x, rng, out);
}

Vector noisy_grad(const ProblemSpec& p, const Vector& x, Rng& rng, int worker) {
  Vector out(p.dim());
  noisy_grad_into(p, worker, x, rng, out);
  return out;
}

}  // namespace hetsgd::objectives
