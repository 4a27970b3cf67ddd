#include <gtest/gtest.h>

#include <cmath>

#include "hetsgd/error.hpp"
#include "hetsgd/optimizers.hpp"

using namespace hetsgd;
using namespace hetsgd::optim;
using power::Constant;
using power::PeriodicOutage;

namespace {

ProblemConstants consts(double L, double sigma2, double eps, int n) {
  ProblemConstants c;
  c.L = L;
  c.delta = 1;
  c.sigma2 = sigma2;
  c.epsilon = eps;
  c.workers = n;
  return c;
}

ProblemSpec quadratic(int dim, double sigma2) {
  ProblemSpec p;
  p.objective = objectives::Quadratic{1.0, dim};
  p.consts = consts(1, sigma2, 0.1, 1);
  p.oracle = objectives::GaussianNoise{sigma2};
  p.x0 = Vector::Constant(dim, 1.0);
  return p;
}

}  // namespace

TEST(MethodParams, Examples) {
  auto r = method_params(Method::rennala, Regime::nonconvex, consts(1, 100, 1, 1));
  EXPECT_DOUBLE_EQ(r.stepsize, 0.5);
  EXPECT_EQ(r.batch, 100);
  EXPECT_EQ(r.iterations, 24);
  auto m = method_params(Method::malenia, Regime::nonconvex, consts(1, 10, 1, 4));
  EXPECT_EQ(m.batch, 10);
  EXPECT_DOUBLE_EQ(m.stepsize, 0.5);
  EXPECT_EQ(method_params(Method::rennala, Regime::nonconvex, consts(1, 0, 1, 1)).batch, 1);
  // sigma^2 = 0 takes the 1/L branch.
  EXPECT_DOUBLE_EQ(method_params(Method::malenia, Regime::nonconvex, consts(2, 0, 1, 3)).stepsize, 0.5);
  EXPECT_EQ(method_params(Method::malenia, Regime::nonconvex, consts(2, 0, 1, 3)).batch, 3);
}

TEST(MethodParams, NamesRoundTrip) {
  for (auto m : {Method::rennala, Method::malenia, Method::minibatch, Method::async, Method::accel_rennala,
                 Method::accel_malenia})
    EXPECT_EQ(parse_method(to_string(m)), m);
  EXPECT_THROW(parse_method("adam"), DomainError);
}

TEST(MaleniaExit, Examples) {
  std::vector<std::int64_t> a{2, 4}, b{3, 4}, z{0, 100};
  EXPECT_NEAR(harmonic_batch(a), 8.0 / 3, 1e-15);
  EXPECT_FALSE(malenia_exit(a, 6));
  EXPECT_NEAR(harmonic_batch(b), 24.0 / 7, 1e-15);
  EXPECT_TRUE(malenia_exit(b, 6));
  EXPECT_EQ(harmonic_batch(z), 0);
  EXPECT_FALSE(malenia_exit(z, 1));
}

TEST(Accelerated, Examples) {
  Vector x0(2);
  x0 << 1, -2;
  auto s = accelerated_start(x0);
  EXPECT_EQ(accelerated_query_point(s, 0), x0);

  AcceleratedState st;
  st.x = Vector::Constant(1, 0.4);
  st.u = Vector::Constant(1, -1.0);
  auto z = accelerated_update(st, Vector::Zero(1), 3, 0.7, 2);
  const double a = 2.0 / 5;
  EXPECT_EQ(z.u, st.u);
  EXPECT_NEAR(z.x[0], (1 - a) * 0.4 + a * -1.0, 1e-15);

  // k = 1, gamma = 1, s = 1, x = 0, u = 3, g = 1: alpha = 2/3, gamma_2 = 2.
  st.x = Vector::Constant(1, 0.0);
  st.u = Vector::Constant(1, 3.0);
  auto h = accelerated_update(st, Vector::Constant(1, 1.0), 1, 1.0, 1.0);
  EXPECT_DOUBLE_EQ(h.u[0], 1.0);
  EXPECT_NEAR(h.x[0], 2.0 / 3, 1e-15);
  EXPECT_NEAR(h.y[0], 2.0, 1e-15);
}

TEST(RunMethod, RennalaIterationTime) {
  auto p = quadratic(2, 1);
  std::vector<PowerProfile> one{Constant{1}};
  auto r = run_method(AlgorithmDriver{Method::rennala, 0.1, 3, 5}, p, one, 1);
  ASSERT_EQ(r.trajectory.size(), 6u);
  for (std::size_t k = 0; k < r.trajectory.size(); ++k) EXPECT_NEAR(r.trajectory[k].time, 3.0 * k, 1e-12);
}

TEST(RunMethod, MinibatchWaitsForSlowest) {
  auto p = quadratic(2, 1);
  std::vector<PowerProfile> two{Constant{1}, Constant{0.5}};
  auto r = run_method(AlgorithmDriver{Method::minibatch, 0.1, 1, 4}, p, two, 1);
  for (std::size_t k = 1; k < r.trajectory.size(); ++k)
    EXPECT_NEAR(r.trajectory[k].time - r.trajectory[k - 1].time, 2.0, 1e-12);
}

TEST(RunMethod, RennalaMatchesSequentialMinibatch) {
  auto p = quadratic(3, 4);
  std::vector<PowerProfile> prof{Constant{1}, Constant{2.5}, PeriodicOutage{1.5, 2, 1}};
  optim::RunOptions opt;
  opt.session.record_gradients = true;
  opt.session.keep_iterates_every = 1;
  const double gamma = 0.2;
  const std::int64_t S = 4;
  auto r = run_method(AlgorithmDriver{Method::rennala, gamma, S, 15}, p, prof, 21, opt);
  ASSERT_EQ(r.iterates.size(), 16u);
  Vector x = p.start();
  std::size_t pos = 0;
  for (std::int64_t k = 0; k < 15; ++k) {
    Vector sum = Vector::Zero(3);
    int used = 0;
    while (pos < r.gradient_log.size() && r.gradient_log[pos].iteration == k) {
      sum += r.gradient_log[pos].gradient;
      ++used;
      ++pos;
    }
    EXPECT_EQ(used, S);
    x -= (gamma / static_cast<double>(S)) * sum;
    EXPECT_EQ(x, r.iterates[static_cast<std::size_t>(k) + 1].second);
  }
}

TEST(RunMethod, MaleniaExitInvariant) {
  ProblemSpec p;
  objectives::HeterQuadratic h{1.0, {}, 2};
  for (int i = 0; i < 3; ++i) h.centers.push_back(Vector::Constant(2, i - 1.0));
  p.objective = h;
  p.consts = consts(1, 1, 0.1, 3);
  p.oracle = objectives::GaussianNoise{1};
  std::vector<PowerProfile> prof{Constant{1}, Constant{3}, PeriodicOutage{2, 2, 1.2}};
  const double S = 7;
  auto r = run_method(AlgorithmDriver{Method::malenia, 0.1, 7, 20}, p, prof, 4);
  ASSERT_EQ(r.batches.size(), 20u);
  for (std::size_t k = 0; k < r.batches.size(); ++k) {
    auto b = r.batches[k];
    EXPECT_TRUE(malenia_exit(b, S));
    --b[static_cast<std::size_t>(r.closing_worker[k])];
    EXPECT_FALSE(malenia_exit(b, S));
  }
}

TEST(RunMethod, MaleniaAggregateUnbiased) {
  ProblemSpec p;
  objectives::HeterQuadratic h{1.0, {}, 2};
  h.centers.push_back(Vector::Constant(2, 1.0));
  h.centers.push_back(Vector::Constant(2, -3.0));
  p.objective = h;
  p.consts = consts(1, 1, 0.1, 2);
  p.oracle = objectives::GaussianNoise{1};
  p.x0 = Vector::Zero(2);
  std::vector<PowerProfile> prof{Constant{1}, Constant{4}};
  const int runs = 4000;
  Vector mean = Vector::Zero(2);
  for (int s = 0; s < runs; ++s) {
    optim::RunOptions opt;
    opt.session.keep_iterates_every = 1;
    auto r = run_method(AlgorithmDriver{Method::malenia, 1.0, 4, 1}, p, prof, static_cast<std::uint64_t>(s), opt);
    mean += (p.x0 - r.iterates.back().second) / runs;
  }
  Vector truth = objectives::gradient(p, p.x0);
  // Per-run variance is at most sigma^2 / 2 per worker share; 4 SE.
  EXPECT_LE((mean - truth).lpNorm<Eigen::Infinity>(), 4 * std::sqrt(1.0 / runs));
}
