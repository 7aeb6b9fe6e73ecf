#include <cmath>

#include "doctest.h"
#include "sigvol/errors.hpp"
#include "sigvol/optimizer.hpp"

using namespace sigvol;

namespace {

double rosenbrock(const std::vector<double>& x, std::vector<double>& g) {
  const double a = 1.0 - x[0];
  const double b = x[1] - x[0] * x[0];
  g[0] = -2.0 * a - 400.0 * x[0] * b;
  g[1] = 200.0 * b;
  return a * a + 100.0 * b * b;
}

bool non_increasing(const std::vector<double>& h) {
  for (std::size_t i = 1; i < h.size(); ++i) {
    if (h[i] > h[i - 1]) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("unconstrained minimum inside the box") {
  LbfgsOptions opt;
  opt.ftol = 0.0;
  opt.gtol = 1e-10;
  opt.max_iterations = 1000;
  const auto r = minimize_box(rosenbrock, {-1.2, 1.0}, {{-5.0, -5.0}, {5.0, 5.0}}, opt);
  CHECK(r.converged());
  CHECK(r.x[0] == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(r.x[1] == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(non_increasing(r.history));
  CHECK(r.history.front() == doctest::Approx(24.2));
}

TEST_CASE("active bounds") {
  // minimum of (x - 3)^2 + (y + 2)^2 on [0, 1] x [-1, 1] is at (1, -1)
  auto f = [](const std::vector<double>& x, std::vector<double>& g) {
    g[0] = 2.0 * (x[0] - 3.0);
    g[1] = 2.0 * (x[1] + 2.0);
    return (x[0] - 3.0) * (x[0] - 3.0) + (x[1] + 2.0) * (x[1] + 2.0);
  };
  const auto r = minimize_box(f, {0.5, 0.5}, {{0.0, -1.0}, {1.0, 1.0}});
  CHECK(r.converged());
  CHECK(r.x[0] == 1.0);
  CHECK(r.x[1] == -1.0);
  CHECK(r.f == doctest::Approx(5.0));
}

TEST_CASE("start outside the box is projected") {
  auto f = [](const std::vector<double>& x, std::vector<double>& g) {
    g[0] = 2.0 * x[0];
    return x[0] * x[0];
  };
  const auto r = minimize_box(f, {10.0}, {{-1.0}, {2.0}});
  CHECK(std::abs(r.x[0]) < 1e-6);
  CHECK(r.history.front() == doctest::Approx(4.0));
}

TEST_CASE("iteration limit and ftol") {
  LbfgsOptions opt;
  opt.max_iterations = 3;
  opt.ftol = 0.0;
  opt.gtol = 0.0;
  const auto r = minimize_box(rosenbrock, {-1.2, 1.0}, {{-5.0, -5.0}, {5.0, 5.0}}, opt);
  CHECK(r.status == OptimizerStatus::max_iterations);
  CHECK_FALSE(r.converged());
  CHECK(r.iterations == 3);

  LbfgsOptions loose;
  loose.ftol = 1e-2;
  const auto s = minimize_box(rosenbrock, {-1.2, 1.0}, {{-5.0, -5.0}, {5.0, 5.0}}, loose);
  CHECK(s.status == OptimizerStatus::converged_ftol);
  CHECK(to_string(s.status) == "converged_ftol");
}

TEST_CASE("bad bounds") {
  CHECK_THROWS_AS((void)minimize_box(rosenbrock, {0.0, 0.0}, {{0.0}, {1.0}}), DomainError);
  CHECK_THROWS_AS((void)minimize_box(rosenbrock, {0.0, 0.0}, {{0.0, 1.0}, {1.0, 0.0}}), DomainError);
}
