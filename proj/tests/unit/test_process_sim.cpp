#include <cmath>
#include <numeric>

#include "doctest.h"
#include "sigvol/errors.hpp"
#include "sigvol/parallel.hpp"
#include "sigvol/pricing.hpp"
#include "sigvol/process_sim.hpp"

using namespace sigvol;

namespace {

struct Moments {
  double mean;
  double var;
};

Moments moments(const std::vector<double>& xs) {
  const double n = static_cast<double>(xs.size());
  const double mean = std::accumulate(xs.begin(), xs.end(), 0.0) / n;
  double ss = 0.0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  return {mean, ss / (n - 1)};
}

std::vector<double> terminal(const BrownianBatch& b, const std::vector<double>& inc) {
  std::vector<double> out(b.n_paths, 0.0);
  for (std::size_t p = 0; p < b.n_paths; ++p) {
    for (int k = 0; k < b.n_steps; ++k) out[p] += inc[p * b.n_steps + k];
  }
  return out;
}

}  // namespace

TEST_CASE("parameter validation") {
  CHECK_NOTHROW(HestonParams{}.validate());
  CHECK_THROWS_AS((HestonParams{0.04, -1.0, 0.09, 0.3, 0.0}.validate()), DomainError);
  CHECK_THROWS_AS((HestonParams{0.04, 3.0, 0.09, 0.3, 1.0}.validate()), DomainError);
  CHECK(HestonParams{0.04, 3.0, 0.09, 0.3, 0.0}.feller());
  CHECK_FALSE(HestonParams{0.04, 1.0, 0.01, 0.3, 0.0}.feller());
  CHECK_THROWS_AS((RoughBergomiParams{0.2, 0.5, 1.0, 0.0}.validate()), DomainError);
}

TEST_CASE("time grid") {
  const TimeGrid g(1.6, 480);
  CHECK(g.index_of(0.1) == 30);
  CHECK(g.index_of(1.6) == 480);
  CHECK_THROWS_AS((void)g.index_of(0.105), DomainError);
  CHECK(TimeGrid::with_step(1.6, 1.0 / 300).n_steps() == 480);
}

TEST_CASE("Brownian increments") {
  const auto a = simulate_brownian(20000, 10, 1.0, 42);
  const auto b = simulate_brownian(20000, 10, 1.0, 42);
  CHECK(a.dW == b.dW);
  CHECK(a.dB == b.dB);
  CHECK(simulate_brownian(100, 10, 1.0, 43).dW != simulate_brownian(100, 10, 1.0, 42).dW);

  const auto m = moments(terminal(a, a.dW));
  CHECK(std::abs(m.mean) < 4.0 * std::sqrt(1.0 / 20000));
  CHECK(m.var == doctest::Approx(1.0).epsilon(0.03));

  // paths are addressable independently of how they are batched
  const auto tail = simulate_brownian(10, 10, 1.0, 42, false, 5000);
  for (std::size_t i = 0; i < tail.dW.size(); ++i) CHECK(tail.dW[i] == a.dW[5000 * 10 + i]);

  const auto anti = simulate_brownian(4, 5, 1.0, 1, true);
  for (int k = 0; k < 5; ++k) {
    CHECK(anti.dW_path(1)[k] == -anti.dW_path(0)[k]);
    CHECK(anti.dB_path(3)[k] == -anti.dB_path(2)[k]);
  }
}

TEST_CASE("correlation") {
  const auto b = simulate_brownian(20000, 4, 1.0, 7);
  CHECK(correlate(b, 0.0) == b.dB);
  for (double rho : {-0.5, 0.999}) {
    const auto z = terminal(b, correlate(b, rho));
    const auto w = terminal(b, b.dW);
    const auto mz = moments(z);
    const auto mw = moments(w);
    double cov = 0.0;
    for (std::size_t p = 0; p < z.size(); ++p) cov += (z[p] - mz.mean) * (w[p] - mw.mean);
    cov /= static_cast<double>(z.size() - 1);
    CHECK(cov / std::sqrt(mz.var * mw.var) == doctest::Approx(rho).epsilon(0.03));
  }
}

TEST_CASE("CIR Euler scheme") {
  const TimeGrid g(1.0, 200);
  const auto b = simulate_brownian(20000, 200, 1.0, 3);
  HestonParams p{0.1, 2.0, 0.15, 0.0, 0.0};
  const auto ode = euler_cir(p, b);
  const double exact = p.theta + (p.x0 - p.theta) * std::exp(-p.kappa);
  CHECK(ode[200] == doctest::Approx(exact).epsilon(1e-3));

  p.x0 = p.theta;
  const auto flat = euler_cir(p, b);
  for (int k = 0; k <= 200; ++k) CHECK(flat[k] == doctest::Approx(p.theta));

  p = {0.1, 2.0, 0.15, 0.2, 0.0};
  const auto x = euler_cir(p, b);
  std::vector<double> xt;
  for (std::size_t i = 0; i < b.n_paths; ++i) xt.push_back(x[i * 201 + 200]);
  const auto m = moments(xt);
  const double mean = p.theta + (p.x0 - p.theta) * std::exp(-p.kappa);
  CHECK(std::abs(m.mean - mean) < 3.0 * std::sqrt(m.var / 20000));

  // violates Feller; the scheme truncates inside the radical
  p = {0.01, 1.0, 0.01, 1.0, 0.0};
  const auto y = euler_cir(p, b);
  CHECK(std::all_of(y.begin(), y.end(), [](double v) { return std::isfinite(v); }));
}

TEST_CASE("Volterra kernel") {
  const TimeGrid g(1.0, 100);
  const auto b = simulate_brownian(20000, 100, 1.0, 11);
  const auto w = volterra_fbm(0.5, b);
  for (std::size_t p = 0; p < 20; ++p) {
    double acc = 0.0;
    for (int k = 0; k < 100; ++k) {
      acc += b.dW[p * 100 + k];
      CHECK(w[p * 101 + k + 1] == acc);
    }
  }

  const VolterraKernel kernel(0.1, g);
  for (int k : {1, 10, 100}) {
    double var = 0.0;
    for (int j = 0; j < k; ++j) var += kernel.weight(k, j) * kernel.weight(k, j) * g.dt();
    CHECK(var == doctest::Approx(std::pow(g.time(k), 0.2)).epsilon(1e-12));
  }

  const auto wh = volterra_fbm(0.1, b);
  std::vector<double> end;
  for (std::size_t p = 0; p < b.n_paths; ++p) end.push_back(wh[p * 101 + 100]);
  CHECK(moments(end).var == doctest::Approx(1.0).epsilon(0.03));

  // Cov(W^H_s, W^H_t) against quadrature of the continuous kernel
  const int ks = 50;
  std::vector<double> mid;
  for (std::size_t p = 0; p < b.n_paths; ++p) mid.push_back(wh[p * 101 + ks]);
  double cov = 0.0;
  for (std::size_t p = 0; p < b.n_paths; ++p) cov += mid[p] * end[p];
  cov /= static_cast<double>(b.n_paths);
  const double h = 0.1, s = 0.5, t = 1.0;
  double quad = 0.0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    // substitute u = s - v^{1/(H+1/2)} to remove the singularity at u = s
    const double a = 1.0 / (h + 0.5);
    const double vmax = std::pow(s, h + 0.5);
    const double v = (i + 0.5) * vmax / n;
    const double u = s - std::pow(v, a);
    const double du = a * std::pow(v, a - 1.0) * vmax / n;
    quad += 2.0 * h * std::pow(t - u, h - 0.5) * std::pow(s - u, h - 0.5) * du;
  }
  // the sample covariance matches the one implied by the discrete weights
  double discrete = 0.0;
  for (int j = 0; j < ks; ++j) discrete += kernel.weight(ks, j) * kernel.weight(100, j) * g.dt();
  double var_prod = 0.0;
  for (std::size_t p = 0; p < b.n_paths; ++p) var_prod += std::pow(mid[p] * end[p] - cov, 2);
  const double se = std::sqrt(var_prod / static_cast<double>(b.n_paths) / static_cast<double>(b.n_paths));
  CHECK(std::abs(cov - discrete) < 3.0 * se);
  // and the discretization bias shrinks under refinement
  double previous = std::abs(discrete - quad);
  for (int steps : {400, 1600}) {
    const TimeGrid fine(1.0, steps);
    const VolterraKernel kf(h, fine);
    double c = 0.0;
    for (int j = 0; j < steps / 2; ++j) c += kf.weight(steps / 2, j) * kf.weight(steps, j) * fine.dt();
    CHECK(std::abs(c - quad) < previous);
    previous = std::abs(c - quad);
  }
  CHECK(previous < 0.05);
}

TEST_CASE("rough Bergomi volatility") {
  const TimeGrid g(1.0, 100);
  const auto b = simulate_brownian(20000, 100, 1.0, 13);
  const RoughBergomiParams p{0.2, 0.5, 0.1, 0.0};
  const auto wh = volterra_fbm(p.hurst, b);
  const auto vol = rough_bergomi_vol(p, wh, g);
  CHECK(vol[0] == doctest::Approx(0.2));
  std::vector<double> v2;
  for (std::size_t i = 0; i < b.n_paths; ++i) v2.push_back(vol[i * 101 + 100] * vol[i * 101 + 100]);
  const auto m = moments(v2);
  CHECK(std::abs(m.mean - 0.04) < 3.0 * std::sqrt(m.var / 20000));

  const auto still = rough_bergomi_vol({0.2, 0.0, 0.1, 0.0}, wh, g);
  for (double s : still) CHECK(s == doctest::Approx(0.2));
}

TEST_CASE("market simulation") {
  MarketModel m;
  m.heston = {0.04, 3.0, 0.04, 0.0, 0.0};  // constant volatility 0.2
  const std::vector<double> mats{0.5, 1.0};
  const TimeGrid g(1.0, 100);
  const auto tp = simulate_market(m, 100.0, 0.03, mats, g, 40000, 5);
  for (std::size_t i = 0; i < mats.size(); ++i) {
    const auto mo = moments(tp.discounted[i]);
    CHECK(std::abs(mo.mean - 100.0) < 3.0 * std::sqrt(mo.var / 40000));
    double last = 1e300;
    for (double k : {90.0, 100.0, 110.0}) {
      const auto c = mc_call_price(tp.discounted[i], k, 0.03, mats[i]);
      CHECK(std::abs(c.price - bs_price(100.0, k, mats[i], 0.03, 0.2)) < 3.0 * c.std_error);
      CHECK(c.price < last);
      last = c.price;
    }
  }
  CHECK_THROWS_AS((void)simulate_market(m, 100.0, 0.0, std::vector<double>{0.505}, g, 10, 1), DomainError);

  // results do not depend on the number of workers
  set_worker_count(1);
  const auto one = simulate_market(m, 100.0, 0.0, mats, g, 5000, 9);
  set_worker_count(3);
  const auto three = simulate_market(m, 100.0, 0.0, mats, g, 5000, 9);
  set_worker_count(0);
  CHECK(one.discounted == three.discounted);

  // batch and streamed simulation agree
  const auto batch = simulate_brownian(3000, 100, 1.0, 9);
  const auto direct = market_terminal_prices(m, 100.0, 0.0, mats, batch);
  for (std::size_t i = 0; i < 3000; ++i) CHECK(direct.discounted[1][i] == doctest::Approx(one.discounted[1][i]).epsilon(1e-13));
}

TEST_CASE("market kind names") {
  CHECK(market_kind_from_string("heston") == MarketKind::heston);
  CHECK(market_kind_from_string("rough_bergomi") == MarketKind::rough_bergomi);
  CHECK(to_string(MarketKind::rough_bergomi) == "rough_bergomi");
  CHECK_THROWS_AS((void)market_kind_from_string("sabr"), DomainError);
}
