#include <cmath>
#include <cstdio>
#include <filesystem>
#include <random>

#include "doctest.h"
#include "sigvol/errors.hpp"
#include "sigvol/feature_cache.hpp"
#include "sigvol/parallel.hpp"
#include "sigvol/sig_calibration.hpp"

using namespace sigvol;

namespace {

FeatureSpec small_spec() {
  FeatureSpec s;
  s.n_paths = 3000;
  s.n_steps = 96;
  s.seed = 21;
  return s;
}

const FeatureCache& small_cache() {
  static const FeatureCache cache = build_features(small_spec());
  return cache;
}

std::vector<OptionQuote> grid_quotes() {
  std::vector<OptionQuote> q;
  for (double t : {0.1, 0.6, 1.1, 1.6}) {
    for (double k : {90.0, 95.0, 100.0, 105.0, 110.0}) q.push_back({k, t, 0.0, 0.0, 1.0});
  }
  return q;
}

}  // namespace

TEST_CASE("feature cache layout and persistence") {
  const auto& cache = small_cache();
  CHECK(cache.basis_size() == 15);
  CHECK(cache.record_size() == 135);
  CHECK(cache.maturity_index(0.6) == 1);
  CHECK_THROWS_AS((void)cache.maturity_index(0.7), DomainError);
  CHECK(cache.excluded_count() == 0);
  CHECK(cache.maturity_block(2).size() == cache.n_paths() * cache.record_size());

  // v[0] is Z_T and U[0,0]^2 = T / 2
  for (std::size_t m = 0; m < 4; ++m) {
    const double t = cache.spec().maturities[m];
    for (std::size_t p = 0; p < 5; ++p) CHECK(cache.packed_u(m, p)[0] == doctest::Approx(std::sqrt(t / 2)));
  }

  const auto file = (std::filesystem::temp_directory_path() / "sigvol_unit_features.bin").string();
  cache.save(file);
  const auto back = FeatureCache::load(file);
  CHECK(back.spec() == cache.spec());
  for (std::size_t m = 0; m < 4; ++m) {
    const auto a = cache.maturity_block(m);
    const auto b = back.maturity_block(m);
    CHECK(std::equal(a.begin(), a.end(), b.begin()));
  }
  std::remove(file.c_str());
  CHECK_THROWS_AS((void)FeatureCache::load(file), IoError);

  const auto csv = cache.to_csv(1);
  CHECK(csv.rfind("path_id,T,kind,index,value\n", 0) == 0);
}

TEST_CASE("features do not depend on the worker count") {
  FeatureSpec s = small_spec();
  s.n_paths = 1500;
  set_worker_count(1);
  const auto a = build_features(s);
  set_worker_count(4);
  const auto b = build_features(s);
  set_worker_count(0);
  for (std::size_t m = 0; m < 4; ++m) {
    const auto x = a.maturity_block(m);
    const auto y = b.maturity_block(m);
    CHECK(std::equal(x.begin(), x.end(), y.begin()));
  }
}

TEST_CASE("inverse vega weights") {
  auto q = grid_quotes();
  for (auto& x : q) x.price = bs_price(100, x.strike, x.maturity, 0, 0.2);
  prepare_quotes(q, 100, 0);
  const auto w = weights_inverse_vega(q, 100, 0);
  double sum = 0.0;
  for (double x : w) sum += x;
  CHECK(sum == doctest::Approx(20.0));
  CHECK(w[0] > w[17]);  // T = 0.1, K = 90 against T = 1.6, K = 100

  std::vector<OptionQuote> same(3, OptionQuote{100.0, 1.0, bs_price(100, 100, 1, 0, 0.2), 0.0, 1.0});
  prepare_quotes(same, 100, 0);
  for (double x : weights_inverse_vega(same, 100, 0)) CHECK(x == doctest::Approx(1.0));
}

TEST_CASE("Black-Scholes embedding") {
  const auto& cache = small_cache();
  auto q = grid_quotes();
  std::vector<double> ell(15, 0.0);
  ell[0] = 0.2;
  const SigPricer pricer(cache, q, 100.0, 0.0, false);
  const auto prices = pricer.prices(ell);
  for (std::size_t i = 0; i < q.size(); ++i) {
    CHECK(std::abs(prices[i].price - bs_price(100, q[i].strike, q[i].maturity, 0, 0.2)) < 3.5 * prices[i].std_error);
  }
}

TEST_CASE("loss is deterministic and ignores zero weights") {
  const auto& cache = small_cache();
  auto q = grid_quotes();
  for (auto& x : q) x.price = bs_price(100, x.strike, x.maturity, 0, 0.22);
  std::vector<double> ell(15, 0.0);
  ell[0] = 0.2;
  ell[2] = 0.3;
  const double a = loss(ell, q, cache, 100.0);
  const double b = loss(ell, q, cache, 100.0);
  CHECK(a == b);
  set_worker_count(1);
  const double c = loss(ell, q, cache, 100.0);
  set_worker_count(0);
  CHECK(a == c);

  auto zeroed = q;
  zeroed[3].weight = 0.0;
  auto moved = zeroed;
  moved[3].price *= 1.5;
  CHECK(loss(ell, zeroed, cache, 100.0) == loss(ell, moved, cache, 100.0));
}

TEST_CASE("central-difference gradient") {
  const auto& cache = small_cache();
  auto q = grid_quotes();
  for (auto& x : q) x.price = bs_price(100, x.strike, x.maturity, 0, 0.25);
  const SigPricer pricer(cache, q, 100.0);
  std::mt19937_64 rng(5);
  std::normal_distribution<double> n;
  for (int trial = 0; trial < 5; ++trial) {
    std::vector<double> ell(15, 0.0);
    ell[0] = 0.2 + 0.02 * n(rng);
    for (std::size_t i = 1; i < 15; ++i) ell[i] = 0.02 * n(rng);
    std::vector<double> g6(15), g8(15), h6(15), h8(15);
    for (std::size_t i = 0; i < 15; ++i) {
      h6[i] = 1e-6 * std::max(1.0, std::abs(ell[i]));
      h8[i] = 1e-8 * std::max(1.0, std::abs(ell[i]));
    }
    const double f6 = pricer.loss_and_gradient(ell, h6, g6);
    const double f8 = pricer.loss_and_gradient(ell, h8, g8);
    CHECK(f6 == f8);
    CHECK(f6 == pricer.loss(ell));
    double norm = 0.0;
    for (double g : g8) norm = std::max(norm, std::abs(g));
    for (std::size_t i = 0; i < 15; ++i) CHECK(std::abs(g6[i] - g8[i]) <= 1e-3 * norm);
  }
}

TEST_CASE("self-generated market is recovered") {
  const auto& cache = small_cache();
  auto q = grid_quotes();
  std::vector<double> truth(15, 0.0);
  truth[0] = 0.21;
  truth[1] = 0.05;
  truth[2] = 0.4;
  const SigPricer pricer(cache, q, 100.0);
  const auto prices = pricer.prices(truth);
  for (std::size_t i = 0; i < q.size(); ++i) q[i].price = prices[i].price;

  CalibrationConfig config;
  config.optimizer.ftol = 0.0;
  config.optimizer.gtol = 1e-12;
  config.optimizer.max_iterations = 1000;
  const auto r = calibrate(config, q, cache);
  CHECK(r.loss < 1e-8);
  CHECK(r.max_iv_error() < 1e-3);
  CHECK(r.contracts.size() == 20);
  for (std::size_t i = 1; i < r.loss_history.size(); ++i) CHECK(r.loss_history[i] <= r.loss_history[i - 1]);

  // a smile fit on a subset does at least as well on that subset
  const auto s = smile_calibrate(config, 0.6, q, cache);
  CHECK(s.contracts.size() == 5);
  CHECK(s.loss < 1e-8);
  CHECK_THROWS_AS((void)smile_calibrate(config, 0.7, q, cache), DomainError);
}

TEST_CASE("factorial box and level norms") {
  const auto box = factorial_box(3, 5.0);
  CHECK(box.upper[0] == 5.0);
  CHECK(box.upper[1] == 5.0);
  CHECK(box.upper[3] == 2.5);
  CHECK(box.upper[14] == doctest::Approx(5.0 / 6));
  CHECK(box.lower[14] == -box.upper[14]);
  std::vector<double> ell(15, 1.0);
  const auto norms = level_norms(ell, 3);
  CHECK(norms.size() == 4);
  CHECK(norms[3] == doctest::Approx(std::sqrt(8.0)));
}
