#include <cmath>
#include <random>

#include <Eigen/Eigenvalues>

#include "doctest.h"
#include "sigvol/errors.hpp"
#include "sigvol/process_sim.hpp"
#include "sigvol/sig_model.hpp"

using namespace sigvol;

namespace {

// Time-augmented CIR path on [0, horizon].
SampledPath primary_path(std::uint64_t seed, int n_steps, double horizon) {
  const auto b = simulate_brownian(1, n_steps, horizon, seed);
  const HestonParams p{0.1, 2.0, 0.15, 0.2, 0.0};
  std::vector<double> x(n_steps + 1);
  euler_cir_path(p, b.dW_path(0), b.dt(), x);
  std::vector<double> t(n_steps + 1);
  for (int k = 0; k <= n_steps; ++k) t[k] = k * b.dt();
  return time_augment(SampledPath(t, x, 1));
}

}  // namespace

TEST_CASE("Q matrix entries") {
  const auto path = primary_path(1, 60, 0.6);
  const auto sig = signature(path, 7);
  const Eigen::MatrixXd q = q_matrix(sig, 3);
  const double t = 0.6;
  CHECK(q.rows() == 15);
  CHECK(q(0, 0) == doctest::Approx(-t / 2).epsilon(1e-12));
  CHECK(q(0, 1) == doctest::Approx(-t * t / 4).epsilon(1e-12));
  CHECK((q - q.transpose()).cwiseAbs().maxCoeff() == 0.0);
  CHECK_THROWS_AS((void)q_matrix(signature(path, 6), 3), DomainError);

  // entry by entry from the definition
  const Labeling lab(2, 3);
  for (std::size_t i = 0; i < 15; ++i) {
    for (std::size_t j = 0; j < 15; ++j) {
      const double expected = -0.5 * pair(shuffle_words(lab.unlabel(i), lab.unlabel(j)).append(0), sig);
      CHECK(q(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) ==
            doctest::Approx(expected).epsilon(1e-13));
    }
  }
}

TEST_CASE("Q against quadrature of sigma squared") {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n;
  const auto path = primary_path(2, 480, 1.6);
  const auto stream3 = signature_stream(path, 3);
  const auto q = q_matrix(signature(path, 7), 3);
  for (int trial = 0; trial < 5; ++trial) {
    std::vector<double> ell(15);
    for (auto& l : ell) l = 0.2 * n(rng);
    const auto vol = sig_vol_path(ell, stream3);
    double integral = 0.0;
    for (std::size_t k = 0; k + 1 < vol.size(); ++k) {
      integral += 0.5 * (vol[k] * vol[k] + vol[k + 1] * vol[k + 1]) * (stream3.grid[k + 1] - stream3.grid[k]);
    }
    const Eigen::Map<const Eigen::VectorXd> l(ell.data(), 15);
    const double lql = l.dot(q * l);
    CHECK(std::abs(lql + 0.5 * integral) <= 2e-3 * (1 + std::abs(lql)));
  }
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(q);
  CHECK(es.eigenvalues().maxCoeff() <= 1e-9 * q.cwiseAbs().maxCoeff());
}

TEST_CASE("Cholesky factor of -Q") {
  const auto f = factor_neg_q(-Eigen::MatrixXd::Identity(4, 4));
  CHECK((f.u - Eigen::MatrixXd::Identity(4, 4)).cwiseAbs().maxCoeff() < 1e-15);
  CHECK(f.ridge == 0.0);
  CHECK(factor_neg_q(Eigen::MatrixXd::Zero(3, 3)).u.cwiseAbs().maxCoeff() == 0.0);

  const auto q = q_matrix(signature(primary_path(4, 300, 1.0), 7), 3);
  const auto g = factor_neg_q(q);
  CHECK((g.u.transpose() * g.u + q).cwiseAbs().maxCoeff() <= 1e-9 * (1 + q.cwiseAbs().maxCoeff()));
  CHECK(g.u.isUpperTriangular());

  Eigen::MatrixXd indefinite = Eigen::MatrixXd::Zero(2, 2);
  indefinite(0, 0) = -1.0;
  indefinite(1, 1) = 1.0;
  CHECK_THROWS_AS((void)factor_neg_q(indefinite), NumericalError);

  std::vector<double> packed(packed_size(15));
  pack_upper(g.u, packed);
  CHECK((unpack_upper(packed, 15) - g.u).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("stochastic integral features") {
  const auto path = primary_path(5, 50, 0.5);
  const auto stream = signature_stream(path, 3);
  const auto b = simulate_brownian(1, 50, 0.5, 6);
  const auto dz = b.dB_path(0);
  const auto v = sig_stochastic_integral(stream, dz);
  double z = 0.0;
  double tdz = 0.0;
  for (std::size_t k = 0; k < dz.size(); ++k) {
    z += dz[k];
    tdz += stream.grid[k] * dz[k];
  }
  CHECK(v[0] == doctest::Approx(z).epsilon(1e-14));
  CHECK(v[1] == doctest::Approx(tdz).epsilon(1e-13));
  const std::vector<double> zero(50, 0.0);
  for (double x : sig_stochastic_integral(stream, zero)) CHECK(x == 0.0);
  CHECK_THROWS_AS((void)sig_stochastic_integral(stream, std::vector<double>(49, 0.0)), DomainError);
}

TEST_CASE("terminal price") {
  const auto path = primary_path(7, 60, 0.6);
  const auto q = q_matrix(signature(path, 7), 3);
  std::vector<double> packed(packed_size(15));
  pack_upper(factor_neg_q(q).u, packed);
  std::vector<double> v(15, 0.0);
  v[0] = 0.31;  // Z_T
  std::vector<double> ell(15, 0.0);
  CHECK(terminal_price(ell, packed, v, 100.0) == 100.0);
  ell[0] = 0.2;
  CHECK(terminal_price(ell, packed, v, 100.0) ==
        doctest::Approx(100.0 * std::exp(-0.5 * 0.04 * 0.6 + 0.2 * 0.31)).epsilon(1e-12));
  CHECK(packed_quadratic(packed, ell) == doctest::Approx(0.5 * 0.04 * 0.6).epsilon(1e-12));
}

TEST_CASE("signature volatility path") {
  const auto path = primary_path(8, 40, 0.4);
  const auto stream = signature_stream(path, 3);
  std::vector<double> e(15, 0.0);
  e[0] = 1.0;
  for (double s : sig_vol_path(e, stream)) CHECK(s == 1.0);
  e[0] = 0.0;
  e[2] = 1.0;  // word (1)
  const auto vol = sig_vol_path(e, stream);
  for (std::size_t k = 0; k < vol.size(); ++k) {
    CHECK(vol[k] == doctest::Approx(path.value(k, 1) - path.value(0, 1)).epsilon(1e-12));
  }
  // the word (0, 0) carries t^2 / 2
  e[2] = 0.0;
  e[3] = 1.0;
  const auto quad = sig_vol_path(e, stream);
  for (std::size_t k = 0; k < quad.size(); ++k) CHECK(quad[k] == doctest::Approx(0.5 * stream.grid[k] * stream.grid[k]));
}

TEST_CASE("Horner extension matches the Chen product") {
  std::mt19937_64 rng(12);
  std::normal_distribution<double> n;
  SignatureExtender ext(2, 7);
  TruncatedTensor a = TruncatedTensor::unit(2, 7);
  std::vector<double> fast(a.coeffs().begin(), a.coeffs().end());
  for (int k = 0; k < 20; ++k) {
    const std::vector<double> inc{0.01, 0.1 * n(rng)};
    extend_by_segment(a, inc);
    ext.extend(fast, inc);
  }
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(fast[i] == doctest::Approx(a[i]).epsilon(1e-12));
}

TEST_CASE("shuffle table") {
  const auto t = ShuffleTable::get(3);
  CHECK(t.get() == ShuffleTable::get(3).get());
  CHECK(t->basis_size() == 15);
  CHECK(t->signature_cap() == 7);
  const auto terms = t->terms(0, 0);
  REQUIRE(terms.size() == 1);
  CHECK(terms[0].label == 1);
  CHECK(terms[0].multiplicity == 1);
}
