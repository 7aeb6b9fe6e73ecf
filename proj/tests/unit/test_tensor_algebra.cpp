#include <cmath>
#include <functional>
#include <random>

#include "doctest.h"
#include "sigvol/errors.hpp"
#include "sigvol/signature.hpp"
#include "sigvol/tensor_algebra.hpp"

using namespace sigvol;

namespace {

// Every interleaving of i and j, enumerated by choosing which positions come from i.
WordSum brute_force_shuffle(const Word& i, const Word& j) {
  WordSum out;
  const std::size_t n = i.size() + j.size();
  for (unsigned mask = 0; mask < (1u << n); ++mask) {
    if (static_cast<std::size_t>(__builtin_popcount(mask)) != i.size()) continue;
    std::vector<int> letters;
    std::size_t a = 0, b = 0;
    for (std::size_t p = 0; p < n; ++p) letters.push_back((mask >> p) & 1u ? i[a++] : j[b++]);
    out.add(Word(letters));
  }
  return out;
}

std::vector<Word> all_words(int d, int max_len) {
  std::vector<Word> out{Word{}};
  std::vector<Word> level{Word{}};
  for (int k = 1; k <= max_len; ++k) {
    std::vector<Word> next;
    for (const auto& w : level) {
      for (int a = 0; a < d; ++a) next.push_back(w.append(a));
    }
    out.insert(out.end(), next.begin(), next.end());
    level = next;
  }
  return out;
}

std::int64_t binomial(int n, int k) {
  std::int64_t r = 1;
  for (int i = 1; i <= k; ++i) r = r * (n - k + i) / i;
  return r;
}

TruncatedTensor random_tensor(int d, int cap, std::mt19937_64& rng) {
  std::normal_distribution<double> n;
  TruncatedTensor t(d, cap);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = n(rng);
  return t;
}

}  // namespace

TEST_CASE("labeling is graded lexicographic") {
  const Labeling lab(2, 3);
  CHECK(lab.dimension() == 15);
  CHECK(lab.label(Word{}) == 0);
  CHECK(lab.label(Word{0}) == 1);
  CHECK(lab.label(Word{1}) == 2);
  CHECK(lab.label(Word{0, 0}) == 3);
  CHECK(lab.label(Word{1, 1, 1}) == 14);
  for (std::size_t j = 0; j < lab.dimension(); ++j) CHECK(lab.label(lab.unlabel(j)) == j);
  const auto words = lab.words();
  for (std::size_t j = 1; j < words.size(); ++j) {
    CHECK((words[j - 1].size() < words[j].size() ||
           (words[j - 1].size() == words[j].size() && words[j - 1].letters() < words[j].letters())));
  }
  CHECK_THROWS_AS((void)lab.label(Word{0, 0, 0, 0}), DomainError);
  CHECK_THROWS_AS((void)lab.label(Word{2}), DomainError);
  CHECK(tensor_dimension(2, 7) == 255);
}

TEST_CASE("shuffle worked examples") {
  const WordSum a = shuffle_words(Word{1, 2}, Word{3});
  CHECK(a == WordSum{{Word{1, 3, 2}, 1}, {Word{3, 1, 2}, 1}, {Word{1, 2, 3}, 1}});

  const WordSum b = shuffle_words(Word{1, 2, 3}, Word{2, 1});
  const WordSum expected{{Word{1, 2, 3, 2, 1}, 1}, {Word{1, 2, 1, 2, 3}, 1}, {Word{1, 2, 2, 1, 3}, 2},
                         {Word{1, 2, 2, 3, 1}, 2}, {Word{2, 1, 1, 2, 3}, 2}, {Word{2, 1, 2, 1, 3}, 1},
                         {Word{2, 1, 2, 3, 1}, 1}};
  CHECK(b == expected);
  CHECK(b.total_multiplicity() == 10);

  CHECK(shuffle_words(Word{0, 1}, Word{}) == WordSum{{Word{0, 1}, 1}});
  CHECK(shuffle_words(Word{}, Word{0, 1}) == WordSum{{Word{0, 1}, 1}});
}

TEST_CASE("shuffle agrees with interleaving enumeration") {
  const auto words = all_words(3, 3);
  for (const auto& i : words) {
    for (const auto& j : words) {
      const WordSum s = shuffle_words(i, j);
      REQUIRE(s == brute_force_shuffle(i, j));
      CHECK(s == shuffle_words(j, i));
      CHECK(s.total_multiplicity() == binomial(static_cast<int>(i.size() + j.size()), static_cast<int>(i.size())));
    }
  }
  // recursion (I' ⧢ J) e_in + (I ⧢ J') e_jm
  for (const auto& i : all_words(2, 3)) {
    for (const auto& j : all_words(2, 3)) {
      if (i.empty() || j.empty()) continue;
      WordSum r = shuffle_words(i.drop_last(), j).append(i.last());
      r.add(shuffle_words(i, j.drop_last()).append(j.last()));
      CHECK(r == shuffle_words(i, j));
    }
  }
}

TEST_CASE("concat product") {
  std::mt19937_64 rng(7);
  const auto a = random_tensor(2, 4, rng);
  const auto b = random_tensor(2, 4, rng);
  const auto c = random_tensor(2, 4, rng);

  const auto ub = concat_product(TruncatedTensor::unit(2, 4), b, 4);
  for (std::size_t i = 0; i < b.size(); ++i) CHECK(ub[i] == b[i]);

  // brute-force convolution over splittings w = u v
  const Labeling lab(2, 4);
  const auto ab = concat_product(a, b, 4);
  for (const auto& w : lab.words()) {
    double sum = 0.0;
    for (std::size_t k = 0; k <= w.size(); ++k) {
      const std::vector<int> u(w.letters().begin(), w.letters().begin() + static_cast<long>(k));
      const std::vector<int> v(w.letters().begin() + static_cast<long>(k), w.letters().end());
      sum += a.at(Word(u)) * b.at(Word(v));
    }
    CHECK(ab.at(w) == doctest::Approx(sum).epsilon(1e-13));
  }

  const auto left = concat_product(concat_product(a, b, 4), c, 4);
  const auto right = concat_product(a, concat_product(b, c, 4), 4);
  for (std::size_t i = 0; i < left.size(); ++i) CHECK(std::abs(left[i] - right[i]) <= 1e-12 * (1 + std::abs(left[i])));

  // exp(x) exp(y) = exp(x + y) in one dimension
  const double x = 0.7, y = -1.3;
  const auto ex = segment_exp(std::vector<double>{x}, 6);
  const auto ey = segment_exp(std::vector<double>{y}, 6);
  const auto exy = segment_exp(std::vector<double>{x + y}, 6);
  const auto prod = concat_product(ex, ey, 6);
  for (std::size_t i = 0; i < prod.size(); ++i) CHECK(prod[i] == doctest::Approx(exy[i]).epsilon(1e-13));

  CHECK_THROWS_AS((void)concat_product(TruncatedTensor(2, 3), TruncatedTensor(3, 3), 3), DomainError);
}

TEST_CASE("pairing") {
  std::mt19937_64 rng(11);
  const auto a = random_tensor(2, 3, rng);
  const auto l = random_tensor(2, 3, rng);
  double dot = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) dot += l[i] * a[i];
  CHECK(pair(l, a) == doctest::Approx(dot).epsilon(1e-14));
  CHECK(pair(TruncatedTensor::basis(2, 3, Word{1, 0}), a) == a.at(Word{1, 0}));
  CHECK(pair(TruncatedTensor(2, 3), a) == 0.0);
  CHECK_THROWS_AS((void)pair(TruncatedTensor(2, 3), TruncatedTensor(3, 3)), DomainError);
}

TEST_CASE("group-like defect") {
  const auto e = segment_exp(std::vector<double>{0.3, -1.1}, 6);
  CHECK(group_like_defect(e, 6) < 1e-14);

  // Ito lift (1, dB, dB^2/2 - dt/2): <1,a><1,a> - <11,a> * 2 = dt
  const double db = 0.37, dt = 0.25;
  TruncatedTensor ito(1, 2, {1.0, db, 0.5 * db * db - 0.5 * dt});
  CHECK(group_like_defect(ito, 2) == doctest::Approx(dt).epsilon(1e-14));

  TruncatedTensor bad = TruncatedTensor::unit(2, 2);
  bad[0] = 2.0;
  CHECK_THROWS_AS((void)group_like_defect(bad, 2), DomainError);

  std::mt19937_64 rng(3);
  std::normal_distribution<double> n;
  std::vector<double> times, values;
  for (int k = 0; k <= 30; ++k) {
    times.push_back(k * 0.1);
    values.push_back(n(rng));
    values.push_back(n(rng));
  }
  const auto s = signature(SampledPath(times, values, 2), 6);
  CHECK(group_like_defect(s, 6) < 1e-10);
  // shuffle identity via pair
  for (const auto& i : all_words(2, 3)) {
    for (const auto& j : all_words(2, 3)) {
      CHECK(std::abs(pair(shuffle_words(i, j), s) - s.at(i) * s.at(j)) < 1e-10 * (1 + std::abs(s.at(i) * s.at(j))));
    }
  }
}
