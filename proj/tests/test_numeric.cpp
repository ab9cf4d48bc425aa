#include <doctest.h>

#include <cmath>

#include "seqstage/error.hpp"
#include "seqstage/numeric.hpp"

using namespace seqstage;

namespace {

// Maclaurin series of erf in long double; accurate for |x| <= 3.
long double erf_series(long double x) {
  long double term = x, sum = x;
  for (int n = 1; n < 200; ++n) {
    term *= -x * x / n;
    const long double add = term / (2 * n + 1);
    sum += add;
    if (std::fabs(add) < 1e-30L) break;
  }
  return sum * 2.0L / std::sqrt(3.14159265358979323846264338327950288L);
}

long double cdf_series(long double z) { return 0.5L * (1.0L + erf_series(z / std::sqrt(2.0L))); }

// Composite Simpson rule for integral_z^upper Phi(-x) dx with the series CDF
// on the bulk and a continued-fraction-free cut at |x| > 8 (mass < 1e-15).
double psi_quadrature(double z) {
  const double upper = 9.0;
  const int n = 20000;
  const double h = (upper - z) / n;
  auto f = [](double x) { return x > 8.0 ? 0.0 : static_cast<double>(1.0L - cdf_series(x)); };
  double s = f(z) + f(upper);
  for (int i = 1; i < n; ++i) s += (i % 2 ? 4.0 : 2.0) * f(z + i * h);
  return s * h / 3.0;
}

}  // namespace

TEST_CASE("normal cdf against the erf series") {
  CHECK(std_normal_cdf(0.0) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(std::abs(std_normal_cdf(1.959964) - 0.975) < 1e-6);
  for (double z = -3.0; z <= 3.0; z += 0.25)
    CHECK(std::abs(std_normal_cdf(z) - static_cast<double>(cdf_series(z))) < 1e-12);
  const double tail = std_normal_cdf(-40.0);
  CHECK(tail >= 0.0);
  CHECK(tail < 1e-300);
}

TEST_CASE("psi+ matches quadrature") {
  CHECK(std::abs(psi_plus(0.0) - 0.3989422804) < 1e-9);
  CHECK(std::abs(psi_plus(0.0) - psi_quadrature(0.0)) < 1e-8);
  CHECK(psi_plus(10.0) < 1e-20);
  CHECK(psi_plus(10.0) > 0.0);
  CHECK(std::abs(psi_plus(-10.0) - 10.0) < 1e-8);
  for (double z = -5.0; z <= 5.0; z += 0.5) CHECK(std::abs(psi_plus(z) - psi_quadrature(z)) < 1e-8);
}

TEST_CASE("mills hazard values and monotonicity") {
  CHECK(mills_hazard(Quantile::neg_inf()) == 0.0);
  CHECK(std::abs(mills_hazard(0.0) - 2.0 * 0.3989422804014327) < 1e-12);
  CHECK(std::abs(mills_hazard(10.0) - 10.0981) < 1e-4);
  CHECK(std::abs(mills_hazard(10.0) - (10.0 + 0.1)) < 2e-3);
  // Asymptotic series z + 1/z - 2/z^3 + 10/z^5 at large z.
  for (double z : {20.0, 50.0, 200.0}) {
    const double series = z + 1 / z - 2 / std::pow(z, 3) + 10 / std::pow(z, 5) - 74 / std::pow(z, 7);
    CHECK(std::abs(mills_hazard(z) - series) < 1e-7);
  }
  // Continuity across the switch to the continued fraction.
  CHECK(std::abs(mills_hazard(std::nextafter(8.0, 0.0)) - mills_hazard(8.0)) < 1e-10);
  double prev = mills_hazard(-8.0);
  for (int i = 1; i <= 1600; ++i) {
    const double cur = mills_hazard(-8.0 + 0.01 * i);
    CHECK(cur > prev);
    prev = cur;
  }
}

TEST_CASE("inverse hazard round trips") {
  CHECK(inverse_mills_hazard(0.0).is_neg_inf());
  CHECK(std::abs(inverse_mills_hazard(0.7978846).value()) < 1e-6);
  CHECK(std::abs(inverse_mills_hazard(mills_hazard(0.0)).value()) < 1e-8);
  for (double t : {0.01, 0.1, 1.0, 5.0, 50.0}) {
    const double back = mills_hazard(inverse_mills_hazard(t));
    CHECK(std::abs(back - t) / t < 1e-10);
  }
  CHECK_THROWS_AS(inverse_mills_hazard(-1.0), DomainError);
}

TEST_CASE("u_m values, range and monotonicity") {
  CHECK(u_m(3, Quantile::neg_inf()) == 3.0);
  CHECK(std::abs(u_m(1, Quantile::finite(0.0)) - (1.5 + 0.3989422804014327 * 0.7978845608028654)) < 1e-12);
  CHECK(std::abs(u_m(1, Quantile::finite(0.0)) - 1.81831) < 1e-5);
  for (int m : {1, 2, 5}) {
    double prev = u_m(m, Quantile::finite(-5.0));
    CHECK(prev > m);
    for (double z = -4.9; z <= 5.0; z += 0.1) {
      const double cur = u_m(m, Quantile::finite(z));
      CHECK(cur > m);
      CHECK(cur < m + 1);
      CHECK(cur >= prev);
      prev = cur;
    }
  }
  // At z = 8 the gap to m + 1 is below double resolution of u_m itself, so
  // the cancellation-free gap is checked instead.
  const double gap = u_upper_gap(Quantile::finite(8.0));
  CHECK(gap > 0.0);
  CHECK(gap < 1e-6);
  CHECK(u_m(4, Quantile::finite(8.0)) - 5.0 <= 0.0);
  CHECK(u_m(4, Quantile::finite(8.0)) - 5.0 > -1e-6);
  for (double z = -3.0; z <= 3.0; z += 0.5)
    CHECK(std::abs(u_upper_gap(Quantile::finite(z)) - (3.0 - u_m(2, Quantile::finite(z)))) < 1e-13);
}

TEST_CASE("stage time solves the root identity") {
  CHECK(stage_time(37.0, 0.0, 2.0) == doctest::Approx(18.5).epsilon(1e-14));
  CHECK(std::abs(stage_time(100, 2, 1) - 81.9002) < 1e-4);
  CHECK(std::abs(stage_time(100, -2, 1) - 122.0998) < 1e-4);
  for (double x : {1.0, 10.0, 100.0, 1e4})
    for (int z = -3; z <= 3; ++z)
      for (double mu : {0.2, 1.0, 2.0}) {
        const double t = stage_time(x, z, mu);
        CHECK(std::abs((x - mu * t) / std::sqrt(t) - z) < 1e-8);
      }
  CHECK_THROWS_AS(stage_time(0.0, 0.0, 1.0), DomainError);
  CHECK_THROWS_AS(stage_time(1.0, 0.0, 0.0), DomainError);
}

TEST_CASE("stage size is the ceiling") {
  CHECK(stage_size(100, 2, 1) == 82);
  CHECK(stage_size(0.5, 0, 1) == 1);
  CHECK(stage_size(100, -2, 1) == 123);
  CHECK_THROWS_AS(stage_size(-1.0, 0.0, 1.0), DomainError);
}

TEST_CASE("critical functions") {
  CHECK(critical_h(0, 7.3) == 7.3);
  CHECK(critical_h(1, 16.0) == doctest::Approx(4.0).epsilon(1e-14));
  CHECK(std::abs(critical_h(2, 16.0) - std::pow(16.0, 0.25) * std::pow(std::log(16.0), 0.25)) < 1e-12);
  CHECK(std::abs(critical_h(2, 16.0) - 2.5808) < 1e-4);
  CHECK_THROWS_AS(critical_h(1, 1.0), DomainError);
  CHECK_THROWS_AS(critical_h(1, 0.5), DomainError);
  for (double x : {20.0, 50.0, 1e3, 1e6})
    for (int m = 1; m <= 8; ++m) CHECK(critical_h(m, x) < critical_h(m - 1, x));
}

TEST_CASE("kappa") {
  CHECK(kappa(1, 0.3) == doctest::Approx(std::pow(0.3, -1.5)).epsilon(1e-14));
  CHECK(std::abs(kappa(2, 1.0) - std::pow(0.5, 0.25)) < 1e-12);
  CHECK(std::abs(kappa(1, 0.204131) - 10.843) < 0.01);
  // m = 3 by hand: mu^(-15/8) (1/2 - 1/4)^(1/4) (1 - 1/4)^(1/8).
  const double k3 = std::pow(0.7, -2.0 + 0.125) * std::pow(0.25, 0.25) * std::pow(0.75, 0.125);
  CHECK(std::abs(kappa(3, 0.7) - k3) < 1e-12);
  CHECK_THROWS_AS(kappa(1, 0.0), DomainError);
  CHECK_THROWS_AS(kappa(0, 1.0), DomainError);
}

TEST_CASE("f and its inverse") {
  CHECK(std::abs(f_map(1, 1) - 4.0 * std::sqrt(std::log(2.0))) < 1e-12);
  CHECK(std::abs(f_map(1, 1) - 3.3302) < 1e-4);
  for (double x : {0.1, 1.0, 10.0, 1e4})
    for (double mu : {0.2, 1.0}) CHECK(std::abs(f_inverse(f_map(x, mu), mu) - x) / x < 1e-10);
  double prev = f_map(1e-3, 1.0);
  for (double x = 2e-3; x < 1e6; x *= 1.5) {
    const double cur = f_map(x, 1.0);
    CHECK(cur > prev);
    prev = cur;
  }
  CHECK_THROWS_AS(f_map(0.0, 1.0), DomainError);
  CHECK_THROWS_AS(f_inverse(-1.0, 1.0), DomainError);
}

TEST_CASE("quantile tagging") {
  CHECK(Quantile::neg_inf().is_neg_inf());
  CHECK_THROWS_AS(Quantile::neg_inf().value(), DomainError);
  CHECK_THROWS_AS(Quantile::finite(INFINITY), DomainError);
  CHECK(Quantile::finite(1.5).value() == 1.5);
}
