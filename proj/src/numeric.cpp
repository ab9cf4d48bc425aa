#include "seqstage/numeric.hpp"

#include <cmath>
#include <limits>

#include "seqstage/error.hpp"

namespace seqstage {

namespace {

constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;

// Above this point the hazard and psi+ switch to the continued fraction.
constexpr double kTailSwitch = 8.0;
constexpr double kHazardLow = -40.0;

// Mills ratio R(z) = (1 - Phi(z)) / phi(z) by backward evaluation of
// R = 1 / (z + 1 / (z + 2 / (z + 3 / (z + ...)))). Intended for z >= 8.
double mills_ratio_cf(double z) noexcept {
  double t = z;
  for (int k = 200; k >= 1; --k) t = z + k / t;
  return 1.0 / t;
}

double mills_ratio(double z) noexcept {
  if (z >= kTailSwitch) return mills_ratio_cf(z);
  return std_normal_upper(z) / std_normal_pdf(z);
}

}  // namespace

Quantile Quantile::finite(double z) {
  if (!std::isfinite(z)) throw DomainError("Quantile::finite: value must be finite");
  return Quantile(false, z);
}

double Quantile::value() const {
  if (neg_inf_) throw DomainError("Quantile::value: quantile is -inf");
  return z_;
}

double std_normal_pdf(double z) noexcept { return kInvSqrt2Pi * std::exp(-0.5 * z * z); }

double std_normal_cdf(double z) noexcept { return 0.5 * std::erfc(-z * kInvSqrt2); }

double std_normal_upper(double z) noexcept { return 0.5 * std::erfc(z * kInvSqrt2); }

double psi_plus(double z) noexcept {
  if (z >= kTailSwitch) return std_normal_pdf(z) * (1.0 - z * mills_ratio_cf(z));
  return std_normal_pdf(z) - z * std_normal_upper(z);
}

double mills_hazard(double z) noexcept {
  if (z >= kTailSwitch) return 1.0 / mills_ratio_cf(z);
  const double upper = std_normal_upper(z);
  return std_normal_pdf(z) / upper;
}

double mills_hazard(Quantile z) noexcept {
  if (z.is_neg_inf()) return 0.0;
  return mills_hazard(z.value());
}

Quantile inverse_mills_hazard(double target) {
  if (!(target >= 0.0) || !std::isfinite(target))
    throw DomainError("inverse_mills_hazard: target must be finite and >= 0");
  if (target <= mills_hazard(kHazardLow)) return Quantile::neg_inf();

  // hazard(z) > z for every z, so hazard(target) > target brackets from above.
  double lo = kHazardLow;
  double hi = std::max(40.0, target);
  for (int it = 0; it < 400 && hi - lo > 4.0 * std::numeric_limits<double>::epsilon() *
                                              std::max(1.0, std::abs(lo) + std::abs(hi));
       ++it) {
    const double mid = 0.5 * (lo + hi);
    if (mills_hazard(mid) < target)
      lo = mid;
    else
      hi = mid;
  }
  double z = 0.5 * (lo + hi);
  // d/dz hazard = hazard * (hazard - z) > 0.
  for (int it = 0; it < 4; ++it) {
    const double h = mills_hazard(z);
    const double slope = h * (h - z);
    if (!(slope > 0.0)) break;
    const double next = z - (h - target) / slope;
    if (!std::isfinite(next) ||
        std::abs(mills_hazard(next) - target) >= std::abs(h - target))
      break;
    z = next;
  }
  return Quantile::finite(z);
}

double u_m(int m, Quantile z) {
  if (m < 1) throw DomainError("u_m: m must be >= 1");
  if (z.is_neg_inf()) return static_cast<double>(m);
  const double v = z.value();
  return m + std_normal_cdf(v) + psi_plus(v) * mills_hazard(v);
}

double u_upper_gap(Quantile z) {
  if (z.is_neg_inf()) return 1.0;
  const double v = z.value();
  if (v < 0.0) return std_normal_upper(v) - psi_plus(v) * mills_hazard(v);
  // With R the Mills ratio: gap = phi * (R^2 + z R - 1) / R.
  const double r = mills_ratio(v);
  return std_normal_pdf(v) * (r * r + v * r - 1.0) / r;
}

double stage_time(double x, double z, double mu) {
  if (!(x > 0.0) || !std::isfinite(x)) throw DomainError("stage_time: x must be > 0");
  if (!(mu > 0.0) || !std::isfinite(mu)) throw DomainError("stage_time: mu must be > 0");
  if (!std::isfinite(z)) throw DomainError("stage_time: z must be finite");
  // sqrt(t) is the positive root of mu s^2 + z s - x = 0.
  const double disc = std::sqrt(z * z + 4.0 * mu * x);
  const double s = z >= 0.0 ? 2.0 * x / (disc + z) : (disc - z) / (2.0 * mu);
  return s * s;
}

std::int64_t stage_size(double x, double z, double mu) {
  const double t = stage_time(x, z, mu);
  if (t > 9.0e15) throw DomainError("stage_size: stage size overflows");
  const auto n = static_cast<std::int64_t>(std::ceil(t));
  return n < 1 ? 1 : n;
}

double critical_h(int m, double x) {
  if (m < 0) throw DomainError("critical_h: m must be >= 0");
  if (!(x > 1.0) || !std::isfinite(x)) throw DomainError("critical_h: x must be > 1");
  if (m == 0) return x;
  const double e = std::ldexp(1.0, -m);
  return std::pow(x, e) * std::pow(std::log(x), 0.5 - e);
}

double kappa(int m, double mu) {
  if (m < 1) throw DomainError("kappa: m must be >= 1");
  if (!(mu > 0.0) || !std::isfinite(mu)) throw DomainError("kappa: mu must be > 0");
  double prod = 1.0;
  const double tail = std::ldexp(1.0, -(m - 1));
  for (int i = 1; i <= m - 1; ++i) {
    const double base = std::ldexp(1.0, -(m - 1 - i)) - tail;
    prod *= std::pow(base, std::ldexp(1.0, -(i + 1)));
  }
  return std::pow(mu, -2.0 + std::ldexp(1.0, -m)) * prod;
}

double f_map(double x, double mu) {
  if (!(x > 0.0) || !std::isfinite(x)) throw DomainError("f_map: x must be > 0");
  if (!(mu > 0.0)) throw DomainError("f_map: mu must be > 0");
  return 4.0 / std::sqrt(mu) * std::sqrt(x * std::log1p(x));
}

double f_inverse(double y, double mu) {
  if (!(y > 0.0) || !std::isfinite(y)) throw DomainError("f_inverse: y must be > 0");
  if (!(mu > 0.0)) throw DomainError("f_inverse: mu must be > 0");
  double lo = 1.0;
  double hi = 1.0;
  if (f_map(1.0, mu) < y) {
    while (f_map(hi, mu) < y) hi *= 2.0;
    lo = hi / 2.0;
  } else {
    while (f_map(lo, mu) >= y) lo /= 2.0;
    hi = lo * 2.0;
  }
  while (hi - lo > 2.0 * std::numeric_limits<double>::epsilon() * hi) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    if (f_map(mid, mu) < y)
      lo = mid;
    else
      hi = mid;
  }
  double x = 0.5 * (lo + hi);
  const double scale = 4.0 / std::sqrt(mu);
  for (int it = 0; it < 3; ++it) {
    const double g = x * std::log1p(x);
    const double slope = scale * (std::log1p(x) + x / (1.0 + x)) / (2.0 * std::sqrt(g));
    const double next = x - (f_map(x, mu) - y) / slope;
    if (!(next > 0.0) || std::abs(f_map(next, mu) - y) >= std::abs(f_map(x, mu) - y)) break;
    x = next;
  }
  return x;
}

}  // namespace seqstage
