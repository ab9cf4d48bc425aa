#pragma once

#include <cstdint>

namespace seqstage {

/// A standard normal quantile on the extended half-line [-inf, inf).
/// Negative infinity is a tagged value rather than a floating sentinel so
/// that limit conventions (u_m(-inf) = m, hazard(-inf) = 0) are exact.
class Quantile {
 public:
  static constexpr Quantile neg_inf() noexcept { return Quantile(true, 0.0); }
  /// Throws DomainError for non-finite input.
  static Quantile finite(double z);

  constexpr bool is_neg_inf() const noexcept { return neg_inf_; }
  /// Throws DomainError when this is neg_inf().
  double value() const;

  friend bool operator==(const Quantile&, const Quantile&) = default;

 private:
  constexpr Quantile(bool neg_inf, double z) noexcept : neg_inf_(neg_inf), z_(z) {}
  bool neg_inf_;
  double z_;
};

double std_normal_pdf(double z) noexcept;

/// Phi(z), computed from erfc so that both tails keep full relative precision.
double std_normal_cdf(double z) noexcept;

/// 1 - Phi(z) without cancellation.
double std_normal_upper(double z) noexcept;

/// Chernoff's psi+(z) = phi(z) - z * Phi(-z) = integral_z^inf Phi(-x) dx.
double psi_plus(double z) noexcept;

/// Hazard phi(z) / (1 - Phi(z)); zero at -inf. For z >= 8 the reciprocal
/// Mills ratio is evaluated by continued fraction.
double mills_hazard(Quantile z) noexcept;
double mills_hazard(double z) noexcept;

/// Solves mills_hazard(z) = target. Zero (or anything below the hazard at
/// z = -40) maps to Quantile::neg_inf().
Quantile inverse_mills_hazard(double target);

/// u_m(z) = m + Phi(z) + psi+(z) * hazard(z), with u_m(-inf) = m.
double u_m(int m, Quantile z);

/// (m + 1) - u_m(z), evaluated without the cancellation of the direct form.
/// Strictly positive for finite z.
double u_upper_gap(Quantile z);

/// Unique t > 0 with (x - mu t) / sqrt(t) = z.
double stage_time(double x, double z, double mu);

/// ceil(stage_time(x, z, mu)), at least 1.
std::int64_t stage_size(double x, double z, double mu);

/// Critical function h_m(x) = x^(2^-m) (log x)^(1/2 - 2^-m); h_0(x) = x.
double critical_h(int m, double x);

/// kappa_m(mu) = mu^(-2 + 2^-m) prod_{i=1}^{m-1} [2^-(m-1-i) - 2^-(m-1)]^(2^-(i+1)).
double kappa(int m, double mu);

/// f(x) = (4 / sqrt(mu)) sqrt(x log(x + 1)).
double f_map(double x, double mu);

/// Inverse of f_map by bracketed bisection with a Newton polish.
double f_inverse(double y, double mu);

}  // namespace seqstage
