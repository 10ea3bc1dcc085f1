#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Dense>

/// Numeric building blocks shared by all modules: stable normal CDF/quantile,
/// portable random variates, forward-mode dual numbers, quadrature rules.
namespace lcmvp::math {

inline constexpr double kSqrt2 = 1.4142135623730950488;
inline constexpr double kInvSqrt2 = 0.70710678118654752440;
inline constexpr double kLogSqrt2Pi = 0.91893853320467274178;
inline constexpr double kSqrtPi = 1.7724538509055160273;

/// Scaled complementary error function exp(x^2)*erfc(x) for x >= 0.
/// Direct product below 6, Laplace continued fraction above (the direct
/// product would overflow/underflow past x ~ 26).
double erfcx(double x);

inline double norm_pdf(double x) { return std::exp(-0.5 * x * x - kLogSqrt2Pi); }
inline double norm_logpdf(double x) { return -0.5 * x * x - kLogSqrt2Pi; }

inline double phi(double x) { return 0.5 * std::erfc(-x * kInvSqrt2); }

/// log Phi(x), accurate into the deep lower tail (no underflow until
/// the quadratic term itself is -inf).
inline double log_phi(double x) {
  if (x > -1.0) return std::log(phi(x));
  const double y = -x * kInvSqrt2;
  return -0.6931471805599453094 - y * y + std::log(erfcx(y));
}

/// phi(x)/Phi(x) (lower) and phi(x)/(1-Phi(x)) (upper), stable in both tails.
inline double inv_mills_lower(double x) { return std::exp(norm_logpdf(x) - log_phi(x)); }
inline double inv_mills_upper(double x) { return std::exp(norm_logpdf(x) - log_phi(-x)); }

/// Normal quantile (Wichura's PPND16 rational approximation, rel. err ~1e-15).
/// Returns -inf/+inf at p = 0/1; NaN outside [0,1].
double inv_phi(double p);

inline double sigmoid(double x) {
  return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}
inline double logit(double p) { return std::log(p) - std::log1p(-p); }

/// log(1 + exp(x)) without overflow.
inline double log1p_exp(double x) {
  return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

inline double logsumexp2(double a, double b) {
  if (a == -std::numeric_limits<double>::infinity()) return b;
  if (b == -std::numeric_limits<double>::infinity()) return a;
  const double hi = a > b ? a : b;
  return hi + std::log(std::exp(a - hi) + std::exp(b - hi));
}

double logsumexp(const double* v, int n);

// ---------------------------------------------------------------------------
// Forward-mode dual numbers (single tangent). Used for the correlation
// construction derivative sweeps; only the operations that construction
// needs are provided.
struct Dual {
  double v{0.0};
  double d{0.0};
  Dual() = default;
  Dual(double value) : v(value) {}  // NOLINT: implicit constants
  Dual(double value, double deriv) : v(value), d(deriv) {}

  Dual& operator+=(const Dual& o) { v += o.v; d += o.d; return *this; }
  Dual& operator-=(const Dual& o) { v -= o.v; d -= o.d; return *this; }
  Dual& operator*=(const Dual& o) { d = d * o.v + v * o.d; v *= o.v; return *this; }
  Dual& operator/=(const Dual& o) { d = (d - v / o.v * o.d) / o.v; v /= o.v; return *this; }
};
inline Dual operator+(Dual a, const Dual& b) { return a += b; }
inline Dual operator-(Dual a, const Dual& b) { return a -= b; }
inline Dual operator*(Dual a, const Dual& b) { return a *= b; }
inline Dual operator/(Dual a, const Dual& b) { return a /= b; }
inline Dual operator-(const Dual& a) { return {-a.v, -a.d}; }
inline Dual sqrt(const Dual& a) {
  const double r = std::sqrt(a.v);
  return {r, r > 0.0 ? 0.5 * a.d / r : 0.0};
}
inline Dual log(const Dual& a) { return {std::log(a.v), a.d / a.v}; }
inline Dual exp(const Dual& a) { const double e = std::exp(a.v); return {e, e * a.d}; }
inline Dual log1p(const Dual& a) { return {std::log1p(a.v), a.d / (1.0 + a.v)}; }
inline Dual sigmoid(const Dual& a) {
  const double s = sigmoid(a.v);
  return {s, s * (1.0 - s) * a.d};
}

// ---------------------------------------------------------------------------
// Seed mixing
inline uint64_t splitmix64(uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}
uint64_t fnv1a64(std::string_view s);

/// Deterministic, platform-portable variate source. The engine sequence is
/// fixed by the C++ standard; every distribution here is project code
/// (inverse CDF / Marsaglia-Tsang) so streams are bit-stable everywhere.
class Rng {
 public:
  explicit Rng(uint64_t seed) : eng_(seed) {}
  uint64_t next_u64() { return eng_(); }
  /// Strictly inside (0,1).
  double uniform() { return (static_cast<double>(eng_() >> 11) + 0.5) * 0x1.0p-53; }
  double normal() { return inv_phi(uniform()); }
  double gamma(double shape, double scale = 1.0);
  double beta(double a, double b);
  double weibull(double shape, double scale) {
    return scale * std::pow(-std::log1p(-uniform()), 1.0 / shape);
  }

 private:
  std::mt19937_64 eng_;
};

// ---------------------------------------------------------------------------
struct Welford {
  long n{0};
  double mean{0.0};
  double m2{0.0};
  void add(double x) {
    ++n;
    const double dx = x - mean;
    mean += dx / static_cast<double>(n);
    m2 += dx * (x - mean);
  }
  double variance() const { return n > 1 ? m2 / static_cast<double>(n - 1) : 0.0; }
};

/// Gauss-Hermite rule for integrals against exp(-x^2) (Golub-Welsch).
std::pair<Eigen::VectorXd, Eigen::VectorXd> gauss_hermite(int n);
/// Gauss-Legendre rule mapped to (0,1).
std::pair<Eigen::VectorXd, Eigen::VectorXd> gauss_legendre01(int n);

/// All file output uses 6 significant digits.
std::string fmt_g6(double x);

/// Quote a CSV field if it contains a comma or quote (RFC 4180 style).
std::string csv_escape(const std::string& field);
/// Split one CSV line into fields, honoring double-quoted fields.
std::vector<std::string> csv_split(const std::string& line);

}  // namespace lcmvp::math
