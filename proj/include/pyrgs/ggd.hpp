#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "pyrgs/core.hpp"

namespace pyrgs {

// Generalized Gaussian: p(x) = beta / (2 alpha Gamma(1/beta)) exp(-(|x-mu|/alpha)^beta).
// beta = 1 is Laplace with scale alpha, beta = 2 is normal with sigma = alpha/sqrt(2).
struct GgdParams {
  double mu = 0.0;
  double alpha = 1.0;
  double beta = 2.0;
};

inline void validate_params(const GgdParams& p) {
  if (!std::isfinite(p.mu) || !std::isfinite(p.alpha) || !std::isfinite(p.beta) || p.alpha <= 0.0 ||
      p.beta <= 0.0)
    throw Error(Errc::invalid_argument, "GGD parameters require finite mu, alpha > 0, beta > 0");
}

namespace detail {

// Lanczos approximation (g = 7, 9 coefficients) with reflection for z < 0.5.
// Kept in-house so coder frequency tables derived from these values are
// bit-identical everywhere.
inline double lgamma_det(double z) {
  static const double kCoef[9] = {
      0.99999999999980993,      676.5203681218851,     -1259.1392167224028,
      771.32342877765313,       -176.61502916214059,   12.507343278686905,
      -0.13857109526572012,     9.9843695780195716e-6, 1.5056327351493116e-7};
  if (z < 0.5) {
    // log Gamma(z) = log(pi / sin(pi z)) - log Gamma(1 - z)
    return std::log(M_PI / std::sin(M_PI * z)) - lgamma_det(1.0 - z);
  }
  z -= 1.0;
  double x = kCoef[0];
  for (int i = 1; i < 9; ++i) x += kCoef[i] / (z + static_cast<double>(i));
  const double t = z + 7.5;
  return 0.5 * std::log(2.0 * M_PI) + (z + 0.5) * std::log(t) - t + std::log(x);
}

inline double gamma_det(double z) { return std::exp(lgamma_det(z)); }

constexpr int kGammaMaxIter = 300;
constexpr double kGammaTol = 1e-14;

// Regularized lower incomplete gamma P(a, x); series for x < a + 1,
// Lentz continued fraction for the complement otherwise.
inline double lower_gamma_regularized(double a, double x) {
  if (x <= 0.0) return 0.0;
  if (x >= 1e300) return 1.0;  // far tail; continued fraction would hit inf arithmetic
  const double log_prefix = a * std::log(x) - x - lgamma_det(a);
  if (x < a + 1.0) {
    double term = 1.0 / a;
    double sum = term;
    for (int n = 1; n <= kGammaMaxIter; ++n) {
      term *= x / (a + static_cast<double>(n));
      sum += term;
      if (std::abs(term) < std::abs(sum) * kGammaTol) break;
    }
    return std::min(1.0, std::max(0.0, sum * std::exp(log_prefix)));
  }
  // Q(a, x) via modified Lentz on the standard continued fraction.
  const double tiny = 1e-300;
  double b = x + 1.0 - a;
  double c = 1.0 / tiny;
  double d = 1.0 / b;
  double h = d;
  for (int i = 1; i <= kGammaMaxIter; ++i) {
    const double an = -static_cast<double>(i) * (static_cast<double>(i) - a);
    b += 2.0;
    d = an * d + b;
    if (std::abs(d) < tiny) d = tiny;
    c = b + an / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double delta = d * c;
    h *= delta;
    if (std::abs(delta - 1.0) < kGammaTol) break;
  }
  const double q = std::exp(log_prefix) * h;
  return std::min(1.0, std::max(0.0, 1.0 - q));
}

}  // namespace detail

inline double pdf(double x, const GgdParams& p) {
  validate_params(p);
  const double t = std::abs(x - p.mu) / p.alpha;
  const double norm = p.beta / (2.0 * p.alpha * detail::gamma_det(1.0 / p.beta));
  return norm * std::exp(-std::pow(t, p.beta));
}

inline double cdf(double x, const GgdParams& p) {
  validate_params(p);
  const double d = x - p.mu;
  if (d == 0.0) return 0.5;
  const double t = std::pow(std::abs(d) / p.alpha, p.beta);
  const double tail = detail::lower_gamma_regularized(1.0 / p.beta, t);
  return d > 0.0 ? 0.5 + 0.5 * tail : 0.5 - 0.5 * tail;
}

// Probability floor keeps every quantization bin codable with 16-bit
// frequencies.
constexpr double kProbFloor = 0x1p-16;

inline double bin_probability(double fhat, double q, const GgdParams& p) {
  if (!(q > 0.0)) throw Error(Errc::invalid_argument, "quantization step must be positive");
  const double mass = cdf(fhat + 0.5 * q, p) - cdf(fhat - 0.5 * q, p);
  return std::max(mass, kProbFloor);
}

// MLE of the scale for fixed location and shape:
// alpha = ((beta/N) sum |x - mu|^beta)^(1/beta).
inline double fit_scale(std::span<const double> values, double mu, double beta) {
  if (values.size() < 2)
    throw Error(Errc::degenerate_channel, "scale fit needs at least 2 values");
  double acc = 0.0;
  for (double v : values) acc += std::pow(std::abs(v - mu), beta);
  if (acc == 0.0)
    throw Error(Errc::degenerate_channel, "scale fit degenerate: all values equal the location");
  return std::pow(beta * acc / static_cast<double>(values.size()), 1.0 / beta);
}

// Location MLE per shape: lower median for beta = 1, mean for beta = 2.
inline double fit_location(std::span<const double> values, double beta) {
  if (values.empty()) throw Error(Errc::empty_input, "location fit needs at least 1 value");
  if (beta == 1.0) {
    std::vector<double> tmp(values.begin(), values.end());
    const std::size_t k = (tmp.size() - 1) / 2;
    std::nth_element(tmp.begin(), tmp.begin() + static_cast<std::ptrdiff_t>(k), tmp.end());
    return tmp[k];
  }
  if (beta == 2.0) {
    double s = 0.0;
    for (double v : values) s += v;
    return s / static_cast<double>(values.size());
  }
  throw Error(Errc::invalid_argument, "location fit defined for beta in {1, 2}");
}

// Total code length estimate in bits for values already on the s*q grid.
inline double rate_bits(std::span<const double> values, double q, const GgdParams& p) {
  double bits = 0.0;
  for (double v : values) bits -= std::log2(bin_probability(v, q, p));
  return bits;
}

}  // namespace pyrgs
