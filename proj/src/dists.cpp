#include "jackson/dists.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <stdexcept>

namespace jackson {

namespace {

// Normalizer sum_{h=0}^{c} rho^h, only used for rho <= 1.
double trunc_geom_norm(double rho, long cap) {
  double z = 0.0, p = 1.0;
  for (long h = 0; h <= cap; ++h) {
    z += p;
    p *= rho;
  }
  return z;
}

double poisson_pmf(double lambda, long k) {
  if (k < 0) return 0.0;
  if (lambda == 0.0) return k == 0 ? 1.0 : 0.0;
  return std::exp(static_cast<double>(k) * std::log(lambda) - lambda -
                  std::lgamma(static_cast<double>(k) + 1.0));
}

double trunc_geom_pmf(double rho, long cap, long k) {
  if (k < 0 || k > cap) return 0.0;
  if (rho > 1.0) return trunc_geom_pmf(1.0 / rho, cap, cap - k);
  if (rho == 0.0) return k == 0 ? 1.0 : 0.0;
  return std::pow(rho, static_cast<double>(k)) / trunc_geom_norm(rho, cap);
}

double mean_of(const FreeMarginal& d);

}  // namespace

double pmf(const FreeMarginal& d, long k) {
  return std::visit(
      [k](const auto& v) -> double {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, Geometric>) {
          if (k < 0) return 0.0;
          if (v.rho == 0.0) return k == 0 ? 1.0 : 0.0;
          return (1.0 - v.rho) * std::pow(v.rho, static_cast<double>(k));
        } else if constexpr (std::is_same_v<T, TruncatedGeometric>) {
          return trunc_geom_pmf(v.rho, v.cap, k);
        } else {
          return poisson_pmf(v.lambda, k);
        }
      },
      d);
}

MomentSummary moments(const FreeMarginal& d) {
  MomentSummary s;
  if (const auto* g = std::get_if<Geometric>(&d)) {
    const double rho = g->rho;
    if (rho < 0.0 || rho >= 1.0)
      throw std::domain_error("geometric parameter must lie in [0,1)");
    const double q = 1.0 - rho;
    s.mean = rho / q;
    s.variance = rho / (q * q);
    // E(X^3), dominating E|X-m|^3 for nonnegative X.
    s.third_central_abs = (rho + 4.0 * rho * rho + rho * rho * rho) / (q * q * q);
    s.gnedenko_s = gnedenko_s(d);
    return s;
  }
  if (const auto* p = std::get_if<Poisson>(&d)) {
    const double l = p->lambda;
    if (l < 0.0) throw std::domain_error("poisson parameter must be nonnegative");
    s.mean = l;
    s.variance = l;
    s.third_central_abs = l * l * l + 3.0 * l * l + l;  // E(X^3)
    s.gnedenko_s = gnedenko_s(d);
    return s;
  }
  const auto& t = std::get<TruncatedGeometric>(d);
  if (t.rho < 0.0 || t.cap < 0)
    throw std::domain_error("invalid truncated geometric parameters");
  // Direct finite sums; immune to the rho -> 1 cancellation in the
  // closed forms.
  std::vector<double> probs(static_cast<size_t>(t.cap) + 1);
  double mean = 0.0;
  for (long k = 0; k <= t.cap; ++k) {
    probs[static_cast<size_t>(k)] = trunc_geom_pmf(t.rho, t.cap, k);
    mean += static_cast<double>(k) * probs[static_cast<size_t>(k)];
  }
  double var = 0.0, third = 0.0;
  for (long k = 0; k <= t.cap; ++k) {
    const double dk = static_cast<double>(k) - mean;
    var += dk * dk * probs[static_cast<size_t>(k)];
    third += std::abs(dk * dk * dk) * probs[static_cast<size_t>(k)];
  }
  s.mean = mean;
  s.variance = var;
  s.third_central_abs = third;
  s.gnedenko_s = gnedenko_s(probs, 0);
  return s;
}

TruncatedGeometric duality_reflect(const TruncatedGeometric& d) {
  if (d.rho <= 0.0)
    throw std::domain_error("reflection requires rho > 0");
  return TruncatedGeometric{1.0 / d.rho, d.cap};
}

double gnedenko_s(const std::vector<double>& probs, long offset) {
  auto at = [&](long n) -> double {
    const long idx = n - offset;
    if (idx < 0 || idx >= static_cast<long>(probs.size())) return 0.0;
    return probs[static_cast<size_t>(idx)];
  };
  const long lo = offset, hi = offset + static_cast<long>(probs.size()) - 1;
  double s = 0.0;
  // pair (2l, 2l+1); iterate over all l touching the support
  for (long l = (lo - 1) / 2 - 1; 2 * l <= hi; ++l) {
    const double a = at(2 * l), b = at(2 * l + 1);
    if (a == 0.0 && b == 0.0) continue;
    s += a * b / (a + b);
  }
  return s;
}

double gnedenko_s(const FreeMarginal& d) {
  if (const auto* g = std::get_if<Geometric>(&d)) {
    // Pair term p_{2l} rho/(1+rho) summed over l: rho/(1+rho)^2.
    const double rho = g->rho;
    return rho / ((1.0 + rho) * (1.0 + rho));
  }
  if (const auto* t = std::get_if<TruncatedGeometric>(&d)) {
    std::vector<double> probs(static_cast<size_t>(t->cap) + 1);
    for (long k = 0; k <= t->cap; ++k)
      probs[static_cast<size_t>(k)] = trunc_geom_pmf(t->rho, t->cap, k);
    return gnedenko_s(probs, 0);
  }
  // Unbounded support: sum until the local mass is negligible past the
  // mean. A pointwise cut is robust where a cumulative one stalls on
  // rounding of the partial sums.
  const double m = mean_of(d);
  std::vector<double> probs;
  for (long k = 0;; ++k) {
    const double p = pmf(d, k);
    probs.push_back(p);
    if (static_cast<double>(k) > m && p < 1e-18) break;
    if (k > 100000) break;
  }
  return gnedenko_s(probs, 0);
}

double char_modulus(const FreeMarginal& d, double t) {
  if (const auto* g = std::get_if<Geometric>(&d)) {
    const double rho = g->rho;
    return (1.0 - rho) / std::sqrt(1.0 - 2.0 * rho * std::cos(t) + rho * rho);
  }
  if (const auto* p = std::get_if<Poisson>(&d)) {
    const double sh = std::sin(t / 2.0);
    return std::exp(-2.0 * p->lambda * sh * sh);
  }
  const auto& tg = std::get<TruncatedGeometric>(d);
  std::complex<double> sum(0.0, 0.0);
  for (long k = 0; k <= tg.cap; ++k)
    sum += trunc_geom_pmf(tg.rho, tg.cap, k) *
           std::exp(std::complex<double>(0.0, t * static_cast<double>(k)));
  return std::abs(sum);
}

double lyapunov_ratio(const std::vector<FreeMarginal>& marginals) {
  if (marginals.empty())
    throw std::invalid_argument("empty marginal family");
  double b2 = 0.0, third = 0.0;
  for (const auto& d : marginals) {
    const MomentSummary s = moments(d);
    b2 += s.variance;
    third += s.third_central_abs;
  }
  if (b2 <= 0.0) throw std::domain_error("degenerate family");
  return third / (b2 * std::sqrt(b2));
}

long support_upper(const FreeMarginal& d, long cap, double tail_eps) {
  if (const auto* t = std::get_if<TruncatedGeometric>(&d))
    cap = std::min(cap, t->cap);
  if (tail_eps <= 0.0) return std::max<long>(cap, 0);
  const double m = mean_of(d);
  long last = 0;
  for (long k = 0; k <= cap; ++k) {
    const double p = pmf(d, k);
    if (p >= tail_eps)
      last = k;
    else if (static_cast<double>(k) > m)
      break;
  }
  return last;
}

namespace {
double mean_of(const FreeMarginal& d) {
  if (const auto* g = std::get_if<Geometric>(&d)) return g->rho / (1.0 - g->rho);
  if (const auto* p = std::get_if<Poisson>(&d)) return p->lambda;
  return moments(d).mean;
}
}  // namespace

}  // namespace jackson
