#ifndef JACKSON_DISTS_HPP
#define JACKSON_DISTS_HPP

#include <variant>
#include <vector>
#include <cstdint>

namespace jackson {

/// Geometric on {0,1,...} with P(X=k) = (1-rho) rho^k, rho in [0,1).
struct Geometric {
  double rho;
};

/// Geometric restricted to {0,...,cap}: P(X=k) = rho^k / sum_h rho^h.
/// Any rho > 0 is admissible (rho = 1 gives the uniform law).
struct TruncatedGeometric {
  double rho;
  long cap;
};

/// Poisson with mean lambda >= 0 (lambda = 0 is the point mass at 0).
struct Poisson {
  double lambda;
};

using FreeMarginal = std::variant<Geometric, TruncatedGeometric, Poisson>;

struct MomentSummary {
  double mean = 0.0;
  double variance = 0.0;
  // E|X - m|^3 for bounded-support laws; for Geometric and Poisson this
  // field holds the bound E(X^3), which dominates the centered moment.
  double third_central_abs = 0.0;
  double gnedenko_s = 0.0;
};

double pmf(const FreeMarginal& d, long k);
MomentSummary moments(const FreeMarginal& d);

/// Particles-holes reflection: the law of cap - X under {1/rho, cap}.
TruncatedGeometric duality_reflect(const TruncatedGeometric& d);

/// s = sum_l p_{2l} p_{2l+1} / (p_{2l} + p_{2l+1}), with 0/0 := 0.
/// `probs[k]` is the mass at integer `offset + k`.
double gnedenko_s(const std::vector<double>& probs, long offset = 0);
double gnedenko_s(const FreeMarginal& d);

/// |E exp(itX)|. Closed form for Geometric and Poisson, direct complex
/// sum for TruncatedGeometric.
double char_modulus(const FreeMarginal& d, double t);

/// b^-3 * sum_j E|X_j - m_j|^3 (third moments as in MomentSummary).
/// Throws std::domain_error("degenerate family") when the total variance
/// vanishes.
double lyapunov_ratio(const std::vector<FreeMarginal>& marginals);

/// Largest k <= cap with pmf(d, k) >= tail_eps; at least 0. With
/// tail_eps = 0 this is the support bound itself (capped at `cap`).
long support_upper(const FreeMarginal& d, long cap, double tail_eps = 0.0);

}  // namespace jackson

#endif
