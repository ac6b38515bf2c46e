#ifndef JACKSON_ENSEMBLE_HPP
#define JACKSON_ENSEMBLE_HPP

#include "jackson/dists.hpp"
#include "jackson/netmodel.hpp"

#include <vector>

namespace jackson {

/// Product of tilted free marginals: Geometric(gamma r_j) or
/// TruncatedGeometric(gamma r_j, c_j) at single-server nodes,
/// Poisson(gamma r_j) at infinite-server nodes.
struct GrandCanonical {
  double gamma = 0.0;
  std::vector<FreeMarginal> marginals;
  double total_mean = 0.0;  // a
  double total_var = 0.0;   // b^2
};

/// E(sum eta_j) at chemical potential gamma. Throws
/// std::domain_error("outside convergence domain") when gamma r_j >= 1 at
/// an infinite-capacity single-server node.
double mean_total(const NetworkSpec& spec, const Eigen::VectorXd& theta,
                  double gamma);

/// Unique gamma with mean_total(gamma) = M, residual <= 1e-10 max(1, M).
/// Throws std::domain_error("no finite gamma") when M equals the total
/// capacity of an all-finite network, std::domain_error("infeasible
/// customer count") when M exceeds it.
double solve_gamma(const NetworkSpec& spec, const Eigen::VectorXd& theta,
                   double customers);

GrandCanonical grand_canonical(const NetworkSpec& spec,
                               const Eigen::VectorXd& theta, double gamma);

/// Distribution table of a sum of independent marginals on {0,...,M},
/// held as relative values with a common log-scale factor.
class SumPmf {
 public:
  SumPmf() = default;
  SumPmf(std::vector<double> rel, double log_scale)
      : rel_(std::move(rel)), log_scale_(log_scale) {}

  long max_value() const { return static_cast<long>(rel_.size()) - 1; }
  double rel(long m) const {
    return (m < 0 || m > max_value()) ? 0.0 : rel_[static_cast<size_t>(m)];
  }
  double log_scale() const { return log_scale_; }
  double value(long m) const;
  double log_value(long m) const;  // -inf where the mass vanishes

 private:
  std::vector<double> rel_;
  double log_scale_ = 0.0;
};

/// Exact convolution of the marginals with every support truncated at M.
/// tail_eps > 0 additionally drops pmf entries below that absolute
/// threshold (used only where a controlled absolute error is acceptable).
SumPmf exact_sum_pmf(const std::vector<FreeMarginal>& marginals, long M,
                     double tail_eps = 0.0);

/// Exact conditioned law of the node occupancies given sum = M, built
/// from prefix/suffix convolution tables. Probabilities are
/// gauge-invariant in gamma.
class CanonicalLaw {
 public:
  CanonicalLaw(const NetworkSpec& spec, const Eigen::VectorXd& theta, long M,
               double gamma);

  long customers() const { return M_; }
  const GrandCanonical& gc() const { return gc_; }

  /// P(xi_0 = n_0, ..., xi_{K-1} = n_{K-1}) for K = prefix.size().
  double joint_prefix_prob(const std::vector<long>& prefix) const;
  double log_joint_prefix_prob(const std::vector<long>& prefix) const;

  double node_marginal(long j, long n) const;
  std::vector<double> node_marginal(long j) const;  // over {0,...,M}

  /// log of the normalizing constant Z of the product-form law with the
  /// theta weights used at construction.
  double log_partition() const;

 private:
  GrandCanonical gc_;
  long M_ = 0;
  std::vector<SumPmf> prefix_;  // prefix_[k]: law of eta_0 + ... + eta_{k-1}
  std::vector<SumPmf> suffix_;  // suffix_[k]: law of eta_k + ... + eta_{N-1}
};

struct PartitionEstimate {
  double log_exact = 0.0;   // via convolution DP
  double log_approx = 0.0;  // via the Gaussian local approximation
};

PartitionEstimate partition_function(const NetworkSpec& spec,
                                     const Eigen::VectorXd& theta, long M,
                                     double gamma);

struct LltReport {
  double a = 0.0;
  double b = 0.0;
  struct Entry {
    long k;
    double exact;
    double gaussian;
    double deviation;  // |b sqrt(2 pi) exact - exp(-(k-a)^2 / (2 b^2))|
  };
  std::vector<Entry> entries;
  double sup_deviation = 0.0;
};

LltReport llt_report(const GrandCanonical& gc, long k_min, long k_max,
                     double tail_eps = 0.0);

struct ConditionReport {
  double max_single_server_load = 0.0;  // max gamma r_j over single-server nodes
  bool capacities_bounded = false;
  long max_capacity = -1;
  double b = 0.0;
  // b^{-1} sum of gamma r_j over infinite-server nodes among the first K
  double prefix_infinite_server_term = 0.0;
  bool prefix_term_flagged = false;     // term not small: condensation signal
  bool near_critical = false;           // load within 5% of 1 somewhere
};

ConditionReport condition_diagnostics(const NetworkSpec& spec,
                                      const Eigen::VectorXd& theta,
                                      double gamma, long K);

/// Eq.-(equivalence) ratio: canonical prefix probability over the product
/// of free-marginal probabilities.
double equivalence_ratio(const CanonicalLaw& law,
                         const std::vector<long>& prefix);

/// Total variation between the canonical marginal of a node and its free
/// marginal (free mass above M included).
double marginal_total_variation(const CanonicalLaw& law, long node);

}  // namespace jackson

#endif
