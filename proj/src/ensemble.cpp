#include "jackson/ensemble.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace jackson {

namespace {

constexpr double kTwoPi = 6.283185307179586476925;

std::vector<FreeMarginal> build_marginals(const NetworkSpec& spec,
                                          const Eigen::VectorXd& theta,
                                          double gamma) {
  if (gamma < 0.0) throw std::domain_error("gamma must be nonnegative");
  const long n = spec.size();
  std::vector<FreeMarginal> out;
  out.reserve(static_cast<size_t>(n));
  for (long j = 0; j < n; ++j) {
    const NodeSpec& node = spec.nodes[static_cast<size_t>(j)];
    const double rho = gamma * theta(j) / node.service_rate;
    if (node.kind == NodeKind::InfiniteServer) {
      out.emplace_back(Poisson{rho});
    } else if (node.finite_capacity()) {
      out.emplace_back(TruncatedGeometric{rho, *node.capacity});
    } else {
      if (rho >= 1.0) throw std::domain_error("outside convergence domain");
      out.emplace_back(Geometric{rho});
    }
  }
  return out;
}

// log of Z_j(gamma) expressed through rho = gamma r_j.
double log_node_normalizer(const FreeMarginal& d) {
  if (const auto* g = std::get_if<Geometric>(&d)) return -std::log1p(-g->rho);
  if (const auto* p = std::get_if<Poisson>(&d)) return p->lambda;
  const auto& t = std::get<TruncatedGeometric>(d);
  if (t.rho <= 1.0) {
    double z = 0.0, p = 1.0;
    for (long h = 0; h <= t.cap; ++h) {
      z += p;
      p *= t.rho;
    }
    return std::log(z);
  }
  // sum rho^h = rho^c * sum rho^{-h}
  double z = 0.0, p = 1.0;
  const double inv = 1.0 / t.rho;
  for (long h = 0; h <= t.cap; ++h) {
    z += p;
    p *= inv;
  }
  return static_cast<double>(t.cap) * std::log(t.rho) + std::log(z);
}

}  // namespace

double mean_total(const NetworkSpec& spec, const Eigen::VectorXd& theta,
                  double gamma) {
  double a = 0.0;
  for (const FreeMarginal& d : build_marginals(spec, theta, gamma))
    a += moments(d).mean;
  return a;
}

GrandCanonical grand_canonical(const NetworkSpec& spec,
                               const Eigen::VectorXd& theta, double gamma) {
  GrandCanonical gc;
  gc.gamma = gamma;
  gc.marginals = build_marginals(spec, theta, gamma);
  for (const FreeMarginal& d : gc.marginals) {
    const MomentSummary m = moments(d);
    gc.total_mean += m.mean;
    gc.total_var += m.variance;
  }
  return gc;
}

double solve_gamma(const NetworkSpec& spec, const Eigen::VectorXd& theta,
                   double customers) {
  if (customers < 0.0) throw std::domain_error("negative customer count");
  if (customers == 0.0) return 0.0;

  bool has_unbounded_geometric = false;  // infinite-capacity single-server
  bool has_infinite_server = false;
  double total_cap = 0.0;
  double max_unbounded_r = 0.0;
  for (long j = 0; j < spec.size(); ++j) {
    const NodeSpec& node = spec.nodes[static_cast<size_t>(j)];
    const double r = theta(j) / node.service_rate;
    if (node.kind == NodeKind::InfiniteServer) {
      has_infinite_server = true;
    } else if (!node.finite_capacity()) {
      has_unbounded_geometric = true;
      max_unbounded_r = std::max(max_unbounded_r, r);
    } else {
      total_cap += static_cast<double>(*node.capacity);
    }
  }
  if (!has_unbounded_geometric && !has_infinite_server) {
    if (customers > total_cap)
      throw std::domain_error("infeasible customer count");
    if (customers == total_cap) throw std::domain_error("no finite gamma");
  }

  double lo = 0.0, hi;
  if (has_unbounded_geometric) {
    hi = (1.0 - 1e-12) / max_unbounded_r;
  } else {
    hi = 1.0;
    while (mean_total(spec, theta, hi) < customers) {
      hi *= 2.0;
      if (!std::isfinite(hi))
        throw std::domain_error("infeasible customer count");
    }
  }

  for (int it = 0; it < 200 && hi - lo > 1e-14 * hi; ++it) {
    const double mid = 0.5 * (lo + hi);
    (mean_total(spec, theta, mid) < customers ? lo : hi) = mid;
  }
  double gamma = 0.5 * (lo + hi);

  // One Newton polish: d mean / d gamma = var / gamma.
  const GrandCanonical gc = grand_canonical(spec, theta, gamma);
  if (gc.total_var > 0.0 && gamma > 0.0) {
    const double step = (gc.total_mean - customers) * gamma / gc.total_var;
    const double polished = gamma - step;
    if (polished > lo && polished < hi &&
        std::abs(mean_total(spec, theta, polished) - customers) <
            std::abs(gc.total_mean - customers))
      gamma = polished;
  }
  return gamma;
}

double SumPmf::value(long m) const {
  const double r = rel(m);
  return r == 0.0 ? 0.0 : r * std::exp(log_scale_);
}

double SumPmf::log_value(long m) const {
  const double r = rel(m);
  if (r == 0.0) return -std::numeric_limits<double>::infinity();
  return std::log(r) + log_scale_;
}

SumPmf exact_sum_pmf(const std::vector<FreeMarginal>& marginals, long M,
                     double tail_eps) {
  if (marginals.empty()) throw std::invalid_argument("empty marginal list");
  if (M < 0) throw std::invalid_argument("negative total");
  std::vector<double> acc(static_cast<size_t>(M) + 1, 0.0);
  acc[0] = 1.0;
  double log_scale = 0.0;
  std::vector<double> next(acc.size());
  std::vector<double> p;
  for (const FreeMarginal& d : marginals) {
    const long s = support_upper(d, M, tail_eps);
    p.resize(static_cast<size_t>(s) + 1);
    for (long h = 0; h <= s; ++h) p[static_cast<size_t>(h)] = pmf(d, h);
    std::fill(next.begin(), next.end(), 0.0);
    for (long m = 0; m <= M; ++m) {
      double v = 0.0;
      const long hmax = std::min(m, s);
      for (long h = 0; h <= hmax; ++h)
        v += p[static_cast<size_t>(h)] * acc[static_cast<size_t>(m - h)];
      next[static_cast<size_t>(m)] = v;
    }
    acc.swap(next);
    const double mx = *std::max_element(acc.begin(), acc.end());
    if (mx <= 0.0) break;  // unreachable mass beyond this point
    for (double& v : acc) v /= mx;
    log_scale += std::log(mx);
  }
  return SumPmf(std::move(acc), log_scale);
}

CanonicalLaw::CanonicalLaw(const NetworkSpec& spec,
                           const Eigen::VectorXd& theta, long M, double gamma)
    : gc_(grand_canonical(spec, theta, gamma)), M_(M) {
  if (M < 0) throw std::invalid_argument("negative customer count");
  const long n = spec.size();
  const std::vector<double> delta = [&] {
    std::vector<double> d(static_cast<size_t>(M) + 1, 0.0);
    d[0] = 1.0;
    return d;
  }();
  prefix_.resize(static_cast<size_t>(n) + 1);
  suffix_.resize(static_cast<size_t>(n) + 1);
  prefix_[0] = SumPmf(delta, 0.0);
  suffix_[static_cast<size_t>(n)] = SumPmf(delta, 0.0);

  auto convolve_one = [&](const SumPmf& in, const FreeMarginal& d) {
    const long s = support_upper(d, M, 0.0);
    std::vector<double> p(static_cast<size_t>(s) + 1);
    for (long h = 0; h <= s; ++h) p[static_cast<size_t>(h)] = pmf(d, h);
    std::vector<double> out(static_cast<size_t>(M) + 1, 0.0);
    for (long m = 0; m <= M; ++m) {
      double v = 0.0;
      const long hmax = std::min(m, s);
      for (long h = 0; h <= hmax; ++h)
        v += p[static_cast<size_t>(h)] * in.rel(m - h);
      out[static_cast<size_t>(m)] = v;
    }
    const double mx = *std::max_element(out.begin(), out.end());
    double ls = in.log_scale();
    if (mx > 0.0) {
      for (double& v : out) v /= mx;
      ls += std::log(mx);
    }
    return SumPmf(std::move(out), ls);
  };

  for (long k = 0; k < n; ++k)
    prefix_[static_cast<size_t>(k) + 1] = convolve_one(
        prefix_[static_cast<size_t>(k)], gc_.marginals[static_cast<size_t>(k)]);
  for (long k = n - 1; k >= 0; --k)
    suffix_[static_cast<size_t>(k)] =
        convolve_one(suffix_[static_cast<size_t>(k) + 1],
                     gc_.marginals[static_cast<size_t>(k)]);

  if (suffix_[0].rel(M) <= 0.0)
    throw std::runtime_error("state space empty or unreachable mass");
}

double CanonicalLaw::log_joint_prefix_prob(const std::vector<long>& prefix) const {
  const long K = static_cast<long>(prefix.size());
  if (K > static_cast<long>(gc_.marginals.size()))
    throw std::invalid_argument("prefix longer than the network");
  double lp = 0.0;
  long s = 0;
  for (long j = 0; j < K; ++j) {
    const double p = pmf(gc_.marginals[static_cast<size_t>(j)],
                         prefix[static_cast<size_t>(j)]);
    if (p == 0.0) return -std::numeric_limits<double>::infinity();
    lp += std::log(p);
    s += prefix[static_cast<size_t>(j)];
  }
  if (s > M_) return -std::numeric_limits<double>::infinity();
  return lp + suffix_[static_cast<size_t>(K)].log_value(M_ - s) -
         suffix_[0].log_value(M_);
}

double CanonicalLaw::joint_prefix_prob(const std::vector<long>& prefix) const {
  return std::exp(log_joint_prefix_prob(prefix));
}

double CanonicalLaw::node_marginal(long j, long n) const {
  if (n < 0 || n > M_) return 0.0;
  const double p = pmf(gc_.marginals[static_cast<size_t>(j)], n);
  if (p == 0.0) return 0.0;
  const SumPmf& pre = prefix_[static_cast<size_t>(j)];
  const SumPmf& suf = suffix_[static_cast<size_t>(j) + 1];
  const long m = M_ - n;
  double loo = 0.0;  // leave-one-out mass at m, in relative units
  for (long u = 0; u <= m; ++u) loo += pre.rel(u) * suf.rel(m - u);
  if (loo == 0.0) return 0.0;
  const double log_prob = std::log(p) + std::log(loo) + pre.log_scale() +
                          suf.log_scale() - suffix_[0].log_value(M_);
  return std::exp(log_prob);
}

std::vector<double> CanonicalLaw::node_marginal(long j) const {
  std::vector<double> out(static_cast<size_t>(M_) + 1);
  for (long n = 0; n <= M_; ++n)
    out[static_cast<size_t>(n)] = node_marginal(j, n);
  return out;
}

double CanonicalLaw::log_partition() const {
  if (gc_.gamma <= 0.0)
    throw std::domain_error("partition function requires gamma > 0");
  double lz = -static_cast<double>(M_) * std::log(gc_.gamma);
  for (const FreeMarginal& d : gc_.marginals) lz += log_node_normalizer(d);
  return lz + suffix_[0].log_value(M_);
}

PartitionEstimate partition_function(const NetworkSpec& spec,
                                     const Eigen::VectorXd& theta, long M,
                                     double gamma) {
  PartitionEstimate est;
  est.log_exact = CanonicalLaw(spec, theta, M, gamma).log_partition();

  const double gstar =
      solve_gamma(spec, theta, static_cast<double>(M));
  const GrandCanonical gc = grand_canonical(spec, theta, gstar);
  double lz = -static_cast<double>(M) * std::log(gstar);
  for (const FreeMarginal& d : gc.marginals) lz += log_node_normalizer(d);
  est.log_approx = lz - std::log(std::sqrt(gc.total_var * kTwoPi));
  return est;
}

LltReport llt_report(const GrandCanonical& gc, long k_min, long k_max,
                     double tail_eps) {
  LltReport rep;
  rep.a = gc.total_mean;
  rep.b = std::sqrt(gc.total_var);
  if (!(rep.b > 0.0)) throw std::domain_error("degenerate family");
  const SumPmf table = exact_sum_pmf(gc.marginals, k_max, tail_eps);
  for (long k = std::max<long>(0, k_min); k <= k_max; ++k) {
    LltReport::Entry e;
    e.k = k;
    e.exact = table.value(k);
    const double z = (static_cast<double>(k) - rep.a) / rep.b;
    e.gaussian = std::exp(-0.5 * z * z) / (rep.b * std::sqrt(kTwoPi));
    e.deviation =
        std::abs(rep.b * std::sqrt(kTwoPi) * e.exact - std::exp(-0.5 * z * z));
    rep.sup_deviation = std::max(rep.sup_deviation, e.deviation);
    rep.entries.push_back(e);
  }
  return rep;
}

ConditionReport condition_diagnostics(const NetworkSpec& spec,
                                      const Eigen::VectorXd& theta,
                                      double gamma, long K) {
  ConditionReport rep;
  const GrandCanonical gc = grand_canonical(spec, theta, gamma);
  rep.b = std::sqrt(gc.total_var);
  rep.capacities_bounded = true;
  double prefix_term = 0.0;
  for (long j = 0; j < spec.size(); ++j) {
    const NodeSpec& node = spec.nodes[static_cast<size_t>(j)];
    const double load = gamma * theta(j) / node.service_rate;
    if (node.kind == NodeKind::SingleServer) {
      rep.max_single_server_load = std::max(rep.max_single_server_load, load);
      if (node.finite_capacity())
        rep.max_capacity = std::max(rep.max_capacity, *node.capacity);
      else
        rep.capacities_bounded = false;
    } else if (j < K) {
      prefix_term += load;
    }
  }
  rep.prefix_infinite_server_term = rep.b > 0.0 ? prefix_term / rep.b : 0.0;
  rep.prefix_term_flagged = rep.prefix_infinite_server_term > 1.0;
  rep.near_critical = rep.max_single_server_load > 0.95 &&
                      !rep.capacities_bounded;
  return rep;
}

double equivalence_ratio(const CanonicalLaw& law,
                         const std::vector<long>& prefix) {
  double log_free = 0.0;
  for (size_t j = 0; j < prefix.size(); ++j) {
    const double p = pmf(law.gc().marginals[j], prefix[j]);
    if (p == 0.0) {
      if (law.joint_prefix_prob(prefix) > 0.0)
        throw std::runtime_error("support mismatch");
      return 1.0;  // 0/0: both laws put no mass here
    }
    log_free += std::log(p);
  }
  return std::exp(law.log_joint_prefix_prob(prefix) - log_free);
}

double marginal_total_variation(const CanonicalLaw& law, long node) {
  const FreeMarginal& free = law.gc().marginals[static_cast<size_t>(node)];
  double tv = 0.0, free_mass = 0.0;
  for (long n = 0; n <= law.customers(); ++n) {
    const double f = pmf(free, n);
    free_mass += f;
    tv += std::abs(law.node_marginal(node, n) - f);
  }
  tv += 1.0 - free_mass;  // free mass beyond M, where the canonical law is 0
  return 0.5 * tv;
}

}  // namespace jackson
