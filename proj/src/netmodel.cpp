#include "jackson/netmodel.hpp"

#include <Eigen/SparseLU>
#include <cmath>
#include <stdexcept>

namespace jackson {

namespace {

// Reachability sweep on the support graph (entries > 0), optionally on
// the transposed graph.
std::vector<char> reachable(const Eigen::MatrixXd& P, bool transpose) {
  const long n = P.rows();
  std::vector<char> seen(static_cast<size_t>(n), 0);
  std::vector<long> stack{0};
  seen[0] = 1;
  while (!stack.empty()) {
    const long u = stack.back();
    stack.pop_back();
    for (long v = 0; v < n; ++v) {
      const double w = transpose ? P(v, u) : P(u, v);
      if (w > 0.0 && !seen[static_cast<size_t>(v)]) {
        seen[static_cast<size_t>(v)] = 1;
        stack.push_back(v);
      }
    }
  }
  return seen;
}

}  // namespace

bool is_irreducible(const Eigen::MatrixXd& P) {
  if (P.rows() == 0 || P.rows() != P.cols()) return false;
  for (const auto& seen : {reachable(P, false), reachable(P, true)})
    for (char s : seen)
      if (!s) return false;
  return true;
}

std::vector<std::string> validate_network(const NetworkSpec& spec) {
  std::vector<std::string> report;
  const long n = spec.size();
  if (n == 0) {
    report.push_back("network has no nodes");
    return report;
  }
  if (spec.routing.rows() != n || spec.routing.cols() != n)
    report.push_back("routing matrix dimension does not match node count");

  for (long j = 0; j < n; ++j) {
    const NodeSpec& node = spec.nodes[static_cast<size_t>(j)];
    if (!(node.service_rate > 0.0))
      report.push_back("node " + std::to_string(j) + ": service rate not positive");
    if (node.kind == NodeKind::InfiniteServer && node.finite_capacity())
      report.push_back("node " + std::to_string(j) +
                       ": infinite-server node must have infinite capacity");
    if (node.finite_capacity() && *node.capacity < 0)
      report.push_back("node " + std::to_string(j) + ": negative capacity");
  }

  if (spec.routing.rows() == n && spec.routing.cols() == n) {
    for (long i = 0; i < n; ++i) {
      double row = 0.0;
      bool neg = false;
      for (long j = 0; j < n; ++j) {
        row += spec.routing(i, j);
        neg = neg || spec.routing(i, j) < 0.0;
      }
      if (neg) report.push_back("row " + std::to_string(i) + ": negative entry");
      if (std::abs(row - 1.0) > 1e-12)
        report.push_back("row " + std::to_string(i) + " not stochastic (sum " +
                         std::to_string(row) + ")");
    }
    if (!is_irreducible(spec.routing))
      report.push_back("routing not irreducible");
  }

  if (spec.customers < 0) report.push_back("negative customer count");

  bool all_finite = true;
  long total_cap = 0;
  for (const NodeSpec& node : spec.nodes) {
    if (!node.finite_capacity()) {
      all_finite = false;
      break;
    }
    total_cap += *node.capacity;
  }
  if (all_finite && total_cap < spec.customers)
    report.push_back("M exceeds total capacity");

  if (spec.policy == Policy::Standard) {
    for (long j = 0; j < n; ++j)
      if (spec.nodes[static_cast<size_t>(j)].finite_capacity()) {
        report.push_back("standard policy requires infinite capacities");
        break;
      }
  }
  return report;
}

Eigen::VectorXd invariant_vector(const Eigen::MatrixXd& P) {
  if (!is_irreducible(P))
    throw std::runtime_error("routing not irreducible");
  const long n = P.rows();

  // (P^T - I) theta = 0 with the last balance row replaced by sum = 1.
  Eigen::SparseMatrix<double> A(n, n);
  std::vector<Eigen::Triplet<double>> trip;
  for (long i = 0; i < n; ++i) {
    for (long j = 0; j < n; ++j) {
      double v = (i == n - 1) ? 1.0 : P(j, i) - (i == j ? 1.0 : 0.0);
      if (i == n - 1 || v != 0.0) trip.emplace_back(i, j, v);
    }
  }
  A.setFromTriplets(trip.begin(), trip.end());
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n);
  rhs(n - 1) = 1.0;

  Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
  lu.compute(A);
  Eigen::VectorXd theta;
  bool ok = lu.info() == Eigen::Success;
  if (ok) {
    theta = lu.solve(rhs);
    theta /= theta.sum();
    ok = (P.transpose() * theta - theta).lpNorm<Eigen::Infinity>() <= 1e-12 &&
         theta.minCoeff() > 0.0;
  }
  if (!ok) {
    // Power-iteration fallback.
    theta = Eigen::VectorXd::Constant(n, 1.0 / static_cast<double>(n));
    const Eigen::MatrixXd Pt = P.transpose();
    for (int it = 0; it < 200000; ++it) {
      Eigen::VectorXd next = 0.5 * (theta + Pt * theta);
      next /= next.sum();
      const double diff = (next - theta).lpNorm<Eigen::Infinity>();
      theta = next;
      if (diff < 1e-16) break;
    }
    if ((Pt * theta - theta).lpNorm<Eigen::Infinity>() > 1e-12)
      throw std::runtime_error("invariant vector solve did not converge");
  }
  return theta;
}

bool check_reversibility(const Eigen::MatrixXd& P, const Eigen::VectorXd& theta) {
  const long n = P.rows();
  for (long i = 0; i < n; ++i)
    for (long j = i + 1; j < n; ++j)
      if (std::abs(theta(i) * P(i, j) - theta(j) * P(j, i)) > 1e-12)
        return false;
  return true;
}

Eigen::VectorXd utilizations(const Eigen::VectorXd& theta,
                             const NetworkSpec& spec, bool normalized) {
  const long n = spec.size();
  Eigen::VectorXd r(n);
  for (long j = 0; j < n; ++j)
    r(j) = theta(j) / spec.nodes[static_cast<size_t>(j)].service_rate;
  if (normalized) {
    double rmax = 0.0;
    for (long j = 0; j < n; ++j)
      if (spec.nodes[static_cast<size_t>(j)].kind == NodeKind::SingleServer)
        rmax = std::max(rmax, r(j));
    if (rmax > 0.0) r /= rmax;
  }
  return r;
}

}  // namespace jackson
