#ifndef JACKSON_NETMODEL_HPP
#define JACKSON_NETMODEL_HPP

#include <Eigen/Dense>
#include <limits>
#include <optional>
#include <string>
#include <vector>

namespace jackson {

enum class NodeKind { SingleServer, InfiniteServer };

enum class Policy { Standard, Blocking, BlockingRerouting, StateDependent };

struct NodeSpec {
  NodeKind kind = NodeKind::SingleServer;
  double service_rate = 1.0;                 // mu_a > 0
  std::optional<long> capacity = std::nullopt;  // nullopt = infinite

  bool finite_capacity() const { return capacity.has_value(); }
  // Departure rate with n customers present.
  double departure_rate(long n) const {
    if (n <= 0) return 0.0;
    return kind == NodeKind::SingleServer ? service_rate
                                          : service_rate * static_cast<double>(n);
  }
};

struct NetworkSpec {
  std::vector<NodeSpec> nodes;
  Eigen::MatrixXd routing;  // N x N row-stochastic
  long customers = 0;       // M
  Policy policy = Policy::Standard;

  long size() const { return static_cast<long>(nodes.size()); }
  long capacity_of(long j) const {
    return nodes[static_cast<size_t>(j)].capacity.value_or(
        std::numeric_limits<long>::max());
  }
};

/// Empty report iff the spec satisfies all structural invariants
/// (stochastic rows, irreducibility, capacity feasibility, policy rules).
std::vector<std::string> validate_network(const NetworkSpec& spec);

/// True iff the support graph of P is strongly connected.
bool is_irreducible(const Eigen::MatrixXd& P);

/// Invariant probability vector of an irreducible row-stochastic P:
/// theta P = theta, sum theta = 1, residual <= 1e-12.
/// Throws std::runtime_error("routing not irreducible") otherwise.
Eigen::VectorXd invariant_vector(const Eigen::MatrixXd& P);

/// theta_i p_ij == theta_j p_ji for all pairs, within 1e-12.
bool check_reversibility(const Eigen::MatrixXd& P, const Eigen::VectorXd& theta);

/// r_j = theta_j / mu_j; the normalized variant rescales so that the
/// maximum over single-server nodes is 1.
Eigen::VectorXd utilizations(const Eigen::VectorXd& theta,
                             const NetworkSpec& spec, bool normalized = false);

}  // namespace jackson

#endif
