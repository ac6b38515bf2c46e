#ifndef JACKSON_DYNAMICS_HPP
#define JACKSON_DYNAMICS_HPP

#include "jackson/netmodel.hpp"

#include <cstdint>
#include <functional>
#include <map>
#include <vector>

namespace jackson {

/// Maps a configuration m of M-1 customers to a transition matrix P(m).
/// Rows indexed by all N nodes; only rows/columns in
/// A(m) = {j : m_j < c_j} are meaningful, the rest must be zero.
using StateDependentProvider =
    std::function<Eigen::MatrixXd(const std::vector<long>&)>;

struct StateSpace {
  std::vector<std::vector<long>> states;  // lexicographic order

  long size() const { return static_cast<long>(states.size()); }
  // Index in the lexicographic order; -1 when absent.
  long index_of(const std::vector<long>& s) const;
};

/// All occupancy vectors with sum M and n_j <= c_j, lexicographic.
/// Throws std::runtime_error("state space too large for exact solve")
/// beyond `cap` states.
StateSpace enumerate_states(const NetworkSpec& spec, long cap = 2000000);

/// First-entrance distribution of the P-chain started at i into the set
/// A (given by an indicator over nodes; must contain i).
Eigen::VectorXd first_entrance_probs(const Eigen::MatrixXd& P, long i,
                                     const std::vector<char>& in_A);

struct Transition {
  long from = 0;
  long to = 0;
  double rate = 0.0;
};

/// Produces transition lists per state for the spec's policy, caching
/// the rerouting p* matrices by saturation pattern.
class KernelBuilder {
 public:
  KernelBuilder(const NetworkSpec& spec, const Eigen::VectorXd& theta,
                StateDependentProvider provider = nullptr);

  std::vector<Transition> operator()(const std::vector<long>& state) const;
  void transitions(const std::vector<long>& state,
                   std::vector<Transition>& out) const;

 private:
  const Eigen::MatrixXd& reroute_matrix(const std::vector<char>& saturated) const;

  const NetworkSpec& spec_;
  StateDependentProvider provider_;
  mutable std::map<std::vector<char>, Eigen::MatrixXd> reroute_cache_;
};

std::vector<Transition> kernel(const NetworkSpec& spec,
                               const Eigen::VectorXd& theta,
                               const std::vector<long>& state,
                               StateDependentProvider provider = nullptr);

/// Stationary vector of the generator assembled from the kernel,
/// solved exactly on the enumerated state space.
std::pair<StateSpace, Eigen::VectorXd> exact_stationary(
    const NetworkSpec& spec, const Eigen::VectorXd& theta,
    StateDependentProvider provider = nullptr, long state_cap = 2000000);

/// Normalized product-form weights theta_j^{n_j} / (g_j!)(n_j) over the
/// given state space.
Eigen::VectorXd product_form_distribution(const NetworkSpec& spec,
                                          const Eigen::VectorXd& theta,
                                          const StateSpace& ss);

/// The first-entrance construction: P(m) = p* rows against
/// A(m). Satisfies the theta-invariance hypothesis for any irreducible P.
StateDependentProvider make_rerouting_provider(const NetworkSpec& spec);

/// True iff the restriction of theta to A(m) is invariant under
/// provider(m) within 1e-12 (and rows are stochastic on A(m)).
bool verify_provider(const Eigen::VectorXd& theta,
                     const StateDependentProvider& provider,
                     const std::vector<long>& m, const NetworkSpec& spec);

/// Max over states of |LHS - RHS| of the global balance equations under
/// the product-form candidate law.
double balance_residual(const NetworkSpec& spec, const Eigen::VectorXd& theta,
                        const StateDependentProvider& provider,
                        long state_cap = 2000000);

struct SimResult {
  long events = 0;
  double total_time = 0.0;          // post-warmup measured time
  Eigen::VectorXd mean_occupancy;   // time-weighted
  Eigen::VectorXd std_error;        // batch-means standard error
  Eigen::VectorXd empty_fraction;   // time fraction with n_j = 0
  Eigen::VectorXd full_fraction;    // time fraction with n_j = c_j
};

/// Gillespie jump simulation. The first tenth of the events is treated
/// as warmup and excluded from the statistics. Deterministic per seed.
SimResult simulate(const NetworkSpec& spec, const Eigen::VectorXd& theta,
                   long horizon_events, std::uint64_t seed,
                   StateDependentProvider provider = nullptr,
                   const std::vector<long>* initial = nullptr);

}  // namespace jackson

#endif
