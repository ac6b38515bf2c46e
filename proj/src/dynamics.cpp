#include "jackson/dynamics.hpp"

#include <Eigen/SparseLU>
#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

namespace jackson {

namespace {

bool below_capacity(const NetworkSpec& spec, const std::vector<long>& n, long j) {
  const NodeSpec& node = spec.nodes[static_cast<size_t>(j)];
  return !node.finite_capacity() || n[static_cast<size_t>(j)] < *node.capacity;
}

}  // namespace

long StateSpace::index_of(const std::vector<long>& s) const {
  auto it = std::lower_bound(states.begin(), states.end(), s);
  if (it == states.end() || *it != s) return -1;
  return static_cast<long>(it - states.begin());
}

StateSpace enumerate_states(const NetworkSpec& spec, long cap) {
  const long n = spec.size();
  const long M = spec.customers;
  StateSpace ss;
  std::vector<long> cur(static_cast<size_t>(n), 0);

  // Depth-first lexicographic fill.
  std::function<void(long, long)> rec = [&](long j, long remaining) {
    if (j == n - 1) {
      if (remaining <= spec.capacity_of(j)) {
        cur[static_cast<size_t>(j)] = remaining;
        if (static_cast<long>(ss.states.size()) >= cap)
          throw std::runtime_error("state space too large for exact solve");
        ss.states.push_back(cur);
      }
      return;
    }
    const long top = std::min(remaining, spec.capacity_of(j));
    for (long k = 0; k <= top; ++k) {
      cur[static_cast<size_t>(j)] = k;
      rec(j + 1, remaining - k);
    }
    cur[static_cast<size_t>(j)] = 0;
  };
  if (n > 0) rec(0, M);
  if (ss.states.empty())
    throw std::runtime_error("M exceeds total capacity");
  return ss;
}

Eigen::VectorXd first_entrance_probs(const Eigen::MatrixXd& P, long i,
                                     const std::vector<char>& in_A) {
  const long n = P.rows();
  if (!in_A[static_cast<size_t>(i)])
    throw std::invalid_argument("start node must belong to the target set");
  std::vector<long> transient;
  for (long j = 0; j < n; ++j)
    if (!in_A[static_cast<size_t>(j)]) transient.push_back(j);

  Eigen::VectorXd out = Eigen::VectorXd::Zero(n);
  if (transient.empty()) {
    for (long j = 0; j < n; ++j) out(j) = P(i, j);
    return out;
  }

  const long t = static_cast<long>(transient.size());
  Eigen::MatrixXd sys(t, t);   // I - P_TT
  Eigen::MatrixXd rhs(t, n);   // P_TA (columns outside A stay zero)
  rhs.setZero();
  for (long a = 0; a < t; ++a) {
    for (long b = 0; b < t; ++b)
      sys(a, b) = (a == b ? 1.0 : 0.0) -
                  P(transient[static_cast<size_t>(a)],
                    transient[static_cast<size_t>(b)]);
    for (long j = 0; j < n; ++j)
      if (in_A[static_cast<size_t>(j)])
        rhs(a, j) = P(transient[static_cast<size_t>(a)], j);
  }
  Eigen::PartialPivLU<Eigen::MatrixXd> lu(sys);
  const Eigen::MatrixXd hit = lu.solve(rhs);  // h_{kj}

  for (long j = 0; j < n; ++j)
    if (in_A[static_cast<size_t>(j)]) out(j) = P(i, j);
  for (long a = 0; a < t; ++a)
    out += P(i, transient[static_cast<size_t>(a)]) * hit.row(a).transpose();

  const double total = out.sum();
  if (std::abs(total - 1.0) > 1e-9)
    throw std::runtime_error("first-entrance system is singular");
  return out;
}

KernelBuilder::KernelBuilder(const NetworkSpec& spec,
                             const Eigen::VectorXd& theta,
                             StateDependentProvider provider)
    : spec_(spec), provider_(std::move(provider)) {
  if (spec.policy == Policy::Blocking &&
      !check_reversibility(spec.routing, theta))
    throw std::runtime_error(
        "product form not guaranteed: non-reversible routing");
  if (spec.policy == Policy::StateDependent && !provider_)
    throw std::invalid_argument("state-dependent policy needs a provider");
}

const Eigen::MatrixXd& KernelBuilder::reroute_matrix(
    const std::vector<char>& saturated) const {
  auto it = reroute_cache_.find(saturated);
  if (it != reroute_cache_.end()) return it->second;

  const long n = spec_.size();
  Eigen::MatrixXd pstar(n, n);
  std::vector<char> in_A(saturated.size());
  for (long i = 0; i < n; ++i) {
    // A_i = {i} union {j : n_j < c_j}; p* depends on the state only
    // through the saturation pattern.
    for (long j = 0; j < n; ++j)
      in_A[static_cast<size_t>(j)] = !saturated[static_cast<size_t>(j)];
    in_A[static_cast<size_t>(i)] = 1;
    pstar.row(i) = first_entrance_probs(spec_.routing, i, in_A).transpose();
  }
  return reroute_cache_.emplace(saturated, std::move(pstar)).first->second;
}

void KernelBuilder::transitions(const std::vector<long>& state,
                                std::vector<Transition>& out) const {
  out.clear();
  const long n = spec_.size();

  const Eigen::MatrixXd* routing = &spec_.routing;
  Eigen::MatrixXd provided;
  std::vector<char> saturated;
  if (spec_.policy == Policy::BlockingRerouting) {
    saturated.resize(static_cast<size_t>(n));
    for (long j = 0; j < n; ++j)
      saturated[static_cast<size_t>(j)] = !below_capacity(spec_, state, j);
    routing = &reroute_matrix(saturated);
  }

  std::vector<long> m;
  for (long i = 0; i < n; ++i) {
    const long ni = state[static_cast<size_t>(i)];
    if (ni == 0) continue;
    const double gi = spec_.nodes[static_cast<size_t>(i)].departure_rate(ni);

    if (spec_.policy == Policy::StateDependent) {
      m = state;
      --m[static_cast<size_t>(i)];
      provided = provider_(m);
      routing = &provided;
    }

    for (long j = 0; j < n; ++j) {
      if (j == i) continue;
      double p = (*routing)(i, j);
      if (p <= 0.0) continue;
      switch (spec_.policy) {
        case Policy::Standard:
          break;
        case Policy::Blocking:
        case Policy::StateDependent:
          if (!below_capacity(spec_, state, j)) p = 0.0;
          break;
        case Policy::BlockingRerouting:
          // p* already lands only on admissible nodes
          break;
      }
      if (p > 0.0) out.push_back({i, j, gi * p});
    }
  }
}

std::vector<Transition> KernelBuilder::operator()(
    const std::vector<long>& state) const {
  std::vector<Transition> out;
  transitions(state, out);
  return out;
}

std::vector<Transition> kernel(const NetworkSpec& spec,
                               const Eigen::VectorXd& theta,
                               const std::vector<long>& state,
                               StateDependentProvider provider) {
  return KernelBuilder(spec, theta, std::move(provider))(state);
}

std::pair<StateSpace, Eigen::VectorXd> exact_stationary(
    const NetworkSpec& spec, const Eigen::VectorXd& theta,
    StateDependentProvider provider, long state_cap) {
  StateSpace ss = enumerate_states(spec, state_cap);
  const long S = ss.size();
  KernelBuilder build(spec, theta, std::move(provider));

  // Rows of the solved system: column-balance of the generator, with the
  // first balance row replaced by the normalization sum = 1.
  std::vector<Eigen::Triplet<double>> trip;
  std::vector<Transition> trans;
  std::vector<long> target;
  for (long s = 0; s < S; ++s) {
    build.transitions(ss.states[static_cast<size_t>(s)], trans);
    double outflow = 0.0;
    for (const Transition& t : trans) {
      target = ss.states[static_cast<size_t>(s)];
      --target[static_cast<size_t>(t.from)];
      ++target[static_cast<size_t>(t.to)];
      const long idx = ss.index_of(target);
      if (idx < 0)
        throw std::runtime_error("kernel leaves the state space");
      outflow += t.rate;
      if (idx != 0) trip.emplace_back(idx, s, t.rate);
    }
    if (s != 0) trip.emplace_back(s, s, -outflow);
    trip.emplace_back(0, s, 1.0);  // normalization row
  }

  Eigen::SparseMatrix<double> A(S, S);
  A.setFromTriplets(trip.begin(), trip.end());
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(S);
  rhs(0) = 1.0;

  Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
  lu.compute(A);
  if (lu.info() != Eigen::Success)
    throw std::runtime_error("stationary solve failed (state space connected?)");
  Eigen::VectorXd pi = lu.solve(rhs);
  if (pi.minCoeff() < -1e-9)
    throw std::runtime_error("stationary solve produced negative mass");
  pi = pi.cwiseMax(0.0);
  pi /= pi.sum();
  return {std::move(ss), std::move(pi)};
}

Eigen::VectorXd product_form_distribution(const NetworkSpec& spec,
                                          const Eigen::VectorXd& theta,
                                          const StateSpace& ss) {
  const long S = ss.size();
  Eigen::VectorXd logw(S);
  for (long s = 0; s < S; ++s) {
    const std::vector<long>& n = ss.states[static_cast<size_t>(s)];
    double lw = 0.0;
    for (long j = 0; j < spec.size(); ++j) {
      const NodeSpec& node = spec.nodes[static_cast<size_t>(j)];
      const long nj = n[static_cast<size_t>(j)];
      lw += static_cast<double>(nj) *
            std::log(theta(j) / node.service_rate);
      if (node.kind == NodeKind::InfiniteServer)
        lw -= std::lgamma(static_cast<double>(nj) + 1.0);
    }
    logw(s) = lw;
  }
  const double mx = logw.maxCoeff();
  Eigen::VectorXd w = (logw.array() - mx).exp();
  return w / w.sum();
}

StateDependentProvider make_rerouting_provider(const NetworkSpec& spec) {
  return [&spec](const std::vector<long>& m) {
    const long n = spec.size();
    std::vector<char> in_A(static_cast<size_t>(n));
    for (long j = 0; j < n; ++j)
      in_A[static_cast<size_t>(j)] = below_capacity(spec, m, j);
    Eigen::MatrixXd P = Eigen::MatrixXd::Zero(n, n);
    for (long i = 0; i < n; ++i)
      if (in_A[static_cast<size_t>(i)])
        P.row(i) = first_entrance_probs(spec.routing, i, in_A).transpose();
    return P;
  };
}

bool verify_provider(const Eigen::VectorXd& theta,
                     const StateDependentProvider& provider,
                     const std::vector<long>& m, const NetworkSpec& spec) {
  const long n = spec.size();
  const Eigen::MatrixXd P = provider(m);
  std::vector<long> A;
  for (long j = 0; j < n; ++j)
    if (below_capacity(spec, m, j)) A.push_back(j);

  for (long i : A) {
    double row = 0.0;
    for (long j : A) row += P(i, j);
    if (std::abs(row - 1.0) > 1e-12) return false;
  }
  for (long j : A) {
    double inflow = 0.0;
    for (long i : A) inflow += theta(i) * P(i, j);
    if (std::abs(inflow - theta(j)) > 1e-12) return false;
  }
  return true;
}

double balance_residual(const NetworkSpec& spec, const Eigen::VectorXd& theta,
                        const StateDependentProvider& provider,
                        long state_cap) {
  const StateSpace ss = enumerate_states(spec, state_cap);
  double worst = 0.0;
  std::vector<long> m;
  for (const std::vector<long>& n : ss.states) {
    double lhs = 0.0, rhs = 0.0;
    for (long i = 0; i < spec.size(); ++i) {
      const long ni = n[static_cast<size_t>(i)];
      if (ni == 0) continue;
      const double gi = spec.nodes[static_cast<size_t>(i)].departure_rate(ni);
      m = n;
      --m[static_cast<size_t>(i)];
      const Eigen::MatrixXd P = provider(m);
      for (long j = 0; j < spec.size(); ++j) {
        if (j == i || !below_capacity(spec, n, j)) continue;
        lhs += gi * P(i, j);
        // pi(n - e_i + e_j) / pi(n) = theta_j g_i(n_i) / (theta_i g_j(n_j+1))
        rhs += gi * P(j, i) * theta(j) / theta(i);
      }
    }
    worst = std::max(worst, std::abs(lhs - rhs));
  }
  return worst;
}

SimResult simulate(const NetworkSpec& spec, const Eigen::VectorXd& theta,
                   long horizon_events, std::uint64_t seed,
                   StateDependentProvider provider,
                   const std::vector<long>* initial) {
  const long n = spec.size();
  SimResult res;
  res.mean_occupancy = Eigen::VectorXd::Zero(n);
  res.std_error = Eigen::VectorXd::Zero(n);
  res.empty_fraction = Eigen::VectorXd::Zero(n);
  res.full_fraction = Eigen::VectorXd::Zero(n);

  std::vector<long> state(static_cast<size_t>(n), 0);
  if (initial) {
    state = *initial;
  } else {
    long left = spec.customers;
    for (long j = 0; j < n && left > 0; ++j) {
      const long put = std::min(left, spec.capacity_of(j));
      state[static_cast<size_t>(j)] = put;
      left -= put;
    }
    if (left > 0) throw std::runtime_error("M exceeds total capacity");
  }
  if (spec.customers == 0) return res;

  KernelBuilder build(spec, theta, std::move(provider));
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);

  const long warmup = horizon_events / 10;
  const int n_batches = 32;
  const long batch_len =
      std::max<long>(1, (horizon_events - warmup) / n_batches);
  Eigen::MatrixXd batch_sum = Eigen::MatrixXd::Zero(n_batches, n);
  Eigen::VectorXd batch_time = Eigen::VectorXd::Zero(n_batches);

  std::vector<Transition> trans;
  for (long ev = 0; ev < horizon_events; ++ev) {
    build.transitions(state, trans);
    double total = 0.0;
    for (const Transition& t : trans) total += t.rate;
    if (total <= 0.0)
      throw std::runtime_error("absorbing state reached");
    const double dt = -std::log1p(-unif(rng)) / total;

    if (ev >= warmup) {
      const long b = std::min<long>((ev - warmup) / batch_len, n_batches - 1);
      batch_time(b) += dt;
      res.total_time += dt;
      for (long j = 0; j < n; ++j) {
        const long nj = state[static_cast<size_t>(j)];
        batch_sum(b, j) += dt * static_cast<double>(nj);
        if (nj == 0) res.empty_fraction(j) += dt;
        const NodeSpec& node = spec.nodes[static_cast<size_t>(j)];
        if (node.finite_capacity() && nj == *node.capacity)
          res.full_fraction(j) += dt;
      }
    }

    double u = unif(rng) * total;
    const Transition* chosen = &trans.back();
    for (const Transition& t : trans) {
      u -= t.rate;
      if (u <= 0.0) {
        chosen = &t;
        break;
      }
    }
    --state[static_cast<size_t>(chosen->from)];
    ++state[static_cast<size_t>(chosen->to)];
    ++res.events;
  }

  if (res.total_time > 0.0) {
    for (long j = 0; j < n; ++j) {
      res.mean_occupancy(j) = batch_sum.col(j).sum() / res.total_time;
      res.empty_fraction(j) /= res.total_time;
      res.full_fraction(j) /= res.total_time;
    }
    // Batch-means standard error of the time average.
    int used = 0;
    Eigen::VectorXd acc = Eigen::VectorXd::Zero(n);
    for (int b = 0; b < n_batches; ++b) {
      if (batch_time(b) <= 0.0) continue;
      ++used;
      for (long j = 0; j < n; ++j) {
        const double d =
            batch_sum(b, j) / batch_time(b) - res.mean_occupancy(j);
        acc(j) += d * d;
      }
    }
    if (used > 1)
      res.std_error =
          (acc / static_cast<double>(used - 1) / static_cast<double>(used))
              .cwiseSqrt();
  }
  return res;
}

}  // namespace jackson
