#include <doctest.h>

#include "jackson/ensemble.hpp"

#include <cmath>
#include <functional>
#include <random>

using namespace jackson;

namespace {

NetworkSpec single_node() {
  NetworkSpec net;
  net.nodes = {NodeSpec{NodeKind::SingleServer, 1.0, std::nullopt}};
  net.routing = Eigen::MatrixXd::Ones(1, 1);
  return net;
}

NetworkSpec two_node_swap(std::optional<long> cap0 = std::nullopt,
                          std::optional<long> cap1 = std::nullopt) {
  NetworkSpec net;
  net.nodes = {NodeSpec{NodeKind::SingleServer, 1.0, cap0},
               NodeSpec{NodeKind::SingleServer, 1.0, cap1}};
  net.routing = Eigen::MatrixXd::Zero(2, 2);
  net.routing(0, 1) = 1.0;
  net.routing(1, 0) = 1.0;
  if (cap0 || cap1) net.policy = Policy::Blocking;
  return net;
}

NetworkSpec random_network(std::mt19937_64& rng, bool finite_caps) {
  std::uniform_real_distribution<double> u(0.2, 2.0);
  const long n = 2 + static_cast<long>(rng() % 4);
  NetworkSpec net;
  for (long j = 0; j < n; ++j) {
    NodeSpec node;
    node.kind = rng() % 3 == 0 ? NodeKind::InfiniteServer : NodeKind::SingleServer;
    node.service_rate = u(rng);
    if (finite_caps && node.kind == NodeKind::SingleServer && rng() % 2 == 0)
      node.capacity = 1 + static_cast<long>(rng() % 6);
    net.nodes.push_back(node);
  }
  net.routing = Eigen::MatrixXd(n, n);
  for (long i = 0; i < n; ++i) {
    double row = 0.0;
    for (long j = 0; j < n; ++j) {
      net.routing(i, j) = u(rng);
      row += net.routing(i, j);
    }
    net.routing.row(i) /= row;
  }
  net.policy = finite_caps ? Policy::BlockingRerouting : Policy::Standard;
  return net;
}

// Direct dense convolution of pmf tables, independent of SumPmf.
std::vector<double> oracle_sum(const std::vector<FreeMarginal>& ms, long M) {
  std::vector<double> acc{1.0};
  for (const auto& d : ms) {
    std::vector<double> next(static_cast<size_t>(M) + 1, 0.0);
    for (size_t a = 0; a < acc.size(); ++a)
      for (long k = 0; static_cast<long>(a) + k <= M; ++k)
        next[a + static_cast<size_t>(k)] += acc[a] * pmf(d, k);
    acc = std::move(next);
  }
  return acc;
}

// Brute-force canonical law over all occupancy vectors with sum M.
void enumerate_rec(const NetworkSpec& net, const GrandCanonical& gc, long j,
                   long left, double w, std::vector<long>& state,
                   std::vector<std::vector<long>>& states,
                   std::vector<double>& weights) {
  const long n = net.size();
  if (j == n) {
    if (left == 0) {
      states.push_back(state);
      weights.push_back(w);
    }
    return;
  }
  const long cap = std::min(left, net.capacity_of(j));
  for (long k = 0; k <= cap; ++k) {
    state[static_cast<size_t>(j)] = k;
    enumerate_rec(net, gc, j + 1, left - k,
                  w * pmf(gc.marginals[static_cast<size_t>(j)], k), state,
                  states, weights);
  }
  state[static_cast<size_t>(j)] = 0;
}

}  // namespace

TEST_CASE("mean of the free total in closed form for a single geometric node") {
  const NetworkSpec net = single_node();
  const Eigen::VectorXd theta = Eigen::VectorXd::Ones(1);
  CHECK(mean_total(net, theta, 0.5) == doctest::Approx(1.0).epsilon(1e-13));
  CHECK(mean_total(net, theta, 0.8) == doctest::Approx(4.0).epsilon(1e-13));
  CHECK_THROWS_AS(mean_total(net, theta, 1.0), std::domain_error);
}

TEST_CASE("chemical potential for the single geometric node: M=4 gives 0.8") {
  const NetworkSpec net = single_node();
  const Eigen::VectorXd theta = Eigen::VectorXd::Ones(1);
  CHECK(solve_gamma(net, theta, 4.0) == doctest::Approx(0.8).epsilon(1e-12));
  CHECK(solve_gamma(net, theta, 0.0) == doctest::Approx(0.0).epsilon(1e-14));
}

TEST_CASE("chemical potential: residual bound and monotonicity on random instances") {
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 60; ++trial) {
    const NetworkSpec net = random_network(rng, trial % 2 == 0);
    Eigen::VectorXd theta(net.size());
    for (long j = 0; j < net.size(); ++j) theta(j) = 0.1 + u(rng);
    theta /= theta.sum();
    const double M = 1.0 + 20.0 * u(rng);

    double total_cap = 0.0;
    bool all_finite = true;
    for (const auto& node : net.nodes) {
      if (!node.finite_capacity()) all_finite = false;
      else total_cap += static_cast<double>(*node.capacity);
    }
    if (all_finite && M >= total_cap) continue;

    const double gamma = solve_gamma(net, theta, M);
    CHECK(std::abs(mean_total(net, theta, gamma) - M) <=
          1e-10 * std::max(1.0, M));

    // Strict monotonicity on a gamma grid up to the solved point.
    double prev = -1.0;
    for (int i = 1; i <= 8; ++i) {
      const double m = mean_total(net, theta, gamma * i / 8.0);
      CHECK(m > prev);
      prev = m;
    }
  }
}

TEST_CASE("infeasible and boundary populations are refused") {
  NetworkSpec net = two_node_swap(2, 3);
  const Eigen::VectorXd theta = Eigen::VectorXd::Constant(2, 0.5);
  CHECK_THROWS_WITH_AS(solve_gamma(net, theta, 5.0), "no finite gamma",
                       std::domain_error);
  CHECK_THROWS_WITH_AS(solve_gamma(net, theta, 6.0), "infeasible customer count",
                       std::domain_error);
  CHECK(std::abs(mean_total(net, theta, solve_gamma(net, theta, 4.5)) - 4.5) <=
        1e-9);
}

TEST_CASE("sum distribution matches a dense convolution oracle") {
  std::mt19937_64 rng(32);
  std::uniform_real_distribution<double> u(0.1, 0.8);
  for (int trial = 0; trial < 30; ++trial) {
    std::vector<FreeMarginal> ms;
    const int n = 2 + static_cast<int>(rng() % 4);
    for (int j = 0; j < n; ++j) {
      switch (rng() % 3) {
        case 0: ms.push_back(Geometric{u(rng)}); break;
        case 1: ms.push_back(Poisson{2.0 * u(rng)}); break;
        default:
          ms.push_back(TruncatedGeometric{2.0 * u(rng),
                                          1 + static_cast<long>(rng() % 5)});
      }
    }
    const long M = 12;
    const SumPmf s = exact_sum_pmf(ms, M);
    const std::vector<double> oracle = oracle_sum(ms, M);
    for (long m = 0; m <= M; ++m)
      CHECK(s.value(m) ==
            doctest::Approx(oracle[static_cast<size_t>(m)]).epsilon(1e-11));
  }
}

TEST_CASE("two symmetric nodes with M=2: marginals uniform over {0,1,2}") {
  const NetworkSpec net = two_node_swap();
  const Eigen::VectorXd theta = Eigen::VectorXd::Constant(2, 0.5);
  const double gamma = solve_gamma(net, theta, 2.0);
  const CanonicalLaw law(net, theta, 2, gamma);
  for (long n = 0; n <= 2; ++n) {
    CHECK(law.node_marginal(0, n) == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
    CHECK(law.node_marginal(1, n) == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
  }
  CHECK(law.joint_prefix_prob({1, 1}) == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
}

TEST_CASE("canonical law matches brute-force enumeration") {
  std::mt19937_64 rng(33);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 40; ++trial) {
    const NetworkSpec net = random_network(rng, trial % 2 == 1);
    Eigen::VectorXd theta(net.size());
    for (long j = 0; j < net.size(); ++j) theta(j) = 0.1 + u(rng);
    theta /= theta.sum();
    const long M = 2 + static_cast<long>(rng() % 5);

    double total_cap = 0.0;
    bool all_finite = true;
    for (const auto& node : net.nodes) {
      if (!node.finite_capacity()) all_finite = false;
      else total_cap += static_cast<double>(*node.capacity);
    }
    if (all_finite && M >= total_cap) continue;

    const double gamma = solve_gamma(net, theta, static_cast<double>(M));
    const CanonicalLaw law(net, theta, M, gamma);
    const GrandCanonical gc = grand_canonical(net, theta, gamma);

    std::vector<long> state(static_cast<size_t>(net.size()), 0);
    std::vector<std::vector<long>> states;
    std::vector<double> weights;
    enumerate_rec(net, gc, 0, M, 1.0, state, states, weights);
    double z = 0.0;
    for (double w : weights) z += w;

    // Joint probabilities of full states.
    for (size_t s = 0; s < states.size(); ++s)
      CHECK(law.joint_prefix_prob(states[s]) ==
            doctest::Approx(weights[s] / z).epsilon(1e-10));

    // Node marginals.
    for (long j = 0; j < net.size(); ++j)
      for (long n = 0; n <= M; ++n) {
        double p = 0.0;
        for (size_t s = 0; s < states.size(); ++s)
          if (states[s][static_cast<size_t>(j)] == n) p += weights[s] / z;
        CHECK(law.node_marginal(j, n) == doctest::Approx(p).epsilon(1e-10));
      }
  }
}

TEST_CASE("canonical probabilities are gauge-invariant in gamma") {
  std::mt19937_64 rng(34);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 50; ++trial) {
    const NetworkSpec net = random_network(rng, trial % 2 == 0);
    Eigen::VectorXd theta(net.size());
    for (long j = 0; j < net.size(); ++j) theta(j) = 0.1 + u(rng);
    theta /= theta.sum();
    const long M = 3 + static_cast<long>(rng() % 8);

    double total_cap = 0.0;
    bool all_finite = true;
    for (const auto& node : net.nodes) {
      if (!node.finite_capacity()) all_finite = false;
      else total_cap += static_cast<double>(*node.capacity);
    }
    if (all_finite && M >= total_cap) continue;

    const double g1 = solve_gamma(net, theta, static_cast<double>(M));
    const double g2 = 0.35 * g1;
    const CanonicalLaw a(net, theta, M, g1);
    const CanonicalLaw b(net, theta, M, g2);
    for (long j = 0; j < net.size(); ++j)
      for (long n = 0; n <= M; ++n) {
        const double pa = a.node_marginal(j, n);
        const double pb = b.node_marginal(j, n);
        if (pa > 1e-14)
          CHECK(std::abs(pa - pb) / pa <= 1e-12);
        else
          CHECK(std::abs(pa - pb) <= 1e-14);
      }
  }
}

TEST_CASE("partition function matches a brute-force weight sum") {
  std::mt19937_64 rng(35);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 20; ++trial) {
    const NetworkSpec net = random_network(rng, false);
    Eigen::VectorXd theta(net.size());
    for (long j = 0; j < net.size(); ++j) theta(j) = 0.1 + u(rng);
    theta /= theta.sum();
    const long M = 2 + static_cast<long>(rng() % 5);
    const double gamma = solve_gamma(net, theta, static_cast<double>(M));
    const CanonicalLaw law(net, theta, M, gamma);

    // Z = sum over states of prod r_j^{n_j} (/ n_j! at infinite servers).
    std::function<double(long, long)> z = [&](long j, long left) -> double {
      if (j == net.size()) return left == 0 ? 1.0 : 0.0;
      const double r = theta(j) / net.nodes[static_cast<size_t>(j)].service_rate;
      double total = 0.0;
      double w = 1.0;
      for (long k = 0; k <= left; ++k) {
        total += w * z(j + 1, left - k);
        w *= r / (net.nodes[static_cast<size_t>(j)].kind ==
                          NodeKind::InfiniteServer
                      ? static_cast<double>(k + 1)
                      : 1.0);
      }
      return total;
    };
    CHECK(law.log_partition() == doctest::Approx(std::log(z(0, M))).epsilon(1e-10));

    const PartitionEstimate est =
        partition_function(net, theta, M, gamma);
    CHECK(est.log_exact == doctest::Approx(law.log_partition()).epsilon(1e-12));
  }
}

TEST_CASE("partition approximation converges on growing iid networks") {
  double prev_err = 1e9;
  for (long n : {20L, 80L, 320L}) {
    NetworkSpec net;
    for (long j = 0; j < n; ++j)
      net.nodes.push_back(NodeSpec{NodeKind::SingleServer, 1.0, std::nullopt});
    net.routing = Eigen::MatrixXd::Constant(n, n, 1.0 / n);
    const Eigen::VectorXd theta = Eigen::VectorXd::Constant(n, 1.0 / n);
    const long M = n;  // mean one customer per node
    const double gamma = solve_gamma(net, theta, static_cast<double>(M));
    const PartitionEstimate est = partition_function(net, theta, M, gamma);
    const double err = std::abs(est.log_exact - est.log_approx);
    CHECK(err < prev_err);
    prev_err = err;
  }
  CHECK(prev_err < 5e-3);
}

TEST_CASE("gaussian local approximation of the sum law: iid geometric family") {
  NetworkSpec net;
  const long n = 400;
  for (long j = 0; j < n; ++j)
    net.nodes.push_back(NodeSpec{NodeKind::SingleServer, 1.0, std::nullopt});
  net.routing = Eigen::MatrixXd::Constant(n, n, 1.0 / n);
  const Eigen::VectorXd theta = Eigen::VectorXd::Constant(n, 1.0 / n);
  const GrandCanonical gc = grand_canonical(net, theta, 0.4 * n);
  const long center = std::lround(gc.total_mean);
  const LltReport rep = llt_report(gc, center - 20, center + 20);
  CHECK(rep.sup_deviation < 0.05);
  for (const auto& e : rep.entries)
    CHECK(e.deviation ==
          doctest::Approx(std::abs(rep.b * std::sqrt(2.0 * M_PI) * e.exact -
                                   std::exp(-(e.k - rep.a) * (e.k - rep.a) /
                                            (2.0 * rep.b * rep.b))))
              .epsilon(1e-12));
}

TEST_CASE("equivalence ratio and marginal total variation shrink with size") {
  double prev_tv = 1.0;
  double prev_ratio_err = 1e9;
  for (long n : {10L, 40L, 160L}) {
    NetworkSpec net;
    for (long j = 0; j < n; ++j)
      net.nodes.push_back(
          NodeSpec{NodeKind::SingleServer, 1.0, std::optional<long>(5)});
    net.routing = Eigen::MatrixXd::Constant(n, n, 1.0 / n);
    net.policy = Policy::BlockingRerouting;
    const Eigen::VectorXd theta = Eigen::VectorXd::Constant(n, 1.0 / n);
    const long M = 2 * n;
    const double gamma = solve_gamma(net, theta, static_cast<double>(M));
    const CanonicalLaw law(net, theta, M, gamma);
    const double tv = marginal_total_variation(law, 0);
    CHECK(tv >= 0.0);
    CHECK(tv < prev_tv);
    prev_tv = tv;
    const double ratio = equivalence_ratio(law, {2, 2});
    const double err = std::abs(ratio - 1.0);
    CHECK(err < prev_ratio_err);
    prev_ratio_err = err;
  }
  CHECK(prev_tv < 0.02);
  CHECK(prev_ratio_err < 0.05);
}

TEST_CASE("condition diagnostics flag near-critical loads") {
  NetworkSpec net = two_node_swap();
  const Eigen::VectorXd theta = Eigen::VectorXd::Constant(2, 0.5);
  const ConditionReport ok = condition_diagnostics(net, theta, 0.5, 2);
  CHECK(!ok.near_critical);
  CHECK(ok.max_single_server_load == doctest::Approx(0.25).epsilon(1e-12));
  const ConditionReport hot = condition_diagnostics(net, theta, 1.95, 2);
  CHECK(hot.near_critical);
}
