#include "jackson/bikeshare.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

namespace jackson {

namespace {

// (1 + rho^{c+1}) / sum_{n=0}^{c} rho^n, evaluated through the dual
// parameter when rho > 1.
double failure_term(double rho, long cap) {
  if (rho > 1.0) {
    const double inv = 1.0 / rho;
    double z = 0.0, p = 1.0;
    for (long n = 0; n <= cap; ++n) {
      z += p;
      p *= inv;
    }
    return (std::pow(inv, static_cast<double>(cap)) + rho) / z;
  }
  double z = 0.0, p = 1.0;
  for (long n = 0; n <= cap; ++n) {
    z += p;
    p *= rho;
  }
  return (1.0 + p) / z;  // p == rho^{c+1} after the loop
}

double trunc_norm(double rho, long cap) {
  double z = 0.0, p = 1.0;
  for (long n = 0; n <= cap; ++n) {
    z += p;
    p *= rho;
  }
  return z;
}

// Cumulative-sum sampler over total rates per node.
class RateTree {
 public:
  explicit RateTree(long n) : n_(n), tree_(static_cast<size_t>(n) + 1, 0.0) {
    log2_ = 1;
    while ((log2_ << 1) <= n_) log2_ <<= 1;
  }
  void set(long i, double rate) {
    add(i, rate - rates_at(i));
  }
  void add(long i, double delta) {
    if (delta == 0.0) return;
    raw_[static_cast<size_t>(i)] += delta;
    for (++i; i <= n_; i += i & -i) tree_[static_cast<size_t>(i)] += delta;
  }
  double rates_at(long i) const {
    return raw_.empty() ? 0.0 : raw_[static_cast<size_t>(i)];
  }
  void init_raw() { raw_.assign(static_cast<size_t>(n_), 0.0); }
  double total() const {
    double s = 0.0;
    for (long i = n_; i > 0; i -= i & -i) s += tree_[static_cast<size_t>(i)];
    return s;
  }
  long sample(double x) const {
    long pos = 0;
    for (long bit = log2_; bit > 0; bit >>= 1) {
      const long next = pos + bit;
      if (next <= n_ && tree_[static_cast<size_t>(next)] < x) {
        pos = next;
        x -= tree_[static_cast<size_t>(next)];
      }
    }
    return pos;  // 0-based node index
  }

 private:
  long n_;
  long log2_;
  std::vector<double> tree_;
  std::vector<double> raw_;
};

}  // namespace

BuiltNetwork build_detailed(const BikeShareSpec& bs) {
  const long J1 = static_cast<long>(bs.stations.size());
  if (J1 < 2) throw std::invalid_argument("need at least two stations");
  if (bs.Q.rows() != J1 || bs.Q.cols() != J1)
    throw std::invalid_argument("Q dimension mismatch");
  if (!is_irreducible(bs.Q))
    throw std::invalid_argument("Q is not irreducible");
  if (bs.ride_rates.rows() != J1 || bs.ride_rates.cols() != J1)
    throw std::invalid_argument("ride-rate dimension mismatch");
  for (long i = 0; i < J1; ++i)
    for (long j = 0; j < J1; ++j)
      if ((bs.Q(i, j) > 0.0) != (bs.ride_rates(i, j) > 0.0))
        throw std::invalid_argument(
            "route set must equal the support of Q");

  const Eigen::VectorXd nu = invariant_vector(bs.Q);

  BuiltNetwork built;
  built.route_index = Eigen::MatrixXd::Constant(J1, J1, -1.0);
  NetworkSpec& net = built.net;
  for (long j = 0; j < J1; ++j) {
    net.nodes.push_back(NodeSpec{NodeKind::SingleServer,
                                 bs.stations[static_cast<size_t>(j)].user_rate,
                                 bs.stations[static_cast<size_t>(j)].capacity});
    built.station_nodes.push_back(j);
  }
  for (long i = 0; i < J1; ++i)
    for (long j = 0; j < J1; ++j)
      if (bs.Q(i, j) > 0.0) {
        const long id = net.size();
        net.nodes.push_back(NodeSpec{NodeKind::InfiniteServer,
                                     bs.ride_rates(i, j), std::nullopt});
        built.route_nodes.push_back(id);
        built.route_endpoints.emplace_back(i, j);
        built.route_index(i, j) = static_cast<double>(id);
      }

  const long N = net.size();
  net.routing = Eigen::MatrixXd::Zero(N, N);
  for (size_t k = 0; k < built.route_nodes.size(); ++k) {
    const long id = built.route_nodes[k];
    const auto [i, j] = built.route_endpoints[k];
    net.routing(i, id) = bs.Q(i, j);
    net.routing(id, j) = 1.0;
  }
  net.policy = Policy::BlockingRerouting;

  built.theta = Eigen::VectorXd::Zero(N);
  for (long j = 0; j < J1; ++j) built.theta(j) = 0.5 * nu(j);
  for (size_t k = 0; k < built.route_nodes.size(); ++k) {
    const auto [i, j] = built.route_endpoints[k];
    built.theta(built.route_nodes[k]) = 0.5 * nu(i) * bs.Q(i, j);
  }
  built.r = utilizations(built.theta, net);
  return built;
}

BuiltNetwork build_aggregated(const BikeShareSpec& bs) {
  const long J1 = static_cast<long>(bs.stations.size());
  if (J1 < 1) throw std::invalid_argument("need at least one station");
  if (bs.popularities.size() != J1)
    throw std::invalid_argument("popularity dimension mismatch");
  if (std::abs(bs.popularities.sum() - 1.0) > 1e-12 ||
      bs.popularities.minCoeff() <= 0.0)
    throw std::invalid_argument("popularities must be positive and sum to 1");

  BuiltNetwork built;
  NetworkSpec& net = built.net;
  for (long j = 0; j < J1; ++j) {
    net.nodes.push_back(NodeSpec{NodeKind::SingleServer,
                                 bs.stations[static_cast<size_t>(j)].user_rate,
                                 bs.stations[static_cast<size_t>(j)].capacity});
    built.station_nodes.push_back(j);
  }
  net.nodes.push_back(NodeSpec{NodeKind::InfiniteServer, bs.route_rate,
                               std::nullopt});
  built.route_nodes.push_back(J1);
  built.route_endpoints.emplace_back(-1, -1);

  const long N = J1 + 1;
  net.routing = Eigen::MatrixXd::Zero(N, N);
  for (long j = 0; j < J1; ++j) {
    net.routing(j, J1) = 1.0;
    net.routing(J1, j) = bs.popularities(j);
  }
  net.policy = Policy::Blocking;

  built.theta = Eigen::VectorXd::Zero(N);
  built.theta(J1) = 0.5;
  for (long j = 0; j < J1; ++j) built.theta(j) = 0.5 * bs.popularities(j);
  built.r = utilizations(built.theta, net);
  built.route_index = Eigen::MatrixXd::Constant(J1, J1, -1.0);
  return built;
}

FleetChoice fleet_from_delta(const BuiltNetwork& built, double delta) {
  if (!(delta > 0.0 && delta < 1.0))
    throw std::invalid_argument("delta must lie in (0,1)");
  for (long j : built.station_nodes)
    if (built.net.nodes[static_cast<size_t>(j)].finite_capacity())
      throw std::invalid_argument(
          "delta sizing applies to infinite-capacity stations");
  double rmax = 0.0;
  for (long j : built.station_nodes) rmax = std::max(rmax, built.r(j));
  FleetChoice out;
  out.gamma = (1.0 - delta) / rmax;
  out.fleet_real = mean_total(built.net, built.theta, out.gamma);
  out.fleet = std::lround(out.fleet_real);
  return out;
}

long capacity_for_overflow(double load, double eps) {
  if (!(load > 0.0 && load < 1.0))
    throw std::domain_error("exceedance does not vanish");
  if (!(eps > 0.0 && eps < 1.0))
    throw std::invalid_argument("eps must lie in (0,1)");
  long n = std::max<long>(
      0, static_cast<long>(std::ceil(std::log(eps) / std::log(load))) - 1);
  while (n > 0 && std::pow(load, static_cast<double>(n)) <= eps) --n;
  while (std::pow(load, static_cast<double>(n) + 1.0) > eps) ++n;
  return n;
}

CapacityResult capacity_for_both(double load, double eps) {
  if (!(load > 0.0)) throw std::invalid_argument("load must be positive");
  CapacityResult out;
  out.floor_empty = load < 1.0 ? 1.0 - load : 0.0;
  out.floor_full = load > 1.0 ? 1.0 - 1.0 / load : 0.0;
  if (std::max(out.floor_empty, out.floor_full) > eps) {
    out.feasible = false;
    return out;
  }
  out.feasible = true;
  for (long c = 0;; ++c) {
    const double z = trunc_norm(load, c);
    const double empty = 1.0 / z;
    const double full = std::pow(load, static_cast<double>(c)) / z;
    if (empty <= eps && full <= eps) {
      out.capacity = c;
      return out;
    }
    if (c > 100000000)
      throw std::runtime_error("capacity search did not terminate");
  }
}

double failure_rate(const BuiltNetwork& built, double gamma) {
  double tau = 0.0;
  for (long j : built.station_nodes) {
    const NodeSpec& node = built.net.nodes[static_cast<size_t>(j)];
    const double rho = gamma * built.r(j);
    if (node.finite_capacity()) {
      tau += node.service_rate * failure_term(rho, *node.capacity);
    } else {
      if (rho >= 1.0) throw std::domain_error("outside convergence domain");
      tau += node.service_rate * (1.0 - rho);
    }
  }
  return tau;
}

McFailure failure_rate_mc(const BuiltNetwork& built, long customers,
                          long events, std::uint64_t seed) {
  const long N = built.net.size();
  const long J1 = built.stations();
  const bool aggregated = built.routes() == 1 &&
                          built.route_endpoints[0].first < 0;

  // Per-station cumulative destination table (detailed variant).
  std::vector<std::vector<std::pair<double, long>>> dest(
      static_cast<size_t>(J1));
  if (!aggregated) {
    for (long i = 0; i < J1; ++i) {
      double cum = 0.0;
      for (size_t k = 0; k < built.route_nodes.size(); ++k)
        if (built.route_endpoints[k].first == i) {
          cum += built.net.routing(i, built.route_nodes[k]);
          dest[static_cast<size_t>(i)].emplace_back(cum, static_cast<long>(k));
        }
    }
  }

  std::vector<long> n(static_cast<size_t>(N), 0);
  long left = customers;
  for (long j = 0; j < J1 && left > 0; ++j) {
    const long put =
        std::min(left, std::max<long>(built.net.capacity_of(j) / 2, 1));
    n[static_cast<size_t>(j)] = std::min(put, built.net.capacity_of(j));
    left -= n[static_cast<size_t>(j)];
  }
  // Remaining bikes ride.
  for (long k = 0; left > 0; k = (k + 1) % built.routes()) {
    ++n[static_cast<size_t>(built.route_nodes[static_cast<size_t>(k)])];
    --left;
  }

  RateTree tree(N);
  tree.init_raw();
  auto mu = [&](long a) {
    return built.net.nodes[static_cast<size_t>(a)].service_rate;
  };
  double sum_mu_empty = 0.0;
  for (long j = 0; j < J1; ++j) {
    if (n[static_cast<size_t>(j)] > 0)
      tree.set(j, mu(j));
    else
      sum_mu_empty += mu(j);
  }
  for (long rn : built.route_nodes)
    tree.set(rn, mu(rn) * static_cast<double>(n[static_cast<size_t>(rn)]));

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const long warmup = events / 10;

  McFailure out;
  double empty_integral = 0.0;
  long blocked = 0;

  auto leave_station = [&](long j) {
    if (--n[static_cast<size_t>(j)] == 0) {
      tree.set(j, 0.0);
      sum_mu_empty += mu(j);
    }
  };
  auto enter_station = [&](long j) {
    if (++n[static_cast<size_t>(j)] == 1) {
      tree.set(j, mu(j));
      sum_mu_empty -= mu(j);
    }
  };
  auto add_route = [&](long rn, long delta) {
    n[static_cast<size_t>(rn)] += delta;
    tree.set(rn, mu(rn) * static_cast<double>(n[static_cast<size_t>(rn)]));
  };
  auto pick_route_from = [&](long j) -> long {
    const auto& row = dest[static_cast<size_t>(j)];
    const double u = unif(rng) * row.back().first;
    auto it = std::lower_bound(
        row.begin(), row.end(), u,
        [](const std::pair<double, long>& a, double v) { return a.first < v; });
    return built.route_nodes[static_cast<size_t>(it->second)];
  };

  for (long ev = 0; ev < events; ++ev) {
    const double total = tree.total();
    if (total <= 0.0) throw std::runtime_error("absorbing state reached");
    const double dt = -std::log1p(-unif(rng)) / total;
    const bool measured = ev >= warmup;
    if (measured) {
      out.total_time += dt;
      empty_integral += dt * sum_mu_empty;
    }

    const long a = tree.sample(unif(rng) * total);
    if (a < J1) {
      // A user picks a bike at station a and rides off.
      leave_station(a);
      add_route(aggregated ? built.route_nodes[0] : pick_route_from(a), 1);
    } else {
      // A ride on route a ends.
      long j;
      if (aggregated) {
        const double u = unif(rng);
        double cum = 0.0;
        j = J1 - 1;
        for (long s = 0; s < J1; ++s) {
          cum += built.net.routing(a, s);
          if (u <= cum) {
            j = s;
            break;
          }
        }
      } else {
        j = built.route_endpoints[static_cast<size_t>(
                                      std::find(built.route_nodes.begin(),
                                                built.route_nodes.end(), a) -
                                      built.route_nodes.begin())]
                .second;
      }
      if (n[static_cast<size_t>(j)] < built.net.capacity_of(j)) {
        add_route(a, -1);
        enter_station(j);
      } else {
        if (measured) ++blocked;
        if (aggregated) {
          // Blocking: the move is cancelled, the ride renews.
        } else {
          // Rerouting: instantly pick a fresh route out of j.
          add_route(a, -1);
          add_route(pick_route_from(j), 1);
        }
      }
    }
    ++out.events;
  }

  if (out.total_time > 0.0) {
    out.empty_rate = empty_integral / out.total_time;
    out.blocked_rate = static_cast<double>(blocked) / out.total_time;
  }
  out.tau = out.empty_rate + out.blocked_rate;
  return out;
}

SizingResult optimize_fleet(const BuiltNetwork& built) {
  for (long j : built.station_nodes)
    if (!built.net.nodes[static_cast<size_t>(j)].finite_capacity())
      throw std::invalid_argument("fleet optimization needs finite stations");

  double total_cap = 0.0;
  for (long j : built.station_nodes)
    total_cap += static_cast<double>(
        *built.net.nodes[static_cast<size_t>(j)].capacity);

  auto station_mean = [&](double gamma) {
    double m = 0.0;
    for (long j : built.station_nodes)
      m += moments(FreeMarginal{TruncatedGeometric{
                       gamma * built.r(j),
                       *built.net.nodes[static_cast<size_t>(j)].capacity}})
               .mean;
    return m;
  };

  const double gamma_lo = solve_gamma(built.net, built.theta, 1.0);
  double gamma_hi = std::max(1.0, 2.0 * gamma_lo);
  while (station_mean(gamma_hi) < 0.95 * total_cap) gamma_hi *= 2.0;

  auto objective = [&](double g) { return failure_rate(built, g); };

  const double golden = 0.6180339887498949;
  double best_g = gamma_lo, best_tau = objective(gamma_lo);
  const double width = gamma_hi - gamma_lo;
  for (int seed = 0; seed < 8; ++seed) {
    double a = gamma_lo + width * static_cast<double>(seed) / 8.0;
    double b = gamma_lo + width * static_cast<double>(seed + 1) / 8.0;
    double x1 = b - golden * (b - a), x2 = a + golden * (b - a);
    double f1 = objective(x1), f2 = objective(x2);
    while (b - a > 1e-6 * std::max(1.0, b)) {
      if (f1 < f2) {
        b = x2;
        x2 = x1;
        f2 = f1;
        x1 = b - golden * (b - a);
        f1 = objective(x1);
      } else {
        a = x1;
        x1 = x2;
        f1 = f2;
        x2 = a + golden * (b - a);
        f2 = objective(x2);
      }
    }
    const double g = 0.5 * (a + b), tau = objective(g);
    if (tau < best_tau - 1e-15 ||
        (tau <= best_tau + 1e-15 && g < best_g)) {
      best_tau = tau;
      best_g = g;
    }
  }

  SizingResult out;
  out.gamma = best_g;
  out.tau = best_tau;
  out.fleet_real = mean_total(built.net, built.theta, best_g);
  out.fleet = std::lround(out.fleet_real);
  for (long j : built.station_nodes) {
    const long c = *built.net.nodes[static_cast<size_t>(j)].capacity;
    const double rho = best_g * built.r(j);
    StationSizing s;
    s.capacity = c;
    if (rho <= 1.0) {
      const double z = trunc_norm(rho, c);
      s.empty_prob = 1.0 / z;
      s.full_prob = std::pow(rho, static_cast<double>(c)) / z;
    } else {
      const double z = trunc_norm(1.0 / rho, c);
      s.full_prob = 1.0 / z;
      s.empty_prob = std::pow(1.0 / rho, static_cast<double>(c)) / z;
    }
    out.per_station.push_back(s);
  }
  return out;
}

Eigen::MatrixXd rerouting_solution(const Eigen::MatrixXd& Q,
                                   const Eigen::VectorXd& nu, long j,
                                   WFamily family) {
  const long J1 = Q.rows();
  Eigen::MatrixXd W = Eigen::MatrixXd::Zero(J1, J1);
  if (family == WFamily::Identity) {
    for (long i = 0; i < J1; ++i) W(i, i) = 1.0;
    if (validate_w(Q, nu, j, W) > 1e-12)
      throw std::runtime_error("identity is not a solution");
    return W;
  }
  for (long i = 0; i < J1; ++i) {
    if (i == j) continue;
    for (long k = 0; k < J1; ++k)
      if (k != j) W(i, k) = Q(j, k);
  }
  return W;
}

double validate_w(const Eigen::MatrixXd& Q, const Eigen::VectorXd& nu, long j,
                  const Eigen::MatrixXd& W) {
  const long J1 = Q.rows();
  double worst = 0.0;
  for (long k = 0; k < J1; ++k) {
    if (k == j) continue;
    double inflow = 0.0;
    for (long i = 0; i < J1; ++i)
      if (i != j) inflow += nu(i) * Q(i, j) * W(i, k);
    worst = std::max(worst, std::abs(nu(j) * Q(j, k) - inflow));
  }
  return worst;
}

StateDependentProvider build_rerouting_provider(
    const BuiltNetwork& built, const std::vector<Eigen::MatrixXd>& W) {
  const long J1 = built.stations();
  if (static_cast<long>(W.size()) != J1)
    throw std::invalid_argument("need one W matrix per station");

  // Recover Q and nu from the built network.
  Eigen::MatrixXd Q = Eigen::MatrixXd::Zero(J1, J1);
  for (size_t k = 0; k < built.route_nodes.size(); ++k) {
    const auto [i, j] = built.route_endpoints[k];
    Q(i, j) = built.net.routing(i, built.route_nodes[k]);
  }
  const Eigen::VectorXd nu = 2.0 * built.theta.head(J1);
  for (long j = 0; j < J1; ++j)
    if (validate_w(Q, nu, j, W[static_cast<size_t>(j)]) > 1e-12)
      throw std::invalid_argument("invalid rerouting matrix");

  BuiltNetwork snapshot = built;  // keep the topology alive in the closure
  std::vector<Eigen::MatrixXd> Ws = W;
  return [snapshot = std::move(snapshot),
          Ws = std::move(Ws)](const std::vector<long>& m) {
    const NetworkSpec& net = snapshot.net;
    const long N = net.size();
    const long J1 = snapshot.stations();
    Eigen::MatrixXd P = Eigen::MatrixXd::Zero(N, N);
    for (long i = 0; i < J1; ++i) {
      if (m[static_cast<size_t>(i)] >= net.capacity_of(i)) continue;
      for (size_t k = 0; k < snapshot.route_nodes.size(); ++k)
        if (snapshot.route_endpoints[k].first == i)
          P(i, snapshot.route_nodes[k]) =
              net.routing(i, snapshot.route_nodes[k]);
    }
    for (size_t k = 0; k < snapshot.route_nodes.size(); ++k) {
      const long rn = snapshot.route_nodes[k];
      const auto [i, j] = snapshot.route_endpoints[k];
      if (m[static_cast<size_t>(j)] < net.capacity_of(j)) {
        P(rn, j) = 1.0;
        continue;
      }
      const Eigen::MatrixXd& Wj = Ws[static_cast<size_t>(j)];
      for (long t = 0; t < J1; ++t) {
        if (t == j || Wj(i, t) <= 0.0) continue;
        const long target = static_cast<long>(snapshot.route_index(j, t));
        if (target < 0)
          throw std::runtime_error("rerouting matrix targets a missing route");
        P(rn, target) = Wj(i, t);
      }
    }
    return P;
  };
}

RegimeReport regime_diagnostics(const BuiltNetwork& built,
                                      double customers) {
  RegimeReport rep;
  double rmin = std::numeric_limits<double>::infinity(), rmax = 0.0;
  for (long j : built.station_nodes) {
    rmin = std::min(rmin, built.r(j));
    rmax = std::max(rmax, built.r(j));
  }
  rep.station_r_ratio = rmax > 0.0 ? rmin / rmax : 0.0;

  double route_rmax = 0.0;
  for (long rn : built.route_nodes) route_rmax = std::max(route_rmax, built.r(rn));
  rep.route_criterion =
      route_rmax /
      (std::sqrt(static_cast<double>(built.stations())) * rmax);

  rep.capacities_bounded = true;
  rep.mu_min = std::numeric_limits<double>::infinity();
  rep.mu_max = 0.0;
  for (const NodeSpec& node : built.net.nodes) {
    rep.mu_min = std::min(rep.mu_min, node.service_rate);
    rep.mu_max = std::max(rep.mu_max, node.service_rate);
  }
  for (long j : built.station_nodes)
    if (!built.net.nodes[static_cast<size_t>(j)].finite_capacity())
      rep.capacities_bounded = false;
    else
      rep.max_capacity = std::max(
          rep.max_capacity, *built.net.nodes[static_cast<size_t>(j)].capacity);

  double max_route_weight = 0.0;
  for (long rn : built.route_nodes)
    max_route_weight = std::max(max_route_weight, 2.0 * built.theta(rn));
  rep.route_weight_criterion =
      static_cast<double>(built.routes()) * max_route_weight;

  const double j2 = static_cast<double>(built.routes());
  rep.customers_over_routes_sq = customers / (j2 * j2);
  rep.gamma = solve_gamma(built.net, built.theta, customers);
  rep.gamma_over_customers = customers > 0.0 ? rep.gamma / customers : 0.0;
  rep.finite_capacity_regime = rep.capacities_bounded &&
                               rep.customers_over_routes_sq < 1.0;
  return rep;
}

}  // namespace jackson
