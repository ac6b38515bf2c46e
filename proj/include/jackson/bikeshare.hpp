#ifndef JACKSON_BIKESHARE_HPP
#define JACKSON_BIKESHARE_HPP

#include "jackson/dynamics.hpp"
#include "jackson/ensemble.hpp"
#include "jackson/netmodel.hpp"

#include <cstdint>
#include <utility>
#include <vector>

namespace jackson {

struct Station {
  double user_rate = 1.0;                       // mu_j, Poisson user arrivals
  std::optional<long> capacity = std::nullopt;  // docking places
};

enum class BikeVariant { Detailed, Aggregated };

struct BikeShareSpec {
  BikeVariant variant = BikeVariant::Detailed;
  std::vector<Station> stations;

  // Detailed: one route node per positive entry of Q.
  Eigen::MatrixXd Q;           // destination probabilities, row-stochastic
  Eigen::MatrixXd ride_rates;  // mu_[ij] > 0 exactly where q_ij > 0

  // Aggregated: all routes collapsed into a single infinite-server node.
  Eigen::VectorXd popularities;  // q_j, positive, sum to 1
  double route_rate = 1.0;       // mu_N
};

/// A bike-share topology mapped onto a closed Jackson network, with the
/// closed-form invariant vector.
struct BuiltNetwork {
  NetworkSpec net;
  Eigen::VectorXd theta;
  Eigen::VectorXd r;  // utilizations theta_a / mu_a
  std::vector<long> station_nodes;
  std::vector<long> route_nodes;
  std::vector<std::pair<long, long>> route_endpoints;  // (i, j) per route node
  Eigen::MatrixXd route_index;  // route_index(i,j) = node id, -1 if absent

  long stations() const { return static_cast<long>(station_nodes.size()); }
  long routes() const { return static_cast<long>(route_nodes.size()); }
};

BuiltNetwork build_detailed(const BikeShareSpec& bs);
BuiltNetwork build_aggregated(const BikeShareSpec& bs);

struct FleetChoice {
  double gamma = 0.0;
  double fleet_real = 0.0;
  long fleet = 0;
};

/// Infinite-capacity sizing: gamma = (1-delta)/max station utilization,
/// fleet = total free-variable mean at that gamma.
FleetChoice fleet_from_delta(const BuiltNetwork& built, double delta);

/// Smallest n with (gamma r)^{n+1} <= eps. Throws for gamma r >= 1.
long capacity_for_overflow(double load, double eps);

struct CapacityResult {
  bool feasible = false;
  long capacity = 0;
  double floor_empty = 0.0;  // infimum of the empty-station approximation
  double floor_full = 0.0;   // infimum of the saturated-station approximation
};

/// Smallest c with both the empty and the full truncated-geometric
/// approximations below eps; infeasibility reported with the floors.
CapacityResult capacity_for_both(double load, double eps);

/// Grand-canonical failure-rate approximation
/// tau = sum_j mu_j (1 + (gamma r_j)^{c_j+1}) / sum_{n<=c_j} (gamma r_j)^n.
double failure_rate(const BuiltNetwork& built, double gamma);

struct McFailure {
  double tau = 0.0;
  double empty_rate = 0.0;    // sum_j mu_j * P_emp(station j empty)
  double blocked_rate = 0.0;  // blocked return attempts per unit time
  double total_time = 0.0;
  long events = 0;
};

/// Event-driven estimate of the failure rate under blocking-rerouting
/// (detailed) or blocking (aggregated). First tenth of events is warmup.
McFailure failure_rate_mc(const BuiltNetwork& built, long customers,
                          long events, std::uint64_t seed);

struct StationSizing {
  long capacity = 0;
  double empty_prob = 0.0;
  double full_prob = 0.0;
};

struct SizingResult {
  double gamma = 0.0;
  double fleet_real = 0.0;
  long fleet = 0;
  double tau = 0.0;
  std::vector<StationSizing> per_station;
};

/// Minimizes the approximate failure rate over gamma (golden-section
/// from several seed brackets) and reports the matching fleet size.
SizingResult optimize_fleet(const BuiltNetwork& built);

enum class WFamily { QRows, Identity };

/// A solution of the rerouting balance equations for station j, as a
/// J1 x J1 matrix (row/column j unused). QRows works for any Q; Identity
/// requires Q reversible and otherwise throws.
Eigen::MatrixXd rerouting_solution(const Eigen::MatrixXd& Q,
                                   const Eigen::VectorXd& nu, long j,
                                   WFamily family);

/// max_k |nu_j q_jk - sum_i nu_i q_ij w_ik|.
double validate_w(const Eigen::MatrixXd& Q, const Eigen::VectorXd& nu, long j,
                  const Eigen::MatrixXd& W);

/// Generalized rerouting provider from per-station W matrices
/// (W[j] applies to users blocked at station j).
StateDependentProvider build_rerouting_provider(
    const BuiltNetwork& built, const std::vector<Eigen::MatrixXd>& W);

struct RegimeReport {
  double station_r_ratio = 0.0;  // min r_j / max r_j over stations
  double route_criterion = 0.0;  // max route r / (sqrt(J1) max station r)
  bool capacities_bounded = false;
  long max_capacity = -1;
  double mu_min = 0.0;
  double mu_max = 0.0;
  double route_weight_criterion = 0.0;  // J2 * max nu_i q_ij
  double customers_over_routes_sq = 0.0;
  double gamma = 0.0;
  double gamma_over_customers = 0.0;
  bool finite_capacity_regime = false;  // hypotheses of the bounded-capacity corollary
};

RegimeReport regime_diagnostics(const BuiltNetwork& built,
                                      double customers);

}  // namespace jackson

#endif
