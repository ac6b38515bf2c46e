#include "jackson/cli.hpp"

#include "jackson/config.hpp"
#include "jackson/dynamics.hpp"
#include "jackson/ensemble.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <string>

namespace jackson {

namespace {

using nlohmann::json;

long env_state_cap(long fallback) {
  const char* v = std::getenv("JACKSON_STATE_CAP");
  if (!v) return fallback;
  char* end = nullptr;
  const long parsed = std::strtol(v, &end, 10);
  return (end && *end == '\0' && parsed > 0) ? parsed : fallback;
}

void emit(const std::string& text, const std::string& out_path,
          std::ostream& out) {
  if (out_path.empty()) {
    out << text;
    return;
  }
  std::ofstream f(out_path);
  if (!f) throw ConfigError(out_path + ": cannot open output file");
  f << text;
}

void emit_json(const json& rep, const std::string& out_path,
               std::ostream& out) {
  emit(rep.dump(2) + "\n", out_path, out);
}

int classify(const std::exception& e) {
  const std::string msg = e.what();
  if (msg.find("product form not guaranteed") != std::string::npos)
    return kNoProductForm;
  if (msg.find("no finite gamma") != std::string::npos ||
      msg.find("infeasible customer count") != std::string::npos ||
      msg.find("M exceeds total capacity") != std::string::npos ||
      msg.find("exceedance does not vanish") != std::string::npos ||
      msg.find("outside convergence domain") != std::string::npos)
    return kInfeasible;
  if (msg.find("state space too large") != std::string::npos ||
      msg.find("state-space cap") != std::string::npos)
    return kStateCap;
  if (msg.find("absorbing state") != std::string::npos) return kAbsorbing;
  return kInvalid;
}

double gaussian_density(double x, double mean, double var) {
  if (!(var > 0.0)) return 0.0;
  return std::exp(-(x - mean) * (x - mean) / (2.0 * var)) /
         std::sqrt(2.0 * M_PI * var);
}

struct CommonOpts {
  std::string path;
  std::string out_path;
  std::string format = "json";
};

int cmd_validate(const CommonOpts& o, std::ostream& out) {
  json rep;
  rep["valid"] = false;
  rep["errors"] = json::array();
  int code = kOk;
  try {
    const LoadedConfig cfg = load_config(o.path);
    if (cfg.kind == LoadedConfig::Kind::Generic) {
      const auto errors = validate_network(cfg.net);
      for (const auto& e : errors) rep["errors"].push_back(e);
      if (!errors.empty()) {
        code = kInvalid;
      } else {
        const Eigen::VectorXd theta = invariant_vector(cfg.net.routing);
        if (cfg.net.policy == Policy::Blocking &&
            !check_reversibility(cfg.net.routing, theta)) {
          rep["errors"].push_back(
              "product form not guaranteed: non-reversible routing");
          code = kNoProductForm;
        }
      }
    } else {
      const Realized rz = realize(cfg);
      if (cfg.has_W) build_rerouting_provider(rz.built, cfg.W);
    }
  } catch (const std::exception& e) {
    rep["errors"].push_back(e.what());
    code = classify(e);
  }
  rep["valid"] = code == kOk;
  emit_json(rep, o.out_path, out);
  return code;
}

json diagnostics_json(const ConditionReport& d) {
  return json{{"max_single_server_load", d.max_single_server_load},
              {"capacities_bounded", d.capacities_bounded},
              {"max_capacity", d.max_capacity},
              {"b", d.b},
              {"prefix_infinite_server_term", d.prefix_infinite_server_term},
              {"prefix_term_flagged", d.prefix_term_flagged},
              {"near_critical", d.near_critical}};
}

int cmd_gamma(const CommonOpts& o, double customers, std::ostream& out) {
  const Realized rz = realize(load_config(o.path));
  const double gamma =
      customers == 0.0 ? 0.0 : solve_gamma(rz.net, rz.theta, customers);
  const GrandCanonical gc = grand_canonical(rz.net, rz.theta, gamma);
  json rep;
  rep["method"] = "grand-canonical";
  rep["customers"] = customers;
  rep["gamma"] = gamma;
  rep["mean"] = gc.total_mean;
  rep["variance"] = gc.total_var;
  rep["residual"] = std::abs(gc.total_mean - customers);
  rep["diagnostics"] =
      diagnostics_json(condition_diagnostics(rz.net, rz.theta, gamma,
                                             rz.net.size()));
  if (o.format == "csv") {
    std::ostringstream csv;
    csv << "key,value,method\n";
    for (const char* k : {"customers", "gamma", "mean", "variance", "residual"})
      csv << k << "," << rep[k].get<double>() << ",grand-canonical\n";
    emit(csv.str(), o.out_path, out);
  } else {
    emit_json(rep, o.out_path, out);
  }
  return kOk;
}

int cmd_marginals(const CommonOpts& o, long customers, std::vector<long> nodes,
                  const std::string& mode, std::ostream& out,
                  std::ostream& err) {
  const LoadedConfig cfg = load_config(o.path);
  const Realized rz = realize(cfg);
  const long N = rz.net.size();
  if (nodes.empty())
    for (long j = 0; j < N; ++j) nodes.push_back(j);
  for (long j : nodes)
    if (j < 0 || j >= N) throw ConfigError("--nodes: index out of range");

  const double gamma = customers == 0
                           ? 0.0
                           : solve_gamma(rz.net, rz.theta,
                                         static_cast<double>(customers));
  const GrandCanonical gc = grand_canonical(rz.net, rz.theta, gamma);

  json rep;
  rep["customers"] = customers;
  rep["gamma"] = gamma;
  json table = json::array();

  if (mode == "exact") {
    const double cells = 2.0 * static_cast<double>(N) *
                         (static_cast<double>(customers) + 1.0);
    if (cells > static_cast<double>(env_state_cap(50000000))) {
      err << "state-space cap exceeded; rerun with --mode gc\n";
      return kStateCap;
    }
    rep["method"] = "exact-dp";
    const CanonicalLaw law(rz.net, rz.theta, customers, gamma);
    const double gamma2 = gamma > 0.0 ? 0.5 * gamma : 0.0;
    const CanonicalLaw law2(rz.net, rz.theta, customers, gamma2);
    double gauge = 0.0;
    for (long j : nodes) {
      const std::vector<double> p1 = law.node_marginal(j);
      const std::vector<double> p2 = law2.node_marginal(j);
      json rows = json::array();
      for (long n = 0; n <= customers; ++n) {
        const double a = p1[static_cast<size_t>(n)];
        const double b = p2[static_cast<size_t>(n)];
        const double diff =
            a > 1e-12 ? std::abs(a - b) / a : std::abs(a - b);
        gauge = std::max(gauge, diff);
        if (a > 0.0 || n == 0)
          rows.push_back({{"n", n}, {"p", a}, {"method", "exact-dp"}});
      }
      table.push_back({{"node", j},
                       {"table", rows},
                       {"tv_vs_gc", marginal_total_variation(law, j)},
                       {"method", "exact-dp"}});
    }
    rep["gauge_discrepancy"] = gauge;
  } else if (mode == "gc") {
    rep["method"] = "grand-canonical";
    for (long j : nodes) {
      const FreeMarginal& d = gc.marginals[static_cast<size_t>(j)];
      const long up = support_upper(d, customers, 1e-15);
      json rows = json::array();
      for (long n = 0; n <= up; ++n)
        rows.push_back(
            {{"n", n}, {"p", pmf(d, n)}, {"method", "grand-canonical"}});
      table.push_back(
          {{"node", j}, {"table", rows}, {"method", "grand-canonical"}});
    }
  } else if (mode == "llt") {
    rep["method"] = "llt";
    const double a = gc.total_mean, b2 = gc.total_var;
    for (long j : nodes) {
      const FreeMarginal& d = gc.marginals[static_cast<size_t>(j)];
      const MomentSummary mom = moments(d);
      const double rem_mean = a - mom.mean;
      const double rem_var = b2 - mom.variance;
      const long up = support_upper(d, customers, 1e-15);
      const double denom =
          gaussian_density(static_cast<double>(customers), a, b2);
      json rows = json::array();
      if (rem_var > 0.0 && denom > 0.0)
        for (long n = 0; n <= up; ++n)
          rows.push_back(
              {{"n", n},
               {"p", pmf(d, n) *
                         gaussian_density(static_cast<double>(customers - n),
                                          rem_mean, rem_var) /
                         denom},
               {"method", "llt"}});
      table.push_back({{"node", j}, {"table", rows}, {"method", "llt"}});
    }
    const long span = std::max<long>(1, std::lround(4.0 * std::sqrt(b2)));
    const long k_lo = std::max<long>(0, std::lround(a) - span);
    const long k_hi = std::lround(a) + span;
    const LltReport llt = llt_report(gc, k_lo, k_hi, 1e-18);
    json sum_rows = json::array();
    for (const auto& e : llt.entries)
      sum_rows.push_back({{"k", e.k},
                          {"exact", e.exact},
                          {"gaussian", e.gaussian},
                          {"deviation", e.deviation}});
    rep["sum_table"] = {{"a", llt.a},
                       {"b", llt.b},
                       {"sup_deviation", llt.sup_deviation},
                       {"entries", sum_rows},
                       {"method", "llt"}};
  } else {
    throw ConfigError("--mode: must be exact, gc, or llt");
  }

  rep["nodes"] = table;
  if (o.format == "csv") {
    std::ostringstream csv;
    csv << "node,n,probability,method\n";
    for (const auto& nd : table)
      for (const auto& row : nd["table"])
        csv << nd["node"].get<long>() << "," << row["n"].get<long>() << ","
            << row["p"].get<double>() << ","
            << row["method"].get<std::string>() << "\n";
    emit(csv.str(), o.out_path, out);
  } else {
    emit_json(rep, o.out_path, out);
  }
  return kOk;
}

int cmd_simulate(const CommonOpts& o, long customers, long events,
                 std::uint64_t seed, long replicas, std::ostream& out) {
  const LoadedConfig cfg = load_config(o.path);
  Realized rz = realize(cfg);
  rz.net.customers = customers;

  StateDependentProvider provider;
  if (rz.is_bike && cfg.has_W) {
    rz.built.net.customers = customers;
    provider = build_rerouting_provider(rz.built, cfg.W);
    rz.net.policy = Policy::StateDependent;
  }

  const long N = rz.net.size();
  Eigen::MatrixXd means(replicas, N);
  Eigen::VectorXd se = Eigen::VectorXd::Zero(N);
  Eigen::VectorXd empty = Eigen::VectorXd::Zero(N);
  Eigen::VectorXd full = Eigen::VectorXd::Zero(N);
  for (long rep = 0; rep < replicas; ++rep) {
    const SimResult s = simulate(rz.net, rz.theta, events,
                                 seed + static_cast<std::uint64_t>(rep),
                                 provider);
    means.row(rep) = s.mean_occupancy.transpose();
    empty += s.empty_fraction / static_cast<double>(replicas);
    full += s.full_fraction / static_cast<double>(replicas);
    if (replicas == 1) se = s.std_error;
  }
  const Eigen::VectorXd mean = means.colwise().mean().transpose();
  if (replicas > 1)
    for (long j = 0; j < N; ++j) {
      const double ss = (means.col(j).array() - mean(j)).square().sum();
      se(j) = std::sqrt(ss / static_cast<double>(replicas * (replicas - 1)));
    }

  json rep;
  rep["method"] = "mc";
  rep["customers"] = customers;
  rep["events"] = events;
  rep["seed"] = seed;
  rep["replicas"] = replicas;
  json nodes = json::array();
  for (long j = 0; j < N; ++j)
    nodes.push_back({{"node", j},
                     {"mean", mean(j)},
                     {"std_error", se(j)},
                     {"empty_fraction", empty(j)},
                     {"full_fraction", full(j)},
                     {"method", "mc"}});
  rep["nodes"] = nodes;
  emit_json(rep, o.out_path, out);
  return kOk;
}

int cmd_bike_size_fleet(const CommonOpts& o, const BuiltNetwork& built,
                        double delta, std::ostream& out) {
  const FleetChoice fc = fleet_from_delta(built, delta);
  json rep;
  rep["method"] = "grand-canonical";
  rep["delta"] = delta;
  rep["gamma"] = fc.gamma;
  rep["fleet_real"] = fc.fleet_real;
  rep["fleet"] = fc.fleet;
  json stations = json::array();
  for (long j : built.station_nodes) {
    const double load = fc.gamma * built.r(j);
    stations.push_back({{"station", j},
                        {"load", load},
                        {"empty_prob", 1.0 - load},
                        {"method", "grand-canonical"}});
  }
  rep["stations"] = stations;
  emit_json(rep, o.out_path, out);
  return kOk;
}

int cmd_bike_size_capacity(const CommonOpts& o, const BuiltNetwork& built,
                           double eps, double delta, std::ostream& out) {
  double rmax = 0.0;
  for (long j : built.station_nodes) rmax = std::max(rmax, built.r(j));
  const double gamma = (1.0 - delta) / rmax;
  json rep;
  rep["method"] = "grand-canonical";
  rep["epsilon"] = eps;
  rep["delta"] = delta;
  rep["gamma"] = gamma;
  long cmax = 0;
  json stations = json::array();
  for (long j : built.station_nodes) {
    const double load = gamma * built.r(j);
    const long cap = capacity_for_overflow(load, eps);
    cmax = std::max(cmax, cap);
    stations.push_back({{"station", j},
                        {"load", load},
                        {"capacity", cap},
                        {"method", "grand-canonical"}});
  }
  rep["stations"] = stations;
  rep["max_capacity"] = cmax;
  if (o.format == "csv") {
    std::ostringstream csv;
    csv << "station,load,capacity,method\n";
    for (const auto& s : stations)
      csv << s["station"].get<long>() << "," << s["load"].get<double>() << ","
          << s["capacity"].get<long>() << ",grand-canonical\n";
    emit(csv.str(), o.out_path, out);
  } else {
    emit_json(rep, o.out_path, out);
  }
  return kOk;
}

int cmd_bike_failure_rate(const CommonOpts& o, const BuiltNetwork& built,
                          long customers, long events, std::uint64_t seed,
                          std::ostream& out) {
  const double gamma = solve_gamma(built.net, built.theta,
                                   static_cast<double>(customers));
  json rep;
  rep["customers"] = customers;
  rep["gamma"] = gamma;
  rep["approx"] = {{"tau", failure_rate(built, gamma)},
                   {"method", "grand-canonical"}};
  if (events > 0) {
    const McFailure mc = failure_rate_mc(built, customers, events, seed);
    rep["mc"] = {{"tau", mc.tau},
                 {"empty_rate", mc.empty_rate},
                 {"blocked_rate", mc.blocked_rate},
                 {"total_time", mc.total_time},
                 {"events", mc.events},
                 {"seed", seed},
                 {"method", "mc"}};
  }
  emit_json(rep, o.out_path, out);
  return kOk;
}

int cmd_bike_optimize(const CommonOpts& o, const BuiltNetwork& built,
                      std::ostream& out) {
  const SizingResult res = optimize_fleet(built);
  json rep;
  rep["method"] = "grand-canonical";
  rep["gamma"] = res.gamma;
  rep["fleet_real"] = res.fleet_real;
  rep["fleet"] = res.fleet;
  rep["tau"] = res.tau;
  rep["residual"] =
      std::abs(mean_total(built.net, built.theta, res.gamma) - res.fleet_real);
  json stations = json::array();
  for (size_t j = 0; j < res.per_station.size(); ++j)
    stations.push_back({{"station", static_cast<long>(j)},
                        {"capacity", res.per_station[j].capacity},
                        {"empty_prob", res.per_station[j].empty_prob},
                        {"full_prob", res.per_station[j].full_prob},
                        {"method", "grand-canonical"}});
  rep["stations"] = stations;
  emit_json(rep, o.out_path, out);
  return kOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out,
            std::ostream& err) {
  CLI::App app{"Closed queueing network toolkit"};
  app.require_subcommand(1);

  CommonOpts o;
  double customers_real = 0.0;
  long customers = 0;
  std::vector<long> nodes;
  std::string mode = "exact";
  long events = 100000;
  std::uint64_t seed = 1;
  long replicas = 1;
  double delta = 0.1;
  double eps = 0.01;

  auto add_common = [&](CLI::App* c) {
    c->add_option("config", o.path, "Network configuration file")->required();
    c->add_option("--out", o.out_path, "Write the report to this path");
    c->add_option("--format", o.format, "json or csv")->default_str("json");
  };

  CLI::App* v = app.add_subcommand("validate", "Check a configuration file");
  add_common(v);

  CLI::App* g = app.add_subcommand("gamma", "Solve for the chemical potential");
  add_common(g);
  g->add_option("--customers", customers_real, "Total customer count")
      ->required();

  CLI::App* m = app.add_subcommand("marginals", "Per-node occupancy laws");
  add_common(m);
  m->add_option("--customers", customers, "Total customer count")->required();
  m->add_option("--nodes", nodes, "Node indices (default: all)");
  m->add_option("--mode", mode, "exact, gc, or llt")->default_str("exact");

  CLI::App* s = app.add_subcommand("simulate", "Event-driven estimation");
  add_common(s);
  s->add_option("--customers", customers, "Total customer count")->required();
  s->add_option("--events", events, "Events per replica");
  s->add_option("--seed", seed, "Base random seed");
  s->add_option("--replicas", replicas, "Independent replicas");

  CLI::App* b = app.add_subcommand("bikeshare", "Fleet and capacity sizing");
  add_common(b);
  b->require_subcommand(1);
  CLI::App* bf = b->add_subcommand("size-fleet", "Fleet from target empty rate");
  bf->add_option("--delta", delta, "Target empty probability")->required();
  CLI::App* bc =
      b->add_subcommand("size-capacity", "Capacity from overflow bound");
  bc->add_option("--epsilon", eps, "Overflow probability bound")->required();
  bc->add_option("--delta", delta, "Empty-rate target fixing gamma");
  CLI::App* bt = b->add_subcommand("failure-rate", "Stationary failure rate");
  bt->add_option("--customers", customers, "Fleet size")->required();
  bt->add_option("--events", events, "Simulation events (0: skip)")
      ->default_val(0);
  bt->add_option("--seed", seed, "Random seed");
  CLI::App* bo = b->add_subcommand("optimize-fleet", "Minimize the failure rate");

  std::vector<const char*> argv;
  argv.push_back("jacksonnet");
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    err << e.what() << "\n";
    return kInvalid;
  }

  try {
    if (app.got_subcommand(v)) return cmd_validate(o, out);
    if (app.got_subcommand(g)) return cmd_gamma(o, customers_real, out);
    if (app.got_subcommand(m))
      return cmd_marginals(o, customers, nodes, mode, out, err);
    if (app.got_subcommand(s))
      return cmd_simulate(o, customers, events, seed, replicas, out);
    if (app.got_subcommand(b)) {
      const LoadedConfig cfg = load_config(o.path);
      if (cfg.kind == LoadedConfig::Kind::Generic)
        throw ConfigError("variant: bikeshare subcommands need a bike-share configuration");
      const Realized rz = realize(cfg);
      if (b->got_subcommand(bf))
        return cmd_bike_size_fleet(o, rz.built, delta, out);
      if (b->got_subcommand(bc))
        return cmd_bike_size_capacity(o, rz.built, eps, delta, out);
      if (b->got_subcommand(bt))
        return cmd_bike_failure_rate(o, rz.built, customers, events, seed, out);
      if (b->got_subcommand(bo)) return cmd_bike_optimize(o, rz.built, out);
    }
  } catch (const std::exception& e) {
    err << e.what() << "\n";
    return classify(e);
  }
  err << "no command\n";
  return kInvalid;
}

}  // namespace jackson
