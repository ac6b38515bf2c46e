#include "jackson/config.hpp"

#include <json.hpp>

#include <fstream>
#include <sstream>

namespace jackson {

namespace {

using nlohmann::json;

[[noreturn]] void fail(const std::string& where, const std::string& what) {
  throw ConfigError(where + ": " + what);
}

double require_positive(const json& v, const std::string& where) {
  if (!v.is_number()) fail(where, "must be a number");
  const double x = v.get<double>();
  if (!(x > 0.0)) fail(where, "must be positive");
  return x;
}

std::optional<long> parse_capacity(const json& v, const std::string& where) {
  if (v.is_string()) {
    if (v.get<std::string>() == "inf") return std::nullopt;
    fail(where, "must be a nonnegative integer or \"inf\"");
  }
  if (!v.is_number_integer() || v.get<long>() < 0)
    fail(where, "must be a nonnegative integer or \"inf\"");
  return v.get<long>();
}

Eigen::MatrixXd parse_matrix(const json& v, long rows, long cols,
                             const std::string& where) {
  Eigen::MatrixXd M = Eigen::MatrixXd::Zero(rows, cols);
  if (!v.is_array()) fail(where, "must be an array");
  const bool sparse = !v.empty() && v[0].is_array() && v[0].size() == 3 &&
                      static_cast<long>(v.size()) != rows;
  const bool dense = !v.empty() && v[0].is_array() &&
                     static_cast<long>(v[0].size()) == cols &&
                     static_cast<long>(v.size()) == rows;
  if (dense) {
    for (long i = 0; i < rows; ++i) {
      const json& row = v[static_cast<size_t>(i)];
      if (!row.is_array() || static_cast<long>(row.size()) != cols)
        fail(where + "[" + std::to_string(i) + "]",
             "must have " + std::to_string(cols) + " entries");
      for (long j = 0; j < cols; ++j) {
        const json& cell = row[static_cast<size_t>(j)];
        if (!cell.is_number())
          fail(where + "[" + std::to_string(i) + "][" + std::to_string(j) + "]",
               "must be a number");
        M(i, j) = cell.get<double>();
      }
    }
    return M;
  }
  if (sparse || v.empty()) {
    for (size_t t = 0; t < v.size(); ++t) {
      const json& trip = v[t];
      const std::string at = where + "[" + std::to_string(t) + "]";
      if (!trip.is_array() || trip.size() != 3)
        fail(at, "triplet must be [row, col, value]");
      if (!trip[0].is_number_integer() || !trip[1].is_number_integer() ||
          !trip[2].is_number())
        fail(at, "triplet must be [row, col, value]");
      const long i = trip[0].get<long>(), j = trip[1].get<long>();
      if (i < 0 || i >= rows || j < 0 || j >= cols)
        fail(at, "index out of range");
      M(i, j) = trip[2].get<double>();
    }
    return M;
  }
  fail(where, "must be a dense matrix or a triplet list");
}

Policy parse_policy(const json& root) {
  if (!root.contains("policy")) return Policy::Standard;
  const json& v = root["policy"];
  if (!v.is_string()) fail("policy", "must be a string");
  const std::string s = v.get<std::string>();
  if (s == "standard") return Policy::Standard;
  if (s == "blocking") return Policy::Blocking;
  if (s == "blocking-rerouting") return Policy::BlockingRerouting;
  if (s == "state-dependent") return Policy::StateDependent;
  fail("policy", "unknown policy \"" + s + "\"");
}

std::vector<Station> parse_stations(const json& root) {
  if (!root.contains("stations")) fail("stations", "missing");
  const json& arr = root["stations"];
  if (!arr.is_array() || arr.empty()) fail("stations", "must be a nonempty array");
  std::vector<Station> out;
  for (size_t i = 0; i < arr.size(); ++i) {
    const std::string at = "stations[" + std::to_string(i) + "]";
    const json& st = arr[i];
    if (!st.is_object()) fail(at, "must be an object");
    Station s;
    if (!st.contains("rate")) fail(at + ".rate", "missing");
    s.user_rate = require_positive(st["rate"], at + ".rate");
    if (st.contains("capacity"))
      s.capacity = parse_capacity(st["capacity"], at + ".capacity");
    out.push_back(s);
  }
  return out;
}

}  // namespace

LoadedConfig parse_config(const std::string& text) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("parse error: ") + e.what());
  }
  if (!root.is_object()) fail("(root)", "must be an object");

  LoadedConfig cfg;
  std::string variant = "generic";
  if (root.contains("variant")) {
    if (!root["variant"].is_string()) fail("variant", "must be a string");
    variant = root["variant"].get<std::string>();
  }

  if (root.contains("customers")) {
    const json& v = root["customers"];
    if (!v.is_number_integer() || v.get<long>() < 0)
      fail("customers", "must be a nonnegative integer");
    cfg.has_customers = true;
    cfg.customers = v.get<long>();
  }

  if (variant == "generic") {
    cfg.kind = LoadedConfig::Kind::Generic;
    if (!root.contains("nodes")) fail("nodes", "missing");
    const json& arr = root["nodes"];
    if (!arr.is_array() || arr.empty()) fail("nodes", "must be a nonempty array");
    for (size_t i = 0; i < arr.size(); ++i) {
      const std::string at = "nodes[" + std::to_string(i) + "]";
      const json& nd = arr[i];
      if (!nd.is_object()) fail(at, "must be an object");
      NodeSpec node;
      if (!nd.contains("rate")) fail(at + ".rate", "missing");
      node.service_rate = require_positive(nd["rate"], at + ".rate");
      if (nd.contains("capacity"))
        node.capacity = parse_capacity(nd["capacity"], at + ".capacity");
      if (nd.contains("kind")) {
        if (!nd["kind"].is_string()) fail(at + ".kind", "must be a string");
        const std::string k = nd["kind"].get<std::string>();
        if (k == "single-server")
          node.kind = NodeKind::SingleServer;
        else if (k == "infinite-server")
          node.kind = NodeKind::InfiniteServer;
        else
          fail(at + ".kind", "unknown kind \"" + k + "\"");
      }
      cfg.net.nodes.push_back(node);
    }
    const long N = cfg.net.size();
    if (!root.contains("routing")) fail("routing", "missing");
    cfg.net.routing = parse_matrix(root["routing"], N, N, "routing");
    cfg.net.policy = parse_policy(root);
    if (cfg.has_customers) cfg.net.customers = cfg.customers;
    return cfg;
  }

  if (variant == "bikeshare-detailed") {
    cfg.kind = LoadedConfig::Kind::BikeDetailed;
    cfg.bike.variant = BikeVariant::Detailed;
    cfg.bike.stations = parse_stations(root);
    const long J1 = static_cast<long>(cfg.bike.stations.size());
    if (!root.contains("Q")) fail("Q", "missing");
    cfg.bike.Q = parse_matrix(root["Q"], J1, J1, "Q");
    if (!root.contains("ride_rates")) fail("ride_rates", "missing");
    cfg.bike.ride_rates = parse_matrix(root["ride_rates"], J1, J1, "ride_rates");
    if (root.contains("W")) {
      const json& ws = root["W"];
      if (!ws.is_array() || static_cast<long>(ws.size()) != J1)
        fail("W", "must be an array with one matrix per station");
      for (size_t j = 0; j < ws.size(); ++j)
        cfg.W.push_back(parse_matrix(ws[j], J1, J1,
                                     "W[" + std::to_string(j) + "]"));
      cfg.has_W = true;
    }
    return cfg;
  }

  if (variant == "bikeshare-aggregated") {
    cfg.kind = LoadedConfig::Kind::BikeAggregated;
    cfg.bike.variant = BikeVariant::Aggregated;
    cfg.bike.stations = parse_stations(root);
    const long J1 = static_cast<long>(cfg.bike.stations.size());
    if (!root.contains("popularities")) fail("popularities", "missing");
    const json& pop = root["popularities"];
    if (!pop.is_array() || static_cast<long>(pop.size()) != J1)
      fail("popularities", "must have one entry per station");
    cfg.bike.popularities = Eigen::VectorXd(J1);
    for (long j = 0; j < J1; ++j)
      cfg.bike.popularities(j) = require_positive(
          pop[static_cast<size_t>(j)],
          "popularities[" + std::to_string(j) + "]");
    if (!root.contains("route_rate")) fail("route_rate", "missing");
    cfg.bike.route_rate = require_positive(root["route_rate"], "route_rate");
    return cfg;
  }

  fail("variant", "unknown variant \"" + variant + "\"");
}

LoadedConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path + ": cannot open file");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str());
}

Realized realize(const LoadedConfig& cfg) {
  Realized out;
  if (cfg.kind == LoadedConfig::Kind::Generic) {
    out.net = cfg.net;
    const auto report = validate_network(out.net);
    if (!report.empty()) throw ConfigError(report.front());
    out.theta = invariant_vector(out.net.routing);
    return out;
  }
  out.is_bike = true;
  out.built = cfg.kind == LoadedConfig::Kind::BikeDetailed
                  ? build_detailed(cfg.bike)
                  : build_aggregated(cfg.bike);
  if (cfg.has_customers) out.built.net.customers = cfg.customers;
  out.net = out.built.net;
  out.theta = out.built.theta;
  return out;
}

}  // namespace jackson
