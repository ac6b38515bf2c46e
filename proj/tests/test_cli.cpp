#include <doctest.h>

#include "jackson/cli.hpp"

#include <json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace jackson;
using nlohmann::json;

namespace {

std::string write_temp(const std::string& name, const std::string& text) {
  const auto path = std::filesystem::temp_directory_path() / name;
  std::ofstream f(path);
  f << text;
  return path.string();
}

struct RunResult {
  int code;
  std::string out;
  std::string err;
};

RunResult run(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

const char* kAggregated = R"({
  "variant": "bikeshare-aggregated",
  "stations": [{"rate": 1.0, "capacity": 5}, {"rate": 1.0, "capacity": 5},
               {"rate": 1.0, "capacity": 5}, {"rate": 1.0, "capacity": 5}],
  "popularities": [0.25, 0.25, 0.25, 0.25],
  "route_rate": 2.0
})";

const char* kAggregatedInf = R"({
  "variant": "bikeshare-aggregated",
  "stations": [{"rate": 1.0}, {"rate": 1.0}, {"rate": 1.0}, {"rate": 1.0}],
  "popularities": [0.25, 0.25, 0.25, 0.25],
  "route_rate": 2.0
})";

const char* kTwoNode = R"({
  "variant": "generic",
  "nodes": [{"rate": 1.0}, {"rate": 1.0}],
  "routing": [[0.0, 1.0], [1.0, 0.0]]
})";

const char* kSingleNode = R"({
  "variant": "generic",
  "nodes": [{"rate": 1.0}],
  "routing": [[1.0]]
})";

}  // namespace

TEST_CASE("validate: accepts a correct aggregated configuration") {
  const std::string p = write_temp("cli_agg.json", kAggregated);
  const RunResult r = run({"validate", p});
  CHECK(r.code == 0);
  CHECK(json::parse(r.out)["valid"] == true);
}

TEST_CASE("validate: non-stochastic routing row is named, exit 2") {
  const std::string p = write_temp("cli_badrow.json", R"({
    "variant": "generic",
    "nodes": [{"rate": 1.0}, {"rate": 1.0}],
    "routing": [[0.0, 1.0], [0.9, 0.0]]
  })");
  const RunResult r = run({"validate", p});
  CHECK(r.code == 2);
  const json rep = json::parse(r.out);
  CHECK(rep["valid"] == false);
  bool named = false;
  for (const auto& e : rep["errors"])
    if (e.get<std::string>().find("row 1") != std::string::npos) named = true;
  CHECK(named);
}

TEST_CASE("validate: blocking on a non-reversible routing is refused, exit 3") {
  const std::string p = write_temp("cli_cycle.json", R"({
    "variant": "generic",
    "nodes": [{"rate": 1.0, "capacity": 2}, {"rate": 1.0, "capacity": 2},
              {"rate": 1.0, "capacity": 2}],
    "routing": [[0.0, 1.0, 0.0], [0.0, 0.0, 1.0], [1.0, 0.0, 0.0]],
    "policy": "blocking"
  })");
  const RunResult r = run({"validate", p});
  CHECK(r.code == 3);
  const json rep = json::parse(r.out);
  bool msg = false;
  for (const auto& e : rep["errors"])
    if (e.get<std::string>().find("product form not guaranteed") !=
        std::string::npos)
      msg = true;
  CHECK(msg);
}

TEST_CASE("validate: malformed fields carry their address") {
  const std::string p = write_temp("cli_field.json", R"({
    "variant": "generic",
    "nodes": [{"rate": 1.0}, {"rate": -2.0}],
    "routing": [[0.0, 1.0], [1.0, 0.0]]
  })");
  const RunResult r = run({"validate", p});
  CHECK(r.code == 2);
  const json rep = json::parse(r.out);
  CHECK(rep["errors"][0].get<std::string>().find("nodes[1].rate") !=
        std::string::npos);
}

TEST_CASE("gamma: zero customers give gamma zero") {
  const std::string p = write_temp("cli_two.json", kTwoNode);
  const RunResult r = run({"gamma", p, "--customers", "0"});
  CHECK(r.code == 0);
  const json rep = json::parse(r.out);
  CHECK(rep["gamma"] == 0.0);
  CHECK(rep["method"] == "grand-canonical");
}

TEST_CASE("gamma: single geometric node at M=4 gives 0.8") {
  const std::string p = write_temp("cli_single.json", kSingleNode);
  const RunResult r = run({"gamma", p, "--customers", "4"});
  CHECK(r.code == 0);
  const json rep = json::parse(r.out);
  CHECK(rep["gamma"].get<double>() == doctest::Approx(0.8).epsilon(1e-10));
  CHECK(rep["residual"].get<double>() <= 1e-10);
}

TEST_CASE("gamma: all-finite network at full capacity exits 4") {
  const std::string p = write_temp("cli_full.json", R"({
    "variant": "generic",
    "nodes": [{"rate": 1.0, "capacity": 2}, {"rate": 1.0, "capacity": 2}],
    "routing": [[0.0, 1.0], [1.0, 0.0]],
    "policy": "blocking"
  })");
  const RunResult r = run({"gamma", p, "--customers", "4"});
  CHECK(r.code == 4);
  CHECK(r.err.find("no finite gamma") != std::string::npos);
}

TEST_CASE("marginals: two symmetric nodes at M=2 are uniform, gauge-checked") {
  const std::string p = write_temp("cli_two.json", kTwoNode);
  const RunResult r =
      run({"marginals", p, "--customers", "2", "--mode", "exact"});
  CHECK(r.code == 0);
  const json rep = json::parse(r.out);
  CHECK(rep["method"] == "exact-dp");
  CHECK(rep["gauge_discrepancy"].get<double>() <= 1e-12);
  for (const auto& node : rep["nodes"]) {
    CHECK(node["tv_vs_gc"].get<double>() >= 0.0);
    for (const auto& row : node["table"])
      CHECK(row["p"].get<double>() ==
            doctest::Approx(1.0 / 3.0).epsilon(1e-10));
  }
}

TEST_CASE("marginals: gc mode reports the free truncated-geometric tables") {
  const std::string p = write_temp("cli_agg.json", kAggregated);
  const RunResult r = run({"marginals", p, "--customers", "10", "--mode", "gc",
                           "--nodes", "0"});
  CHECK(r.code == 0);
  const json rep = json::parse(r.out);
  CHECK(rep["method"] == "grand-canonical");
  const json& table = rep["nodes"][0]["table"];
  REQUIRE(table.size() == 6);  // capacity five: support {0,...,5}
  // Successive ratios all equal the load gamma r.
  const double ratio =
      table[1]["p"].get<double>() / table[0]["p"].get<double>();
  double total = 0.0;
  for (size_t n = 0; n + 1 < table.size(); ++n)
    CHECK(table[n + 1]["p"].get<double>() / table[n]["p"].get<double>() ==
          doctest::Approx(ratio).epsilon(1e-10));
  for (const auto& row : table) total += row["p"].get<double>();
  CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("marginals: exact and gc agree closely on a large symmetric network") {
  const std::string p = write_temp("cli_agg.json", kAggregated);
  const RunResult ex =
      run({"marginals", p, "--customers", "12", "--mode", "exact", "--nodes", "0"});
  const RunResult gc =
      run({"marginals", p, "--customers", "12", "--mode", "gc", "--nodes", "0"});
  REQUIRE(ex.code == 0);
  REQUIRE(gc.code == 0);
  const json et = json::parse(ex.out)["nodes"][0];
  CHECK(et["tv_vs_gc"].get<double>() < 0.2);
}

TEST_CASE("marginals: state cap from the environment forces exit 5") {
  const std::string p = write_temp("cli_two.json", kTwoNode);
  setenv("JACKSON_STATE_CAP", "4", 1);
  const RunResult r =
      run({"marginals", p, "--customers", "50", "--mode", "exact"});
  unsetenv("JACKSON_STATE_CAP");
  CHECK(r.code == 5);
  CHECK(r.err.find("gc") != std::string::npos);
}

TEST_CASE("marginals: csv output is a flat re-parseable table") {
  const std::string p = write_temp("cli_two.json", kTwoNode);
  const RunResult r = run({"marginals", p, "--customers", "2", "--mode", "gc",
                           "--format", "csv"});
  CHECK(r.code == 0);
  std::istringstream lines(r.out);
  std::string header;
  std::getline(lines, header);
  CHECK(header == "node,n,probability,method");
  std::string row;
  int rows = 0;
  while (std::getline(lines, row)) {
    CHECK(row.find("grand-canonical") != std::string::npos);
    ++rows;
  }
  CHECK(rows > 0);
}

TEST_CASE("simulate: identical seeds give byte-identical reports") {
  const std::string p = write_temp("cli_agg.json", kAggregated);
  const RunResult a = run({"simulate", p, "--customers", "8", "--events",
                           "20000", "--seed", "5"});
  const RunResult b = run({"simulate", p, "--customers", "8", "--events",
                           "20000", "--seed", "5"});
  CHECK(a.code == 0);
  CHECK(a.out == b.out);
  const json rep = json::parse(a.out);
  CHECK(rep["method"] == "mc");
  for (const auto& node : rep["nodes"]) CHECK(node["std_error"].get<double>() > 0.0);
}

TEST_CASE("simulate: pooled error shrinks like the square root of the replicas") {
  const std::string p = write_temp("cli_agg.json", kAggregated);
  const RunResult one = run({"simulate", p, "--customers", "8", "--events",
                             "40000", "--seed", "5", "--replicas", "1"});
  const RunResult many = run({"simulate", p, "--customers", "8", "--events",
                              "40000", "--seed", "5", "--replicas", "4"});
  REQUIRE(one.code == 0);
  REQUIRE(many.code == 0);
  const json rep1 = json::parse(one.out);
  const json rep4 = json::parse(many.out);
  double se1 = 0.0, se4 = 0.0;
  for (const auto& node : rep1["nodes"]) se1 += node["std_error"].get<double>();
  for (const auto& node : rep4["nodes"]) se4 += node["std_error"].get<double>();
  // Four replicas cut the pooled error roughly in half.
  CHECK(se4 < se1);
  CHECK(se4 > 0.15 * se1);
}

TEST_CASE("bikeshare size-fleet: equal utilizations hit the target exactly") {
  const std::string p = write_temp("cli_agg_inf.json", kAggregatedInf);
  const RunResult r = run({"bikeshare", p, "size-fleet", "--delta", "0.1"});
  CHECK(r.code == 0);
  const json rep = json::parse(r.out);
  CHECK(rep["method"] == "grand-canonical");
  for (const auto& s : rep["stations"])
    CHECK(s["empty_prob"].get<double>() ==
          doctest::Approx(0.1).epsilon(1e-12));
}

TEST_CASE("bikeshare size-capacity: the 43-dock example") {
  const std::string p = write_temp("cli_agg_inf.json", kAggregatedInf);
  const RunResult r = run({"bikeshare", p, "size-capacity", "--epsilon", "0.01",
                           "--delta", "0.1"});
  CHECK(r.code == 0);
  const json rep = json::parse(r.out);
  CHECK(rep["max_capacity"] == 43);
}

TEST_CASE("bikeshare failure-rate: approximation plus tagged simulation") {
  const std::string p = write_temp("cli_agg.json", kAggregated);
  const RunResult r = run({"bikeshare", p, "failure-rate", "--customers", "10",
                           "--events", "50000", "--seed", "9"});
  CHECK(r.code == 0);
  const json rep = json::parse(r.out);
  CHECK(rep["approx"]["method"] == "grand-canonical");
  CHECK(rep["mc"]["method"] == "mc");
  CHECK(rep["approx"]["tau"].get<double>() > 0.0);
  CHECK(rep["mc"]["tau"].get<double>() > 0.0);
}

TEST_CASE("bikeshare optimize-fleet: reports the round-trip residual") {
  const std::string p = write_temp("cli_agg.json", kAggregated);
  const RunResult r = run({"bikeshare", p, "optimize-fleet"});
  CHECK(r.code == 0);
  const json rep = json::parse(r.out);
  CHECK(rep["residual"].get<double>() <= 1e-10);
  CHECK(rep["stations"].size() == 4);
  CHECK(rep["tau"].get<double>() > 0.0);
}

TEST_CASE("bikeshare on a generic configuration exits 2") {
  const std::string p = write_temp("cli_two.json", kTwoNode);
  const RunResult r = run({"bikeshare", p, "optimize-fleet"});
  CHECK(r.code == 2);
}

TEST_CASE("reports can be written to a file") {
  const std::string p = write_temp("cli_two.json", kTwoNode);
  const auto outp =
      (std::filesystem::temp_directory_path() / "cli_report.json").string();
  const RunResult r = run({"gamma", p, "--customers", "3", "--out", outp});
  CHECK(r.code == 0);
  CHECK(r.out.empty());
  std::ifstream f(outp);
  json rep;
  f >> rep;
  CHECK(rep["gamma"].get<double>() > 0.0);
}
