#ifndef JACKSON_CONFIG_HPP
#define JACKSON_CONFIG_HPP

#include "jackson/bikeshare.hpp"
#include "jackson/netmodel.hpp"

#include <stdexcept>
#include <string>
#include <vector>

namespace jackson {

/// Parse or validation failure, carrying a field-addressed message
/// ("nodes[2].rate: must be positive").
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct LoadedConfig {
  enum class Kind { Generic, BikeDetailed, BikeAggregated };
  Kind kind = Kind::Generic;

  NetworkSpec net;         // Generic
  BikeShareSpec bike;      // bike variants, before building
  bool has_customers = false;
  long customers = 0;

  bool has_W = false;
  std::vector<Eigen::MatrixXd> W;  // one matrix per station when given
};

LoadedConfig load_config(const std::string& path);
LoadedConfig parse_config(const std::string& text);

/// Network plus invariant vector for any config kind.
struct Realized {
  NetworkSpec net;
  Eigen::VectorXd theta;
  bool is_bike = false;
  BuiltNetwork built;  // populated for bike variants
};

Realized realize(const LoadedConfig& cfg);

}  // namespace jackson

#endif
