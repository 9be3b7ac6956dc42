#pragma once

#include <stdexcept>
#include <string>

namespace uvb {

// Shape or size disagreement between caller-supplied data and a spec/model.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Malformed or out-of-range configuration; message names the offending field.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

}  // namespace uvb
