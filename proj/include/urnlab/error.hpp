#pragma once

#include <stdexcept>
#include <string>

namespace urnlab {

//! A caller broke a documented precondition (dimension mismatch, empty input,
//! out-of-range rank, ...).
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

//! A table or count would not fit: joint over more than 2^20 outcomes, a
//! candidate count past 64 bits.
class CapacityError : public std::length_error {
 public:
  using std::length_error::length_error;
};

//! Configuration that cannot be satisfied or is malformed.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

//! Malformed model, dataset, spec or CSV file.
class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline void require(bool ok, const std::string &what) {
  if (!ok)
    throw ContractError(what);
}

} // namespace urnlab
