#pragma once

#include <stdexcept>
#include <string>

namespace pairedepi {

/// Malformed arguments or inputs: bad simplex, index out of range, schema
/// mismatch, unparsable file content.
class InvalidInputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Query outside the domain covered by a trajectory, dataset, or grid.
class OutOfRangeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Fixed-step integration left the unit simplex by more than the post-step
/// projection is allowed to absorb.
class IntegrationInstabilityError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace pairedepi
