#pragma once

#include <stdexcept>
#include <string>

namespace onefifth {

/// A run hit a non-representable state (step-size under/overflow).
class NumericAbort : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// The requested quantity is not available for this objective.
class UnsupportedError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

}  // namespace onefifth
