#ifndef DENSDEP_ERRORS_HPP
#define DENSDEP_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace densdep {

/// Latent state left the physically meaningful range; raised instead of
/// letting exp() overflow to non-finite values.
class DivergedError : public std::runtime_error {
 public:
  DivergedError(double value, long index)
      : std::runtime_error("latent state diverged (|x| = " +
                           std::to_string(value) + " at index " +
                           std::to_string(index) + ")"),
        value_(value),
        index_(index) {}
  double value() const { return value_; }
  long index() const { return index_; }

 private:
  double value_;
  long index_;
};

/// Truncated-Gaussian rejection sampler exhausted its proposal budget.
class RejectionBudgetExceeded : public std::runtime_error {
 public:
  explicit RejectionBudgetExceeded(const std::string& what)
      : std::runtime_error(what) {}
};

/// Fewer observations than the five-year warmup window requires.
class InsufficientWarmup : public std::runtime_error {
 public:
  explicit InsufficientWarmup(const std::string& what)
      : std::runtime_error(what) {}
};

class InvalidArgument : public std::invalid_argument {
 public:
  explicit InvalidArgument(const std::string& what)
      : std::invalid_argument(what) {}
};

/// Malformed or inconsistent input data file.
class DataError : public std::runtime_error {
 public:
  explicit DataError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace densdep

#endif
