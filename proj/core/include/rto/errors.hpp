#ifndef RTOKIT_ERRORS_HPP
#define RTOKIT_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace rto {

// Model returned NaN/Inf, or an inner linear solve broke down.
struct NonFiniteEvalError : std::runtime_error {
  explicit NonFiniteEvalError(const std::string& what) : std::runtime_error(what) {}
};

// A covariance factor (or other matrix factorization) could not be formed.
struct FactorizationError : std::runtime_error {
  explicit FactorizationError(const std::string& what) : std::runtime_error(what) {}
};

// A model does not provide the requested derivative action.
struct DerivativeUnavailableError : std::runtime_error {
  explicit DerivativeUnavailableError(const std::string& what) : std::runtime_error(what) {}
};

// The reference-point optimization failed; nothing downstream can run.
struct ReferencePointError : std::runtime_error {
  explicit ReferencePointError(const std::string& what) : std::runtime_error(what) {}
};

struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace rto

#endif
