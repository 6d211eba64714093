#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace tevim {

/// Library error tagged with the module that raised it ("data", "nuisance", ...).
class Error : public std::runtime_error {
 public:
  Error(std::string module, const std::string& what)
      : std::runtime_error(module + ": " + what), module_(std::move(module)) {}

  const std::string& module() const noexcept { return module_; }

 private:
  std::string module_;
};

/// The requested target is not estimable on this data (zero VTE, collinear
/// covariate, ...). The CLI maps this to exit code 2.
class DegenerateTarget : public Error {
 public:
  using Error::Error;
};

}  // namespace tevim
