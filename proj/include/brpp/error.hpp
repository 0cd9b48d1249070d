#pragma once

#include <stdexcept>
#include <string>

namespace brpp {

// Categories map onto CLI exit codes (see tools/brpp_main.cpp).
enum class ErrorCategory {
  invalid_argument,
  schema,
  fit_nonconvergence,
  sampler_nonconvergence,
  support,
  numeric,
};

const char* category_name(ErrorCategory c) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorCategory category, const std::string& what)
      : std::runtime_error(what), category_(category) {}
  ErrorCategory category() const noexcept { return category_; }

 private:
  ErrorCategory category_;
};

[[noreturn]] inline void fail(ErrorCategory c, const std::string& msg) { throw Error(c, msg); }

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw Error(ErrorCategory::invalid_argument, msg);
}

}  // namespace brpp
