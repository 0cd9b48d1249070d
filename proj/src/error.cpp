#include "brpp/error.hpp"

namespace brpp {

const char* category_name(ErrorCategory c) noexcept {
  switch (c) {
    case ErrorCategory::invalid_argument: return "invalid_argument";
    case ErrorCategory::schema: return "schema";
    case ErrorCategory::fit_nonconvergence: return "fit_nonconvergence";
    case ErrorCategory::sampler_nonconvergence: return "sampler_nonconvergence";
    case ErrorCategory::support: return "support";
    case ErrorCategory::numeric: return "numeric";
  }
  return "unknown";
}

}  // namespace brpp
