#pragma once

#include <stdexcept>
#include <string>

namespace backflow {

/// Thrown when a map fails complete-positivity / trace-preservation
/// validation. Carries the most negative Choi eigenvalue found so callers
/// (and the CLI, which maps this to exit code 3) can report it.
struct cptp_error : std::runtime_error {
  double min_eigenvalue;

  cptp_error(const std::string& what, double min_eig)
      : std::runtime_error(what), min_eigenvalue(min_eig) {}
};

} // namespace backflow
