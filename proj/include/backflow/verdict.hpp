#pragma once

#include <backflow/numerics.hpp>

#include <optional>
#include <string>

namespace backflow {

enum class VerdictStatus { pass, fail, indeterminate };

inline const char* to_string(VerdictStatus s) {
  switch (s) {
    case VerdictStatus::pass: return "pass";
    case VerdictStatus::fail: return "fail";
    default: return "indeterminate";
  }
}

/// Where a check found its worst violation: a time plus, when meaningful,
/// a Bloch direction (exact qubit checks) or a textual description
/// (sampled checks).
struct WitnessPoint {
  double time = 0.0;
  std::optional<Vec3> direction;
  std::string note;
};

/// Outcome of a single check. `margin` is the signed worst-case slack of
/// the inequality the check enforces, so status == pass implies
/// margin <= tolerance. Checks without a time sweep leave `grid` empty.
struct Verdict {
  VerdictStatus status = VerdictStatus::indeterminate;
  double margin = 0.0;
  double tolerance = 0.0;
  std::optional<WitnessPoint> witness;
  std::optional<TimeGrid> grid;
  std::string mode; // "exact" or "sampled"

  bool passed() const { return status == VerdictStatus::pass; }
  bool failed() const { return status == VerdictStatus::fail; }
};

} // namespace backflow
