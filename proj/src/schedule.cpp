#include "eqm/schedule.hpp"

#include <cmath>

#include "eqm/error.hpp"

namespace eqm {

std::string_view to_string(ScheduleKind kind) {
  switch (kind) {
    case ScheduleKind::kConstant: return "constant";
    case ScheduleKind::kLinear: return "linear";
    case ScheduleKind::kTruncated: return "truncated";
    case ScheduleKind::kPiecewise: return "piecewise";
  }
  return "?";
}

ScheduleKind parse_schedule_kind(std::string_view name) {
  if (name == "constant") return ScheduleKind::kConstant;
  if (name == "linear") return ScheduleKind::kLinear;
  if (name == "truncated") return ScheduleKind::kTruncated;
  if (name == "piecewise") return ScheduleKind::kPiecewise;
  throw ValidationError("unknown schedule kind '" + std::string(name) + "'");
}

Schedule Schedule::constant(double lambda) { return {ScheduleKind::kConstant, 0.0, 1.0, lambda}; }

Schedule Schedule::linear(double lambda) { return {ScheduleKind::kLinear, 0.0, 1.0, lambda}; }

Schedule Schedule::truncated(double a, double lambda) {
  Schedule s{ScheduleKind::kTruncated, a, 1.0, lambda};
  s.validate();
  return s;
}

Schedule Schedule::piecewise(double a, double b, double lambda) {
  Schedule s{ScheduleKind::kPiecewise, a, b, lambda};
  s.validate();
  return s;
}

void Schedule::validate() const {
  if (!(a >= 0.0 && a < 1.0)) {
    throw ValidationError("schedule.a must lie in [0, 1), got " + std::to_string(a));
  }
  if (!(b >= 0.0) || !std::isfinite(b)) {
    throw ValidationError("schedule.b must be >= 0, got " + std::to_string(b));
  }
  if (!(lambda > 0.0) || !std::isfinite(lambda)) {
    throw ValidationError("schedule.lambda must be > 0, got " + std::to_string(lambda));
  }
  // The piecewise rising branch divides by a.
  if (kind == ScheduleKind::kPiecewise && a == 0.0 && b != 1.0) {
    throw ValidationError("piecewise schedule with a = 0 requires b = 1");
  }
}

double Schedule::eval(double gamma) const {
  if (!(gamma >= 0.0 && gamma <= 1.0)) {
    throw ValidationError("gamma must lie in [0, 1], got " + std::to_string(gamma));
  }
  double c = 0.0;
  switch (kind) {
    case ScheduleKind::kConstant: c = 1.0; break;
    case ScheduleKind::kLinear: c = 1.0 - gamma; break;
    case ScheduleKind::kTruncated: c = gamma < a ? 1.0 : (1.0 - gamma) / (1.0 - a); break;
    case ScheduleKind::kPiecewise:
      c = gamma < a ? b - (b - 1.0) / a * gamma : (1.0 - gamma) / (1.0 - a);
      break;
  }
  return lambda * c;
}

bool Schedule::is_equilibrium() const { return eval(1.0) == 0.0; }

}  // namespace eqm
