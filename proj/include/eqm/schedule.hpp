#pragma once

#include <string>
#include <string_view>

namespace eqm {

enum class ScheduleKind { kConstant, kLinear, kTruncated, kPiecewise };

std::string_view to_string(ScheduleKind kind);
ScheduleKind parse_schedule_kind(std::string_view name);

/// Target-gradient magnitude c(gamma) along the corruption path, scaled by a
/// global multiplier lambda.
///
///   constant   c = 1
///   linear     c = 1 - gamma
///   truncated  c = 1 for gamma < a, (1 - gamma) / (1 - a) otherwise
///   piecewise  c = b - (b - 1) gamma / a for gamma < a, (1 - gamma) / (1 - a) otherwise
///
/// At gamma == a the decaying branch is used; both branches agree there.
struct Schedule {
  ScheduleKind kind = ScheduleKind::kTruncated;
  double a = 0.8;
  double b = 1.0;
  double lambda = 4.0;

  static Schedule constant(double lambda = 1.0);
  static Schedule linear(double lambda = 1.0);
  static Schedule truncated(double a, double lambda = 1.0);
  static Schedule piecewise(double a, double b, double lambda = 1.0);

  /// Throws ValidationError unless a in [0,1), b >= 0 and lambda > 0.
  void validate() const;

  /// lambda * c(gamma); gamma must lie in [0, 1].
  double eval(double gamma) const;

  /// True iff the magnitude vanishes at gamma = 1.
  bool is_equilibrium() const;

  bool operator==(const Schedule&) const = default;
};

}  // namespace eqm
