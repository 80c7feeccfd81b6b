#pragma once

// Teacher-probability annealing schedules, evaluated per minibatch counter b.

#include <cmath>
#include <stdexcept>
#include <string>

namespace seqlab {

struct ScheduleError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class ScheduleKind { none, linear, exponential, inv_sigmoid };

inline const char* schedule_name(ScheduleKind k) {
  switch (k) {
    case ScheduleKind::none: return "none";
    case ScheduleKind::linear: return "linear";
    case ScheduleKind::exponential: return "exp";
    case ScheduleKind::inv_sigmoid: return "sigmoid";
  }
  return "?";
}

inline ScheduleKind schedule_from_name(const std::string& s) {
  if (s == "none") return ScheduleKind::none;
  if (s == "linear") return ScheduleKind::linear;
  if (s == "exp" || s == "exponential") return ScheduleKind::exponential;
  if (s == "sigmoid" || s == "inverse-sigmoid") return ScheduleKind::inv_sigmoid;
  throw ScheduleError("unknown schedule: " + s);
}

struct ScheduleState {
  ScheduleKind kind = ScheduleKind::none;
  double k = 1.0;       // decay hyperparameter
  long long b = 0;      // minibatch counter
  double p0 = 1.0;      // initial teacher probability (linear/none)
  double p = 1.0;       // last computed probability
};

inline void validate_schedule(ScheduleKind kind, double k, double p0) {
  if (!(p0 >= 0.0 && p0 <= 1.0)) throw ScheduleError("p0 must be in [0,1]");
  switch (kind) {
    case ScheduleKind::none:
      return;
    case ScheduleKind::linear:
      if (!(k > 0.0)) throw ScheduleError("linear schedule needs k > 0");
      return;
    case ScheduleKind::exponential:
      if (!(k > 0.0 && k < 1.0)) throw ScheduleError("exponential schedule needs 0 < k < 1");
      return;
    case ScheduleKind::inv_sigmoid:
      if (!(k >= 1.0)) throw ScheduleError("inverse-sigmoid schedule needs k >= 1");
      return;
  }
}

// Teacher probability at minibatch b. Linear decays from p0; the exponential
// and inverse-sigmoid forms start at k^0 = 1 and k/(k+1) respectively.
inline double schedule_prob(ScheduleState& s) {
  validate_schedule(s.kind, s.k, s.p0);
  double p = 1.0;
  const double b = static_cast<double>(s.b);
  switch (s.kind) {
    case ScheduleKind::none:
      p = s.p0;
      break;
    case ScheduleKind::linear:
      p = std::max(s.p0 - s.k * b, 0.0);
      break;
    case ScheduleKind::exponential:
      p = std::pow(s.k, b);
      break;
    case ScheduleKind::inv_sigmoid: {
      const double e = std::exp(b / s.k);
      p = std::isinf(e) ? 0.0 : s.k / (s.k + e);
      break;
    }
  }
  p = std::min(std::max(p, 0.0), 1.0);
  s.p = p;
  return p;
}

}  // namespace seqlab
