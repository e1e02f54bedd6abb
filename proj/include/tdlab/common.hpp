#pragma once

#include <array>
#include <cassert>
#include <cmath>
#include <complex>
#include <initializer_list>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace tdlab {

using cplx = std::complex<double>;

inline constexpr double pi = 3.14159265358979323846;

/// Error categories raised by the library. Each maps to one failure mode
/// of an operation; callers switch on the code, humans read the message.
enum class ErrorCode {
  NonInteriorOrigin,
  RayResolutionFailure,
  StepUnderflow,
  OriginSingularity,
  StepBudgetExceeded,
  FieldEvaluationFailure,
  QuadratureFailure,
  BoundaryContamination,
  InterpolationOutOfBand,
  WindowViolation,
  EmptyWindow,
  WraparoundDetected,
  NotConverged,
  TailTooFat,
  NoConvergence,
  NonHermitianResult,
  SolverNotConverged,
  InvalidArgument,
  Io,
};

inline std::string_view to_string(ErrorCode c) {
  switch (c) {
    case ErrorCode::NonInteriorOrigin: return "NonInteriorOrigin";
    case ErrorCode::RayResolutionFailure: return "RayResolutionFailure";
    case ErrorCode::StepUnderflow: return "StepUnderflow";
    case ErrorCode::OriginSingularity: return "OriginSingularity";
    case ErrorCode::StepBudgetExceeded: return "StepBudgetExceeded";
    case ErrorCode::FieldEvaluationFailure: return "FieldEvaluationFailure";
    case ErrorCode::QuadratureFailure: return "QuadratureFailure";
    case ErrorCode::BoundaryContamination: return "BoundaryContamination";
    case ErrorCode::InterpolationOutOfBand: return "InterpolationOutOfBand";
    case ErrorCode::WindowViolation: return "WindowViolation";
    case ErrorCode::EmptyWindow: return "EmptyWindow";
    case ErrorCode::WraparoundDetected: return "WraparoundDetected";
    case ErrorCode::NotConverged: return "NotConverged";
    case ErrorCode::TailTooFat: return "TailTooFat";
    case ErrorCode::NoConvergence: return "NoConvergence";
    case ErrorCode::NonHermitianResult: return "NonHermitianResult";
    case ErrorCode::SolverNotConverged: return "SolverNotConverged";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::Io: return "Io";
  }
  return "Unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}
  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

/// Non-fatal findings (boundary contamination and the like). Operations push
/// into a sink when one is supplied; experiment runners treat any entry as a
/// failed check.
struct Diagnostics {
  std::vector<std::string> warnings;
  void warn(ErrorCode c, const std::string& msg) {
    warnings.push_back(std::string(to_string(c)) + ": " + msg);
  }
  bool clean() const { return warnings.empty(); }
};

inline void warn(Diagnostics* d, ErrorCode c, const std::string& msg) {
  if (d) d->warn(c, msg);
}

/// Point in R^d for d <= 3, stored inline.
struct Vec {
  std::array<double, 3> c{0.0, 0.0, 0.0};
  int dim = 0;

  Vec() = default;
  explicit Vec(int d) : dim(d) { assert(d >= 1 && d <= 3); }
  Vec(std::initializer_list<double> v) : dim(static_cast<int>(v.size())) {
    assert(dim >= 1 && dim <= 3);
    int i = 0;
    for (double x : v) c[i++] = x;
  }

  double& operator[](int i) { return c[i]; }
  double operator[](int i) const { return c[i]; }

  Vec& operator+=(const Vec& o) { for (int i = 0; i < dim; ++i) c[i] += o.c[i]; return *this; }
  Vec& operator-=(const Vec& o) { for (int i = 0; i < dim; ++i) c[i] -= o.c[i]; return *this; }
  Vec& operator*=(double s) { for (int i = 0; i < dim; ++i) c[i] *= s; return *this; }

  double norm2() const { double s = 0; for (int i = 0; i < dim; ++i) s += c[i] * c[i]; return s; }
  double norm() const { return std::sqrt(norm2()); }
  bool is_zero() const { for (int i = 0; i < dim; ++i) if (c[i] != 0.0) return false; return true; }
};

inline Vec operator+(Vec a, const Vec& b) { return a += b; }
inline Vec operator-(Vec a, const Vec& b) { return a -= b; }
inline Vec operator*(Vec a, double s) { return a *= s; }
inline Vec operator*(double s, Vec a) { return a *= s; }
inline Vec operator-(Vec a) { return a *= -1.0; }
inline double dot(const Vec& a, const Vec& b) {
  double s = 0;
  for (int i = 0; i < a.dim; ++i) s += a.c[i] * b.c[i];
  return s;
}

/// Japanese bracket <x> = sqrt(1 + |x|^2).
inline double jbracket(const Vec& x) { return std::sqrt(1.0 + x.norm2()); }

inline void require(bool ok, ErrorCode code, const std::string& msg) {
  if (!ok) throw Error(code, msg);
}

}  // namespace tdlab
