#pragma once

#include <stdexcept>
#include <string>

namespace kineflow {

enum class ErrorCode {
  invalid_dimension,
  invalid_input,
  invalid_method,
  numeric,
  convergence,
  missing_data,
  degree_overflow,
  degree_underflow,
  rank_deficient,
  no_motion,
  degenerate_hull,
  ambiguous_track,
  division_by_zero,
  collinear,
  infinite_mass,
  singularity,
  cheirality,
  partial_sequence,
  ambiguous_axis,
  invalid_k,
  schema,
  usage,
};

inline const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::invalid_dimension: return "invalid-dimension";
    case ErrorCode::invalid_input: return "invalid-input";
    case ErrorCode::invalid_method: return "invalid-method";
    case ErrorCode::numeric: return "numeric";
    case ErrorCode::convergence: return "convergence";
    case ErrorCode::missing_data: return "missing-data";
    case ErrorCode::degree_overflow: return "degree-overflow";
    case ErrorCode::degree_underflow: return "degree-underflow";
    case ErrorCode::rank_deficient: return "rank-deficient";
    case ErrorCode::no_motion: return "no-motion";
    case ErrorCode::degenerate_hull: return "degenerate-hull";
    case ErrorCode::ambiguous_track: return "ambiguous-track";
    case ErrorCode::division_by_zero: return "division-by-zero";
    case ErrorCode::collinear: return "collinear";
    case ErrorCode::infinite_mass: return "infinite-mass";
    case ErrorCode::singularity: return "singularity";
    case ErrorCode::cheirality: return "cheirality";
    case ErrorCode::partial_sequence: return "partial-sequence";
    case ErrorCode::ambiguous_axis: return "ambiguous-axis";
    case ErrorCode::invalid_k: return "invalid-k";
    case ErrorCode::schema: return "schema";
    case ErrorCode::usage: return "usage";
  }
  return "unknown";
}

/// All library failures are reported through this exception type; `code()`
/// identifies the failure class and `index()` carries an offending element
/// index where one exists (vertex, frame, sample), otherwise -1.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what, long index = -1)
      : std::runtime_error(std::string(to_string(code)) + ": " + what),
        code_(code),
        index_(index) {}

  ErrorCode code() const noexcept { return code_; }
  long index() const noexcept { return index_; }

 private:
  ErrorCode code_;
  long index_;
};

}  // namespace kineflow
