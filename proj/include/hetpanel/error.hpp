#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace hetpanel {

enum class ErrorCode {
  unbalanced_panel,
  registry_conflict,
  calendar_error,
  precondition,
  empty_support,
  zero_range,
  degenerate_regression,
  alignment_error,
  rank_overflow,
  rank_deficient,
  filter_divergence,
  degenerate_window,
  degenerate_dm,
  stratification_error,
  empty_permutation_set,
  invalid_partition,
  invalid_config,
  non_orthonormal,
  infeasible_calendar,
  overlapping_phases,
  invalid_reassignment,
  io_error,
};

/// Short message prefix for each code; every thrown Error starts with it.
[[nodiscard]] constexpr std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::unbalanced_panel: return "unbalanced panel";
    case ErrorCode::registry_conflict: return "registry conflict";
    case ErrorCode::calendar_error: return "calendar error";
    case ErrorCode::precondition: return "precondition violated";
    case ErrorCode::empty_support: return "empty support";
    case ErrorCode::zero_range: return "zero range";
    case ErrorCode::degenerate_regression: return "degenerate regression";
    case ErrorCode::alignment_error: return "alignment error";
    case ErrorCode::rank_overflow: return "rank overflow";
    case ErrorCode::rank_deficient: return "rank deficient";
    case ErrorCode::filter_divergence: return "filter divergence";
    case ErrorCode::degenerate_window: return "degenerate window";
    case ErrorCode::degenerate_dm: return "degenerate DM";
    case ErrorCode::stratification_error: return "stratification error";
    case ErrorCode::empty_permutation_set: return "empty permutation set";
    case ErrorCode::invalid_partition: return "invalid partition";
    case ErrorCode::invalid_config: return "invalid config";
    case ErrorCode::non_orthonormal: return "non-orthonormal input";
    case ErrorCode::infeasible_calendar: return "infeasible calendar";
    case ErrorCode::overlapping_phases: return "overlapping phases";
    case ErrorCode::invalid_reassignment: return "invalid reassignment";
    case ErrorCode::io_error: return "io error";
  }
  return "error";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& detail)
      : std::runtime_error(detail.empty() ? std::string(to_string(code))
                                          : std::string(to_string(code)) + ": " + detail),
        code_(code) {}
  explicit Error(ErrorCode code) : Error(code, "") {}

  [[nodiscard]] ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

inline void require(bool condition, ErrorCode code, const std::string& detail) {
  if (!condition) throw Error(code, detail);
}

}  // namespace hetpanel
