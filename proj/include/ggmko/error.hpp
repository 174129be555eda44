#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace ggmko {

enum class errc {
  not_positive_definite,
  no_convergence,
  invalid_dof,
  sample_size_too_small,
  degenerate_column,
  dimension_mismatch,
  invalid_q,
  diagonal_in_swap_set,
  empty_grid,
  infeasible_shift,
  empty_sample,
  non_positive_after_pseudocount,
  all_features_filtered,
  subsample_too_large,
  too_few_pairs,
  invalid_argument,
  parse_error,
  io_error,
};

constexpr std::string_view to_string(errc code) noexcept {
  switch (code) {
    case errc::not_positive_definite: return "NotPositiveDefinite";
    case errc::no_convergence: return "NoConvergence";
    case errc::invalid_dof: return "InvalidDof";
    case errc::sample_size_too_small: return "SampleSizeTooSmall";
    case errc::degenerate_column: return "DegenerateColumn";
    case errc::dimension_mismatch: return "DimensionMismatch";
    case errc::invalid_q: return "InvalidQ";
    case errc::diagonal_in_swap_set: return "DiagonalInSwapSet";
    case errc::empty_grid: return "EmptyGrid";
    case errc::infeasible_shift: return "InfeasibleShift";
    case errc::empty_sample: return "EmptySample";
    case errc::non_positive_after_pseudocount: return "NonPositiveAfterPseudocount";
    case errc::all_features_filtered: return "AllFeaturesFiltered";
    case errc::subsample_too_large: return "SubsampleTooLarge";
    case errc::too_few_pairs: return "TooFewPairs";
    case errc::invalid_argument: return "InvalidArgument";
    case errc::parse_error: return "ParseError";
    case errc::io_error: return "IoError";
  }
  return "Unknown";
}

/// Numerical failures (as opposed to bad user input).
constexpr bool is_numerical(errc code) noexcept {
  return code == errc::not_positive_definite || code == errc::no_convergence ||
         code == errc::degenerate_column || code == errc::infeasible_shift;
}

class error : public std::runtime_error {
 public:
  error(errc code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  errc code() const noexcept { return code_; }

 private:
  errc code_;
};

}  // namespace ggmko
