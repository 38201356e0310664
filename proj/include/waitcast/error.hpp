#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace waitcast {

enum class Errc {
  malformed_row,
  incomplete_series,
  non_divisor_width,
  too_few_samples,
  unknown_child,
  empty_predictor_set,
  length_mismatch,
  too_few_series,
  bad_permutation,
  dimension_mismatch,
  shape_mismatch,
  degenerate_hessian,
  non_finite_loss,
  invalid_config,
  empty_input,
  empty_report,
  io_error,
  missing_stratum,
  usage,
  pipeline_failure,
};

std::string_view errc_name(Errc code) noexcept;

/// Every recoverable failure in the library is reported as an `Error`
/// carrying one of the codes above; the message holds the context.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(errc_name(code)) + ": " + what), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

inline std::string_view errc_name(Errc code) noexcept {
  switch (code) {
    case Errc::malformed_row: return "MalformedRow";
    case Errc::incomplete_series: return "IncompleteSeries";
    case Errc::non_divisor_width: return "NonDivisorWidth";
    case Errc::too_few_samples: return "TooFewSamples";
    case Errc::unknown_child: return "UnknownChild";
    case Errc::empty_predictor_set: return "EmptyPredictorSet";
    case Errc::length_mismatch: return "LengthMismatch";
    case Errc::too_few_series: return "TooFewSeries";
    case Errc::bad_permutation: return "BadPermutation";
    case Errc::dimension_mismatch: return "DimensionMismatch";
    case Errc::shape_mismatch: return "ShapeMismatch";
    case Errc::degenerate_hessian: return "DegenerateHessian";
    case Errc::non_finite_loss: return "NonFiniteLoss";
    case Errc::invalid_config: return "InvalidConfig";
    case Errc::empty_input: return "Empty";
    case Errc::empty_report: return "EmptyReport";
    case Errc::io_error: return "IoError";
    case Errc::missing_stratum: return "MissingStratum";
    case Errc::usage: return "UsageError";
    case Errc::pipeline_failure: return "PipelineFailure";
  }
  return "Unknown";
}

}  // namespace waitcast
