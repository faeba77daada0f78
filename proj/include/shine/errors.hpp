#pragma once
#include <stdexcept>
#include <string>

namespace shine {

// Error categories surfaced by the pipeline. The CLI maps these to exit
// messages; tests assert on the code.
enum class Errc {
  missing_file,
  malformed_record,
  span_out_of_range,
  io_failure,
  duplicate_key,
  empty_query,
  empty_corpus,
  no_primitives,
  bad_ratios,
  exhausted_class,
  batch_too_small,
  endpoint_unreachable,
  auth_failure,
  parse_failure,
  empty_span,
  no_outside_clips,
  length_mismatch,
  degenerate_span,
  non_finite,
  shape_mismatch,
  unknown_token,
  insufficient_vocab,
  bad_weights,
  empty_predictions,
  missing_track,
  empty_matrix,
  empty_grid,
  diverged_loss,
  config_error,
};

const char* errc_name(Errc c);

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(errc_name(code)) + ": " + what),
        code_(code) {}
  Errc code() const { return code_; }

 private:
  Errc code_;
};

}  // namespace shine
