#pragma once

#include <stdexcept>
#include <string>

namespace mclsr {

/// Malformed input file; message carries file name and line number.
struct ParseError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Corpus ended up with no usable users or items.
struct EmptyCorpusError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Invalid argument value (k < 1, tau <= 0, out-of-range alpha, ...).
struct ParamError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// Tensor or graph dimensions do not line up.
struct ShapeError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// Entity index outside its vocabulary.
struct IndexError : std::out_of_range {
  using std::out_of_range::out_of_range;
};

/// NaN or Inf showed up; message names the offending term.
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Bad or mismatched key in a config file.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Checkpoint file unreadable or incompatible with the requested config.
struct CheckpointError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace mclsr
