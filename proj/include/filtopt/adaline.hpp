#pragma once

#include <cstddef>

#include "filtopt/ensemble.hpp"
#include "filtopt/loss.hpp"

namespace filtopt {

/// Linear-output LMS unit; theta = [bias, weights].
struct AdalineState {
  ParameterVector theta;
  std::size_t k = 1;
};

/// theta += (1/k) (y - x~^T theta) x~ with x~ = [1, x]. Throws NumericError
/// if the update leaves theta non-finite.
AdalineState adaline_step(const AdalineState& state, const Datum& datum);

}  // namespace filtopt
