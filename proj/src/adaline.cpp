#include "filtopt/adaline.hpp"

#include <fmt/format.h>

namespace filtopt {

AdalineState adaline_step(const AdalineState& state, const Datum& datum) {
  const Eigen::Index d = state.theta.size();
  if (datum.x.size() + 1 != d)
    throw StructuralError(fmt::format("Adaline expects {} features, datum has {}", d - 1, datum.x.size()));
  if (state.k < 1) throw StructuralError("Adaline iteration counter starts at 1");

  ParameterVector xt(d);
  xt[0] = 1.0;
  xt.tail(d - 1) = datum.x;
  const double eta = 1.0 / static_cast<double>(state.k);
  AdalineState next{state.theta + eta * (datum.y - xt.dot(state.theta)) * xt, state.k + 1};
  if (!next.theta.allFinite())
    throw NumericError(fmt::format("Adaline diverged at iteration {}", state.k));
  return next;
}

}  // namespace filtopt
