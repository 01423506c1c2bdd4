#include "filtopt/metrics.hpp"

#include <cmath>

#include <fmt/format.h>

namespace filtopt {

double mean_cost(const std::vector<Datum>& data, const LossComponent& loss, ConstVecRef theta) {
  if (data.empty()) throw StructuralError("cost of an empty dataset");
  double total = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    try {
      total += loss_value(loss, theta, data[i]);
    } catch (const DomainError& e) {
      throw DomainError(fmt::format("datum {}: {}", i, e.what()));
    }
  }
  return total / static_cast<double>(data.size());
}

double normalized_cost(ConstVecRef theta, const Dataset& ds, const LossComponent& loss, double c0) {
  if (!(c0 > 0.0) || !std::isfinite(c0)) throw NumericError(fmt::format("initial cost {} is not positive", c0));
  return mean_cost(ds.data, loss, theta) / c0;
}

double v_sum(const Matrix& V) {
  if (V.rows() != V.cols()) throw StructuralError("v_sum needs a square matrix");
  return V.cwiseAbs().sum();
}

int predict_label(ConstVecRef theta, ConstVecRef x) {
  if (theta.size() != x.size() + 1)
    throw StructuralError(fmt::format("theta has dimension {}, features {}", theta.size(), x.size()));
  const double score = theta[0] + theta.tail(x.size()).dot(x);
  return sigmoid(score) > 0.5 ? 1 : -1;
}

double error_rate(ConstVecRef theta, const Dataset& ds, const std::vector<std::size_t>& rows) {
  std::size_t wrong = 0;
  std::size_t total = 0;
  auto score = [&](const Datum& d) {
    wrong += predict_label(theta, d.x) != static_cast<int>(d.y);
    ++total;
  };
  if (rows.empty()) {
    for (const Datum& d : ds.data) score(d);
  } else {
    for (std::size_t r : rows) score(ds.data.at(r));
  }
  if (total == 0) throw StructuralError("error rate over zero rows");
  return static_cast<double>(wrong) / static_cast<double>(total);
}

}  // namespace filtopt
