#pragma once

#include <vector>

#include "filtopt/dataset.hpp"

namespace filtopt {

/// (1/K) sum_i f_i(theta). A domain error on any datum is rethrown with its index.
double mean_cost(const std::vector<Datum>& data, const LossComponent& loss, ConstVecRef theta);

/// mean_cost(theta) / c0; c0 is the cost at the initial estimate.
double normalized_cost(ConstVecRef theta, const Dataset& ds, const LossComponent& loss, double c0);

/// Sum of absolute entries.
double v_sum(const Matrix& V);

/// +1 iff sigmoid(alpha + beta^T x) > 0.5, else -1. NaN scores predict -1.
int predict_label(ConstVecRef theta, ConstVecRef x);

/// Misclassified fraction over `rows` of the dataset (all rows when empty).
double error_rate(ConstVecRef theta, const Dataset& ds, const std::vector<std::size_t>& rows = {});

}  // namespace filtopt
