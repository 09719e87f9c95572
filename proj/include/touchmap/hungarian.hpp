#pragma once

#include <Eigen/Core>

#include <utility>
#include <vector>

namespace touchmap {

using CostMatrix = Eigen::MatrixXd;
using Match = std::pair<int, int>;  // (row, col)

/// Optimal one-to-one assignment over entries with cost < max_cost.
///
/// Among matchings that only use admissible entries, the one with the most pairs is
/// preferred, then the one with the lowest total cost. Equal-cost optima are broken
/// lexicographically: rows in ascending order take the smallest feasible column.
/// Returned pairs are sorted by row.
std::vector<Match> hungarian_assign(const CostMatrix& cost, double max_cost);

/// Sum of cost over the given matches.
double assignment_cost(const CostMatrix& cost, const std::vector<Match>& matches);

}  // namespace touchmap
