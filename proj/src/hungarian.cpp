#include "touchmap/hungarian.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace touchmap {
namespace {

struct Solution {
  long cardinality = 0;
  double cost = 0;
  std::vector<int> row_to_col;  // -1 when unmatched
};

// Shortest-augmenting-path Hungarian on a square matrix (1-based potentials).
std::vector<int> solve_square(const Eigen::MatrixXd& a) {
  const int n = static_cast<int>(a.rows());
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0), v(n + 1, 0), minv(n + 1);
  std::vector<int> p(n + 1, 0), way(n + 1, 0);
  std::vector<char> used(n + 1);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::fill(minv.begin(), minv.end(), inf);
    std::fill(used.begin(), used.end(), 0);
    do {
      used[j0] = 1;
      const int i0 = p[j0];
      double delta = inf;
      int j1 = 0;
      for (int j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = a(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const int j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<int> row_to_col(n, -1);
  for (int j = 1; j <= n; ++j)
    if (p[j] != 0) row_to_col[p[j] - 1] = j - 1;
  return row_to_col;
}

// Optimal solution of the gated problem restricted to the free rows/cols.
Solution solve(const CostMatrix& cost, double max_cost, const std::vector<char>& row_free,
               const std::vector<char>& col_free) {
  std::vector<int> rows, cols;
  for (int r = 0; r < cost.rows(); ++r)
    if (row_free[r]) rows.push_back(r);
  for (int c = 0; c < cost.cols(); ++c)
    if (col_free[c]) cols.push_back(c);

  Solution sol;
  sol.row_to_col.assign(cost.rows(), -1);
  if (rows.empty() || cols.empty()) return sol;

  // Forbidden and padding entries share a penalty larger than any admissible total,
  // so the solver first maximizes the number of admissible pairs.
  double span = 0;
  for (int r : rows)
    for (int c : cols)
      if (cost(r, c) < max_cost) span = std::max(span, std::abs(cost(r, c)));
  const int n = static_cast<int>(std::max(rows.size(), cols.size()));
  const double penalty = (span + 1.0) * (2.0 * n + 2.0);

  Eigen::MatrixXd sq = Eigen::MatrixXd::Constant(n, n, penalty);
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < cols.size(); ++j) {
      const double c = cost(rows[i], cols[j]);
      if (c < max_cost) sq(static_cast<int>(i), static_cast<int>(j)) = c;
    }
  const auto assign = solve_square(sq);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const int j = assign[i];
    if (j < 0 || j >= static_cast<int>(cols.size())) continue;
    const double c = cost(rows[i], cols[j]);
    if (!(c < max_cost)) continue;
    sol.row_to_col[rows[i]] = cols[j];
    ++sol.cardinality;
    sol.cost += c;
  }
  return sol;
}

bool same_optimum(const Solution& a, long cardinality, double cost) {
  return a.cardinality == cardinality &&
         std::abs(a.cost - cost) <= 1e-9 * (1.0 + std::abs(cost));
}

}  // namespace

std::vector<Match> hungarian_assign(const CostMatrix& cost, double max_cost) {
  const int m = static_cast<int>(cost.rows()), n = static_cast<int>(cost.cols());
  std::vector<Match> out;
  if (m == 0 || n == 0) return out;

  std::vector<char> row_free(m, 1), col_free(n, 1);
  const Solution best = solve(cost, max_cost, row_free, col_free);
  if (best.cardinality == 0) return out;

  // Lexicographic tie-break: fix rows in order to the smallest column that keeps the
  // remaining problem optimal.
  long fixed_card = 0;
  double fixed_cost = 0;
  for (int r = 0; r < m; ++r) {
    row_free[r] = 0;
    bool placed = false;
    for (int c = 0; c < n && !placed; ++c) {
      if (!col_free[c] || !(cost(r, c) < max_cost)) continue;
      col_free[c] = 0;
      const Solution rest = solve(cost, max_cost, row_free, col_free);
      if (same_optimum(rest, best.cardinality - fixed_card - 1, best.cost - fixed_cost - cost(r, c))) {
        out.emplace_back(r, c);
        ++fixed_card;
        fixed_cost += cost(r, c);
        placed = true;
      } else {
        col_free[c] = 1;
      }
    }
    // Otherwise the row stays unmatched in every tie-broken optimum.
  }
  return out;
}

double assignment_cost(const CostMatrix& cost, const std::vector<Match>& matches) {
  double total = 0;
  for (const auto& [r, c] : matches) total += cost(r, c);
  return total;
}

}  // namespace touchmap
