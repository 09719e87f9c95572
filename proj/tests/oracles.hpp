#pragma once

// Brute-force reference implementations. They are written from the definitions and
// share no code with the library beyond plain data types.

#include "touchmap/camera.hpp"
#include "touchmap/evaluation.hpp"
#include "touchmap/hungarian.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <vector>

namespace oracle {

using touchmap::Vec2;
using touchmap::Vec3;

// ---- assignment

struct Assignment {
  int cardinality = 0;
  double cost = 0;
  std::vector<int> row_to_col;  // -1 unmatched
};

/// Enumerates every column permutation of the padded square problem. The optimum has
/// the most admissible pairs, then the lowest cost, then the lexicographically smallest
/// row-to-column vector with "unmatched" ranked after every column.
inline Assignment brute_force_assignment(const Eigen::MatrixXd& cost, double max_cost) {
  const int m = static_cast<int>(cost.rows()), n = static_cast<int>(cost.cols());
  const int k = std::max(m, n);
  std::vector<int> perm(k);
  std::iota(perm.begin(), perm.end(), 0);
  Assignment best;
  bool have = false;
  auto rank = [&](const std::vector<int>& v) {
    std::vector<int> r(v);
    for (int& x : r)
      if (x < 0) x = n;
    return r;
  };
  do {
    Assignment a;
    a.row_to_col.assign(m, -1);
    for (int r = 0; r < m; ++r) {
      const int c = perm[r];
      if (c < n && cost(r, c) < max_cost) {
        a.row_to_col[r] = c;
        ++a.cardinality;
        a.cost += cost(r, c);
      }
    }
    bool better = !have;
    if (have) {
      if (a.cardinality != best.cardinality) {
        better = a.cardinality > best.cardinality;
      } else if (std::abs(a.cost - best.cost) > 1e-9 * (1 + std::abs(best.cost))) {
        better = a.cost < best.cost;
      } else {
        better = rank(a.row_to_col) < rank(best.row_to_col);
      }
    }
    if (better) {
      best = a;
      have = true;
    }
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

inline std::vector<int> row_to_col(const std::vector<touchmap::Match>& matches, int rows) {
  std::vector<int> out(rows, -1);
  for (const auto& [r, c] : matches) out[r] = c;
  return out;
}

// ---- DBSCAN

/// Core points have at least min_pts neighbours within eps (self included). Clusters are
/// the eps-connected components of core points, numbered by their smallest core index;
/// a border point joins the lowest-numbered adjacent component; everything else is a
/// singleton. Clusters come back sorted, each ascending.
inline std::vector<std::vector<int>> naive_dbscan(const std::vector<Vec3>& pts, double eps, int min_pts) {
  const int n = static_cast<int>(pts.size());
  auto near = [&](int i, int j) { return (pts[i] - pts[j]).norm() <= eps; };
  std::vector<char> core(n, 0);
  for (int i = 0; i < n; ++i) {
    int count = 0;
    for (int j = 0; j < n; ++j) count += near(i, j);
    core[i] = count >= min_pts;
  }
  std::vector<int> comp(n, -1);
  int next = 0;
  for (int i = 0; i < n; ++i) {
    if (!core[i] || comp[i] >= 0) continue;
    std::vector<int> stack{i};
    comp[i] = next;
    while (!stack.empty()) {
      const int p = stack.back();
      stack.pop_back();
      for (int q = 0; q < n; ++q)
        if (core[q] && comp[q] < 0 && near(p, q)) {
          comp[q] = next;
          stack.push_back(q);
        }
    }
    ++next;
  }
  std::vector<int> label(n, -1);
  for (int i = 0; i < n; ++i) {
    if (core[i]) {
      label[i] = comp[i];
      continue;
    }
    for (int j = 0; j < n; ++j)
      if (core[j] && near(i, j) && (label[i] < 0 || comp[j] < label[i])) label[i] = comp[j];
  }
  std::map<int, std::vector<int>> groups;
  std::vector<std::vector<int>> out;
  for (int i = 0; i < n; ++i) {
    if (label[i] >= 0)
      groups[label[i]].push_back(i);
    else
      out.push_back({i});
  }
  for (auto& [k, g] : groups) out.push_back(g);
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.front() < b.front(); });
  return out;
}

// ---- nearest neighbour

struct Nearest {
  int index = -1;
  double squared_distance = std::numeric_limits<double>::infinity();
};

inline Nearest linear_nearest(const std::vector<Vec3>& pts, const Vec3& q) {
  Nearest best;
  for (int i = 0; i < static_cast<int>(pts.size()); ++i) {
    const double d = (pts[i] - q).squaredNorm();
    if (d < best.squared_distance) best = {i, d};
  }
  return best;
}

// ---- IDF1

struct IdScores {
  long idtp = 0, idfp = 0, idfn = 0;
  double idf1 = 0;
};

/// Tries every partial injective map from gt ids to predicted ids.
inline IdScores brute_force_idf1(const std::vector<touchmap::FrameCorrespondence>& corr) {
  std::map<std::pair<int, int>, long> co;
  std::map<int, long> gt_n, pr_n;
  for (const auto& f : corr) {
    for (int g : f.gt_ids) ++gt_n[g];
    for (int p : f.pred_ids) ++pr_n[p];
    for (const auto& gp : f.gated) ++co[gp];
  }
  std::vector<int> gts, prs;
  for (const auto& [g, n] : gt_n) gts.push_back(g);
  for (const auto& [p, n] : pr_n) prs.push_back(p);
  long best = 0;
  std::vector<char> used(prs.size(), 0);
  auto rec = [&](auto&& self, std::size_t gi, long acc) -> void {
    if (gi == gts.size()) {
      best = std::max(best, acc);
      return;
    }
    self(self, gi + 1, acc);
    for (std::size_t pi = 0; pi < prs.size(); ++pi) {
      if (used[pi]) continue;
      used[pi] = 1;
      const auto it = co.find({gts[gi], prs[pi]});
      self(self, gi + 1, acc + (it == co.end() ? 0 : it->second));
      used[pi] = 0;
    }
  };
  rec(rec, 0, 0);
  long total_gt = 0, total_pr = 0;
  for (const auto& [g, n] : gt_n) total_gt += n;
  for (const auto& [p, n] : pr_n) total_pr += n;
  IdScores s;
  s.idtp = best;
  s.idfn = total_gt - best;
  s.idfp = total_pr - best;
  const double den = 2.0 * s.idtp + s.idfp + s.idfn;
  s.idf1 = den == 0 ? 1.0 : 2.0 * s.idtp / den;
  return s;
}

// ---- triangulation

struct View {
  Eigen::Matrix3d K, R;
  Vec3 t;
  Vec2 pixel;
  double weight;
};

inline double reprojection_cost(const std::vector<View>& views, const Vec3& X) {
  double c = 0;
  for (const auto& v : views) {
    const Vec3 x = v.K * (v.R * X + v.t);
    if (x.z() <= 0) return std::numeric_limits<double>::infinity();
    c += v.weight * (x.head<2>() / x.z() - v.pixel).squaredNorm();
  }
  return c;
}

/// Coordinate grid search around `start`, shrinking the step until it drops below `tol`.
inline Vec3 grid_refine(const std::vector<View>& views, Vec3 start, double step = 0.05, double tol = 1e-9) {
  Vec3 best = start;
  double best_cost = reprojection_cost(views, best);
  while (step > tol) {
    bool moved = true;
    while (moved) {
      moved = false;
      Vec3 centre = best;
      for (int dx = -2; dx <= 2; ++dx)
        for (int dy = -2; dy <= 2; ++dy)
          for (int dz = -2; dz <= 2; ++dz) {
            const Vec3 p = centre + step * Vec3(dx, dy, dz);
            const double c = reprojection_cost(views, p);
            if (c < best_cost) {
              best_cost = c;
              best = p;
              moved = true;
            }
          }
    }
    step *= 0.5;
  }
  return best;
}

// ---- hysteresis

/// Direct two-state machine: turn on strictly below on, turn off strictly above off.
inline std::vector<char> hysteresis_trace(const std::vector<double>& d, double on, double off) {
  std::vector<char> out;
  bool state = false;
  for (double x : d) {
    if (!state && x < on)
      state = true;
    else if (state && x > off)
      state = false;
    out.push_back(state);
  }
  return out;
}

}  // namespace oracle
