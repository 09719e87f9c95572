#include "touchmap/sim3.hpp"

#include "touchmap/error.hpp"

#include <Eigen/SVD>

#include <algorithm>
#include <array>
#include <cmath>
#include <random>
#include <vector>

namespace touchmap {

Sim3 Sim3::inverse() const {
  Sim3 inv;
  inv.scale = 1.0 / scale;
  inv.rotation = rotation.transpose();
  inv.translation = -inv.scale * (inv.rotation * translation);
  return inv;
}

Sim3 Sim3::compose(const Sim3& other) const {
  Sim3 out;
  out.scale = scale * other.scale;
  out.rotation = rotation * other.rotation;
  out.translation = scale * (rotation * other.translation) + translation;
  return out;
}

double rotation_angle_between(const Mat3& a, const Mat3& b) {
  // atan2 keeps precision near zero where acos of the trace does not.
  const Mat3 r = a.transpose() * b;
  const Vec3 axis(r(2, 1) - r(1, 2), r(0, 2) - r(2, 0), r(1, 0) - r(0, 1));
  return std::atan2(0.5 * axis.norm(), 0.5 * (r.trace() - 1.0));
}

Sim3 fit_sim3_closed_form(std::span<const Vec3> src, std::span<const Vec3> dst) {
  const auto n = static_cast<double>(src.size());
  Vec3 mu_s = Vec3::Zero(), mu_d = Vec3::Zero();
  for (std::size_t i = 0; i < src.size(); ++i) {
    mu_s += src[i];
    mu_d += dst[i];
  }
  mu_s /= n;
  mu_d /= n;

  Mat3 cov = Mat3::Zero();
  double var_s = 0;
  for (std::size_t i = 0; i < src.size(); ++i) {
    const Vec3 a = src[i] - mu_s, b = dst[i] - mu_d;
    cov += b * a.transpose();
    var_s += a.squaredNorm();
  }
  cov /= n;
  var_s /= n;

  Eigen::JacobiSVD<Mat3> svd(cov, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Vec3 d = Vec3::Ones();
  if ((svd.matrixU() * svd.matrixV().transpose()).determinant() < 0) d(2) = -1;

  Sim3 out;
  out.rotation = svd.matrixU() * d.asDiagonal() * svd.matrixV().transpose();
  out.scale = var_s > 0 ? svd.singularValues().dot(d) / var_s : 1.0;
  out.translation = mu_d - out.scale * (out.rotation * mu_s);
  return out;
}

namespace {

bool collinear(const Vec3& a, const Vec3& b, const Vec3& c) {
  const Vec3 ab = b - a, ac = c - a;
  const double scale = std::max(ab.squaredNorm(), ac.squaredNorm());
  return scale <= 0 || ab.cross(ac).squaredNorm() < 1e-12 * scale * scale;
}

std::vector<int> inliers_of(const Sim3& T, std::span<const Vec3> src, std::span<const Vec3> dst,
                            double threshold) {
  std::vector<int> out;
  for (std::size_t i = 0; i < src.size(); ++i)
    if ((T.apply(src[i]) - dst[i]).norm() < threshold) out.push_back(static_cast<int>(i));
  return out;
}

Sim3 refit(const std::vector<int>& idx, std::span<const Vec3> src, std::span<const Vec3> dst) {
  std::vector<Vec3> s, d;
  s.reserve(idx.size());
  d.reserve(idx.size());
  for (int i : idx) {
    s.push_back(src[i]);
    d.push_back(dst[i]);
  }
  return fit_sim3_closed_form(s, d);
}

}  // namespace

Sim3FitReport fit_sim3_ransac(std::span<const Vec3> src, std::span<const Vec3> dst,
                              const RansacConfig& cfg) {
  if (src.size() != dst.size())
    throw Error(ErrorKind::InvalidArgument, "src and dst must have equal length");
  const int n = static_cast<int>(src.size());
  if (n < 3) throw Error(ErrorKind::TooFewCorrespondences, "need >= 3 correspondences");
  const int min_inliers = cfg.min_inliers >= 0 ? cfg.min_inliers : std::max(20, n / 10);

  std::mt19937_64 rng(cfg.seed);
  std::uniform_int_distribution<int> pick(0, n - 1);

  std::vector<int> best;
  int iterations = 0;
  for (int it = 0; it < cfg.iterations; ++it) {
    ++iterations;
    const int a = pick(rng);
    int b = pick(rng), c = pick(rng);
    if (a == b || a == c || b == c) continue;
    if (collinear(src[a], src[b], src[c]) || collinear(dst[a], dst[b], dst[c])) continue;
    const std::array<Vec3, 3> s{src[a], src[b], src[c]}, d{dst[a], dst[b], dst[c]};
    const Sim3 T = fit_sim3_closed_form(s, d);
    if (!(T.scale > 0) || !std::isfinite(T.scale)) continue;
    auto in = inliers_of(T, src, dst, cfg.inlier_threshold);
    if (in.size() > best.size()) best = std::move(in);
    if (static_cast<int>(best.size()) == n) break;
  }
  if (static_cast<int>(best.size()) < std::max(3, min_inliers))
    throw Error(ErrorKind::NoConsensus, "best consensus " + std::to_string(best.size()) +
                                            " below min_inliers " + std::to_string(min_inliers));

  // Refit on the consensus set until it stops changing.
  Sim3 T = refit(best, src, dst);
  for (int round = 0; round < 5; ++round) {
    auto in = inliers_of(T, src, dst, cfg.inlier_threshold);
    if (in == best || static_cast<int>(in.size()) < 3) break;
    best = std::move(in);
    T = refit(best, src, dst);
  }

  double sq = 0;
  for (int i : best) sq += (T.apply(src[i]) - dst[i]).squaredNorm();
  Sim3FitReport rep;
  rep.transform = T;
  rep.inlier_count = static_cast<int>(best.size());
  rep.rms_inliers = std::sqrt(sq / static_cast<double>(best.size()));
  rep.iterations = iterations;
  return rep;
}

}  // namespace touchmap
