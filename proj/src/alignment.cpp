#include "dtt/alignment.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>
#include <algorithm>
#include <cmath>
#include <tuple>

#include "dtt/kdtree.hpp"

namespace dtt {

Pose kabsch_align(std::span<const Vec3> source, std::span<const Vec3> target) {
  if (source.size() != target.size()) {
    throw InputError("correspondence lists differ in length");
  }
  if (source.size() < 3) throw InputError("need at least 3 correspondences");

  const double n = static_cast<double>(source.size());
  Vec3 src_mean = Vec3::Zero(), dst_mean = Vec3::Zero();
  for (std::size_t i = 0; i < source.size(); ++i) {
    src_mean += source[i];
    dst_mean += target[i];
  }
  src_mean /= n;
  dst_mean /= n;

  Mat3 cross = Mat3::Zero();
  Mat3 spread = Mat3::Zero();
  for (std::size_t i = 0; i < source.size(); ++i) {
    const Vec3 s = source[i] - src_mean;
    cross += s * (target[i] - dst_mean).transpose();
    spread += s * s.transpose();
  }

  // Rank of the centered source must be at least 2.
  Eigen::SelfAdjointEigenSolver<Mat3> eig(spread);
  const Vec3 ev = eig.eigenvalues();  // ascending
  const double scale = std::max(ev[2], 0.0);
  if (!(scale > 0.0) || ev[1] <= 1e-12 * scale || !std::isfinite(scale)) {
    throw DegenerateError("source points are coincident or collinear");
  }

  Eigen::JacobiSVD<Mat3> svd(cross, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Mat3 &u = svd.matrixU();
  const Mat3 &v = svd.matrixV();
  Mat3 d = Mat3::Identity();
  if ((v * u.transpose()).determinant() < 0.0) d(2, 2) = -1.0;

  Pose pose;
  pose.rotation = v * d * u.transpose();
  pose.translation = dst_mean - pose.rotation * src_mean;
  return pose;
}

double alignment_rms(std::span<const Vec3> source, std::span<const Vec3> target,
                     const Pose &pose) {
  if (source.size() != target.size()) {
    throw InputError("correspondence lists differ in length");
  }
  if (source.empty()) return 0.0;
  double sum = 0.0;
  for (std::size_t i = 0; i < source.size(); ++i) {
    sum += (pose.apply(source[i]) - target[i]).squaredNorm();
  }
  return std::sqrt(sum / static_cast<double>(source.size()));
}

void IcpConfig::validate() const {
  if (max_iterations < 1) throw InputError("max_iterations must be >= 1");
  if (!(trim_fraction >= 0.0 && trim_fraction < 0.5)) {
    throw InputError("trim_fraction must be in [0, 0.5)");
  }
  if (!(max_correspondence_distance > 0.0)) {
    throw InputError("max_correspondence_distance must be > 0");
  }
  if (!(convergence_tol >= 0.0)) throw InputError("convergence_tol must be >= 0");
}

IcpResult icp(const PointCloud &source, const PointCloud &target,
              const Pose &initial, const IcpConfig &config) {
  return icp(std::span<const Vec3>(source.points),
             std::span<const Vec3>(target.points), initial, config);
}

IcpResult icp(std::span<const Vec3> source, std::span<const Vec3> target,
              const Pose &initial, const IcpConfig &config) {
  config.validate();
  if (source.empty() || target.empty()) {
    throw InputError("icp needs non-empty source and target clouds");
  }
  if (!initial.is_valid(1e-6)) throw InputError("icp initial pose is not a rigid transform");

  const KdTree tree(target);
  struct Pair {
    double distance;
    std::size_t source;
    std::size_t target;
  };
  std::vector<Pair> pairs;
  pairs.reserve(source.size());
  std::vector<Vec3> src_kept, dst_kept;

  IcpResult result;
  result.pose = initial;
  for (int iter = 1; iter <= config.max_iterations; ++iter) {
    pairs.clear();
    for (std::size_t i = 0; i < source.size(); ++i) {
      const Neighbor nn = tree.nearest(result.pose.apply(source[i]));
      if (nn.distance <= config.max_correspondence_distance) {
        pairs.push_back({nn.distance, i, nn.index});
      }
    }
    if (pairs.empty()) {
      throw RegistrationError("no correspondences within " +
                                  std::to_string(config.max_correspondence_distance) +
                                  " m at iteration " + std::to_string(iter),
                              result.pose);
    }
    result.inlier_ratio =
        static_cast<double>(pairs.size()) / static_cast<double>(source.size());

    std::sort(pairs.begin(), pairs.end(), [](const Pair &a, const Pair &b) {
      return std::tie(a.distance, a.source) < std::tie(b.distance, b.source);
    });
    const auto dropped = static_cast<std::size_t>(
        std::floor(config.trim_fraction * static_cast<double>(pairs.size())));
    const std::size_t kept = pairs.size() - dropped;
    if (kept < 3) {
      throw RegistrationError("only " + std::to_string(kept) +
                                  " correspondences left after trimming",
                              result.pose);
    }

    src_kept.clear();
    dst_kept.clear();
    double before = 0.0;
    for (std::size_t k = 0; k < kept; ++k) {
      src_kept.push_back(source[pairs[k].source]);
      dst_kept.push_back(target[pairs[k].target]);
      before += pairs[k].distance * pairs[k].distance;
    }
    before = std::sqrt(before / static_cast<double>(kept));

    Pose updated;
    try {
      updated = kabsch_align(src_kept, dst_kept);
    } catch (const DegenerateError &e) {
      throw RegistrationError(std::string("degenerate correspondences: ") + e.what(),
                              result.pose);
    }
    const double after = alignment_rms(src_kept, dst_kept, updated);

    result.pose = updated;
    result.iterations = iter;
    result.inlier_rmse = after;
    const bool stalled = before - after < config.convergence_tol;
    const bool settled = !result.rmse_trace.empty() &&
                         std::abs(result.rmse_trace.back() - after) < config.convergence_tol;
    result.rmse_trace.push_back(after);
    if (stalled || settled) {
      result.converged = true;
      break;
    }
  }
  return result;
}

}  // namespace dtt
