#pragma once

#include <span>
#include <vector>

#include "dtt/error.hpp"
#include "dtt/geometry.hpp"

namespace dtt {

// Paired 3D measurements of the same physical points in two frames.
struct Correspondences {
  std::vector<Vec3> source;
  std::vector<Vec3> target;
};

// Least-squares rigid transform with R * source + t ~ target. A reflection
// optimum is corrected to the best proper rotation. Throws InputError for
// mismatched or too few pairs and DegenerateError for collinear or coincident
// sources.
Pose kabsch_align(std::span<const Vec3> source, std::span<const Vec3> target);
inline Pose kabsch_align(const Correspondences &c) {
  return kabsch_align(c.source, c.target);
}

// Root mean square of |pose(source_i) - target_i|.
double alignment_rms(std::span<const Vec3> source, std::span<const Vec3> target,
                     const Pose &pose);

struct IcpConfig {
  int max_iterations = 50;
  double convergence_tol = 1e-6;            // meters of inlier RMSE change
  double trim_fraction = 0.1;               // worst pairs dropped per iteration
  double max_correspondence_distance = 0.05;

  void validate() const;
};

struct IcpResult {
  Pose pose;
  double inlier_rmse = 0.0;
  double inlier_ratio = 0.0;
  int iterations = 0;
  bool converged = false;
  // Inlier RMSE after each iteration's update; non-increasing when the kept
  // pair count is constant.
  std::vector<double> rmse_trace;
};

// Raised when an iteration finds no usable correspondences. Carries the pose
// reached before the failure.
class RegistrationError : public Error {
 public:
  RegistrationError(const std::string &message, const Pose &last_pose)
      : Error(ErrorKind::kRegistration, message), last_pose_{last_pose} {}

  const Pose &last_pose() const { return last_pose_; }

 private:
  Pose last_pose_;
};

// Point-to-point ICP with distance gating and trimming. The returned pose maps
// source into the target frame.
IcpResult icp(const PointCloud &source, const PointCloud &target,
              const Pose &initial, const IcpConfig &config = {});
IcpResult icp(std::span<const Vec3> source, std::span<const Vec3> target,
              const Pose &initial, const IcpConfig &config = {});

}  // namespace dtt
