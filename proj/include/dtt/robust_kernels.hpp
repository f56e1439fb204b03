#pragma once

#include <Eigen/Core>
#include <filesystem>
#include <span>
#include <vector>

#include "dtt/geometry.hpp"
#include "dtt/json_io.hpp"

namespace dtt {

struct ChamferResult {
  double loss = 0.0;
  std::vector<Vec3> gradient;  // d loss / d decoded point
};

// Mean squared nearest-neighbor distance in both directions. The gradient
// holds the current nearest-neighbor assignments fixed.
ChamferResult chamfer_loss(std::span<const Vec3> decoded, std::span<const Vec3> reference);

// N points x C channels.
using FeatureMatrix = Eigen::MatrixXd;
// (N/2 + 1) bins x C channels.
using FrequencyGain = Eigen::MatrixXcd;

// Per channel: real FFT along the points, multiply by the gains, inverse FFT.
FeatureMatrix gff_forward(const FeatureMatrix &x, const FrequencyGain &gain);

struct GffGradients {
  FeatureMatrix x;
  // d loss / d Re(g) + i * d loss / d Im(g)
  FrequencyGain gain;
};

GffGradients gff_backward(const FeatureMatrix &x, const FrequencyGain &gain,
                          const FeatureMatrix &upstream);

// Conformance vector: {"input": N rows of C, "gains": N/2+1 rows of C
// [re, im] pairs, "expected_output": N rows of C}.
struct GffVector {
  FeatureMatrix input;
  FrequencyGain gains;
  FeatureMatrix expected_output;
};

Json gff_vector_to_json(const GffVector &v);
GffVector gff_vector_from_json(const Json &j);
// A file holds one vector or a list of them.
std::vector<GffVector> read_gff_vectors(const std::filesystem::path &path);

}  // namespace dtt
