#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dtt/geometry.hpp"
#include "dtt/json_io.hpp"
#include "dtt/scene.hpp"

namespace dtt {

// Mean distance between matched model points under the two poses.
double add_metric(std::span<const Vec3> model_points, const Pose &gt, const Pose &pred);

// Mean distance from each gt-posed point to the closest pred-posed point
// (exact nearest neighbor).
double add_s_metric(std::span<const Vec3> model_points, const Pose &gt, const Pose &pred);

// Fraction of errors strictly below tau.
double accuracy_at(std::span<const double> errors, double tau);

// Area under accuracy(tau) on [0, max_threshold], as a percentage. Exact
// integral of the step function.
double auc(std::span<const double> errors, double max_threshold);

constexpr double kDefaultMaxThreshold = 0.10;
constexpr int kCurveSteps = 100;

struct Prediction {
  int frame = 0;
  std::string object_id;
  Pose pose;
};

// JSON list of {"frame", "object", "q", "t"}.
std::vector<Prediction> predictions_from_json(const Json &j);
std::vector<Prediction> read_predictions(const std::filesystem::path &path);

struct EvalRecord {
  int frame = 0;
  std::string object_id;
  double add = 0.0;    // meters
  double add_s = 0.0;  // meters
};

struct CurvePoint {
  double tau = 0.0;
  double add_s = 0.0;  // accuracy fractions
  double add = 0.0;
};

struct SkippedPrediction {
  int frame = 0;
  std::string object_id;
  std::string reason;
};

struct EvalReport {
  std::vector<EvalRecord> records;  // ordered by (frame, object)
  std::optional<double> auc_add_s;  // unset when there are no records
  std::optional<double> auc_add;
  double max_threshold = kDefaultMaxThreshold;
  std::vector<CurvePoint> curve;
  std::vector<SkippedPrediction> skipped;
  bool empty() const { return records.empty(); }
};

// tau = max_threshold * i / steps for i in 0..steps.
std::vector<CurvePoint> accuracy_curve(const std::vector<EvalRecord> &records,
                                       double max_threshold, int steps = kCurveSteps);

// Scores predictions against verified labels on the model's surface samples
// (posed at the label's joints). Predictions without a verified counterpart
// are listed as skipped.
EvalReport evaluate_scene(const Scene &scene, const std::vector<Prediction> &predictions,
                          double max_threshold = kDefaultMaxThreshold, int threads = 1);

Json report_to_json(const EvalReport &report);
// "tau,accuracy" rows of the ADD-S curve.
std::string curve_csv(const EvalReport &report);

}  // namespace dtt
