#include "dtt/metrics.hpp"

#include <algorithm>
#include <cstdio>
#include <tuple>

#include "dtt/error.hpp"
#include "dtt/kdtree.hpp"
#include "dtt/parallel.hpp"

namespace dtt {
namespace {

void require_points(std::span<const Vec3> points) {
  if (points.empty()) throw InputError("model point set is empty");
}

void require_errors(std::span<const double> errors) {
  if (errors.empty()) throw InputError("error list is empty");
}

std::vector<double> column(const std::vector<EvalRecord> &records, double EvalRecord::*field) {
  std::vector<double> out;
  out.reserve(records.size());
  for (const auto &r : records) out.push_back(r.*field);
  return out;
}

}  // namespace

double add_metric(std::span<const Vec3> model_points, const Pose &gt, const Pose &pred) {
  require_points(model_points);
  double sum = 0.0;
  for (const Vec3 &x : model_points) sum += (pred.apply(x) - gt.apply(x)).norm();
  return sum / static_cast<double>(model_points.size());
}

double add_s_metric(std::span<const Vec3> model_points, const Pose &gt, const Pose &pred) {
  require_points(model_points);
  const KdTree tree(transform(model_points, pred));
  double sum = 0.0;
  for (const Vec3 &x : model_points) sum += tree.nearest(gt.apply(x)).distance;
  return sum / static_cast<double>(model_points.size());
}

double accuracy_at(std::span<const double> errors, double tau) {
  require_errors(errors);
  const auto below = std::count_if(errors.begin(), errors.end(),
                                   [tau](double e) { return e < tau; });
  return static_cast<double>(below) / static_cast<double>(errors.size());
}

double auc(std::span<const double> errors, double max_threshold) {
  require_errors(errors);
  if (!(max_threshold > 0.0)) throw InputError("max threshold must be > 0");
  // An error e contributes accuracy on (e, max]; its share is 1 - e/max.
  double sum = 0.0;
  for (double e : errors) sum += std::max(0.0, 1.0 - e / max_threshold);
  return 100.0 * sum / static_cast<double>(errors.size());
}

std::vector<Prediction> predictions_from_json(const Json &j) {
  if (!j.is_array()) throw InputError("predictions must be a JSON list");
  std::vector<Prediction> out;
  for (const Json &item : j) {
    try {
      Prediction p;
      p.frame = item.at("frame").get<int>();
      p.object_id = item.at("object").get<std::string>();
      p.pose = pose_from_json(item);
      out.push_back(std::move(p));
    } catch (const nlohmann::json::exception &e) {
      throw InputError(std::string("malformed prediction: ") + e.what());
    }
  }
  return out;
}

std::vector<Prediction> read_predictions(const std::filesystem::path &path) {
  return predictions_from_json(read_json(path));
}

std::vector<CurvePoint> accuracy_curve(const std::vector<EvalRecord> &records,
                                       double max_threshold, int steps) {
  if (records.empty()) return {};
  if (steps < 1) throw InputError("curve needs at least one step");
  const std::vector<double> add_s = column(records, &EvalRecord::add_s);
  const std::vector<double> add = column(records, &EvalRecord::add);
  std::vector<CurvePoint> curve;
  for (int i = 0; i <= steps; ++i) {
    const double tau = max_threshold * i / steps;
    curve.push_back({tau, accuracy_at(add_s, tau), accuracy_at(add, tau)});
  }
  return curve;
}

EvalReport evaluate_scene(const Scene &scene, const std::vector<Prediction> &predictions,
                          double max_threshold, int threads) {
  if (!(max_threshold > 0.0)) throw InputError("max threshold must be > 0");
  EvalReport report;
  report.max_threshold = max_threshold;

  struct Job {
    const Prediction *pred;
    FrameLabel gt;
  };
  std::vector<Job> jobs;
  for (const Prediction &p : predictions) {
    std::string reason;
    std::optional<FrameLabel> gt;
    if (p.frame < 0 || p.frame >= scene.frame_count()) {
      reason = "unknown frame";
    } else if (!scene.has_object(p.object_id)) {
      reason = "unknown object";
    } else if (gt = scene.label(p.frame, p.object_id); !gt) {
      reason = "no label";
    } else if (gt->status != LabelStatus::kVerified) {
      reason = "label not verified";
    }
    if (!reason.empty()) {
      report.skipped.push_back({p.frame, p.object_id, reason});
      continue;
    }
    jobs.push_back({&p, *gt});
  }
  std::stable_sort(jobs.begin(), jobs.end(), [](const Job &a, const Job &b) {
    return std::tie(a.pred->frame, a.pred->object_id) < std::tie(b.pred->frame, b.pred->object_id);
  });

  report.records.resize(jobs.size());
  parallel_for(static_cast<int>(jobs.size()), threads, [&](int i) {
    const Job &job = jobs[static_cast<std::size_t>(i)];
    const ObjectModel &model = scene.object(job.pred->object_id).model;
    const std::vector<Vec3> points = model.posed_samples(job.gt.joints);
    report.records[static_cast<std::size_t>(i)] = {
        job.pred->frame, job.pred->object_id, add_metric(points, job.gt.pose, job.pred->pose),
        add_s_metric(points, job.gt.pose, job.pred->pose)};
  });

  if (!report.records.empty()) {
    report.auc_add_s = auc(column(report.records, &EvalRecord::add_s), max_threshold);
    report.auc_add = auc(column(report.records, &EvalRecord::add), max_threshold);
    report.curve = accuracy_curve(report.records, max_threshold);
  }
  return report;
}

Json report_to_json(const EvalReport &report) {
  Json records = Json::array();
  for (const auto &r : report.records) {
    records.push_back({{"frame", r.frame}, {"object", r.object_id}, {"add", r.add},
                       {"add_s", r.add_s}});
  }
  Json curve = Json::array();
  for (const auto &c : report.curve) {
    curve.push_back({{"tau", c.tau}, {"add_s", c.add_s}, {"add", c.add}});
  }
  Json skipped = Json::array();
  for (const auto &s : report.skipped) {
    skipped.push_back({{"frame", s.frame}, {"object", s.object_id}, {"reason", s.reason}});
  }
  auto optional_number = [](const std::optional<double> &v) {
    return v ? Json(*v) : Json(nullptr);
  };
  return {{"records", records},
          {"auc_add_s", optional_number(report.auc_add_s)},
          {"auc_add", optional_number(report.auc_add)},
          {"max_threshold", report.max_threshold},
          {"curve", curve},
          {"skipped", skipped},
          {"empty", report.empty()}};
}

std::string curve_csv(const EvalReport &report) {
  std::string out = "tau,accuracy\n";
  char line[64];
  for (const auto &c : report.curve) {
    std::snprintf(line, sizeof(line), "%.6f,%.6f\n", c.tau, c.add_s);
    out += line;
  }
  return out;
}

}  // namespace dtt
