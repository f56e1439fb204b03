#include "dtt/robust_kernels.hpp"

#include <string>

#include "dtt/error.hpp"
#include "dtt/fft.hpp"
#include "dtt/kdtree.hpp"

namespace dtt {
namespace {

// Sum over `from` of the squared distance to the nearest point of `to`, in
// index order; nearest indices land in `nearest`.
double directed_sum(std::span<const Vec3> from, const KdTree &to,
                    std::vector<std::size_t> &nearest) {
  nearest.resize(from.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < from.size(); ++i) {
    nearest[i] = to.nearest(from[i]).index;
    sum += (from[i] - to.points()[nearest[i]]).squaredNorm();
  }
  return sum;
}

void check_shapes(const FeatureMatrix &x, const FrequencyGain &gain) {
  if (x.rows() < 1 || x.cols() < 1) throw InputError("feature matrix is empty");
  if (gain.rows() != x.rows() / 2 + 1 || gain.cols() != x.cols()) {
    throw InputError("gain is " + std::to_string(gain.rows()) + "x" +
                     std::to_string(gain.cols()) + ", expected " +
                     std::to_string(x.rows() / 2 + 1) + "x" + std::to_string(x.cols()));
  }
  if (!x.allFinite() || !gain.allFinite()) throw InputError("non-finite input");
}

std::vector<Complex> spectrum_of(const FeatureMatrix &m, Eigen::Index c) {
  std::vector<double> col(m.col(c).data(), m.col(c).data() + m.rows());
  return fft_real(col);
}

FeatureMatrix matrix_from_json(const Json &j, const char *what) {
  if (!j.is_array() || j.empty() || !j[0].is_array() || j[0].empty()) {
    throw InputError(std::string(what) + " must be a non-empty list of rows");
  }
  FeatureMatrix m(j.size(), j[0].size());
  for (std::size_t r = 0; r < j.size(); ++r) {
    if (!j[r].is_array() || j[r].size() != j[0].size()) {
      throw InputError(std::string(what) + " rows differ in length");
    }
    for (std::size_t c = 0; c < j[r].size(); ++c) m(r, c) = j[r][c].get<double>();
  }
  return m;
}

Json matrix_to_json(const FeatureMatrix &m) {
  Json out = Json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    Json row = Json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    out.push_back(row);
  }
  return out;
}

}  // namespace

ChamferResult chamfer_loss(std::span<const Vec3> decoded, std::span<const Vec3> reference) {
  if (decoded.empty() || reference.empty()) throw InputError("chamfer needs non-empty sets");
  const KdTree decoded_tree(decoded);
  const KdTree reference_tree(reference);
  std::vector<std::size_t> to_reference, to_decoded;
  const double a_n = static_cast<double>(decoded.size());
  const double b_n = static_cast<double>(reference.size());
  const double forward = directed_sum(decoded, reference_tree, to_reference) / a_n;
  const double backward = directed_sum(reference, decoded_tree, to_decoded) / b_n;

  ChamferResult out;
  out.loss = forward + backward;
  out.gradient.resize(decoded.size());
  for (std::size_t i = 0; i < decoded.size(); ++i) {
    out.gradient[i] = (2.0 / a_n) * (decoded[i] - reference[to_reference[i]]);
  }
  for (std::size_t j = 0; j < reference.size(); ++j) {
    const std::size_t i = to_decoded[j];
    out.gradient[i] += (2.0 / b_n) * (decoded[i] - reference[j]);
  }
  return out;
}

FeatureMatrix gff_forward(const FeatureMatrix &x, const FrequencyGain &gain) {
  check_shapes(x, gain);
  const auto n = static_cast<std::size_t>(x.rows());
  FeatureMatrix y(x.rows(), x.cols());
  for (Eigen::Index c = 0; c < x.cols(); ++c) {
    std::vector<Complex> spec = spectrum_of(x, c);
    for (std::size_t k = 0; k < spec.size(); ++k) spec[k] *= gain(static_cast<Eigen::Index>(k), c);
    const std::vector<double> col = ifft_real(spec, n);
    for (std::size_t i = 0; i < n; ++i) y(static_cast<Eigen::Index>(i), c) = col[i];
  }
  return y;
}

GffGradients gff_backward(const FeatureMatrix &x, const FrequencyGain &gain,
                          const FeatureMatrix &upstream) {
  check_shapes(x, gain);
  if (upstream.rows() != x.rows() || upstream.cols() != x.cols()) {
    throw InputError("upstream gradient shape differs from the input");
  }
  const auto n = static_cast<std::size_t>(x.rows());
  const double n_d = static_cast<double>(n);
  GffGradients out{FeatureMatrix(x.rows(), x.cols()), FrequencyGain(gain.rows(), gain.cols())};
  for (Eigen::Index c = 0; c < x.cols(); ++c) {
    const std::vector<Complex> spec_x = spectrum_of(x, c);
    const std::vector<Complex> spec_up = spectrum_of(upstream, c);
    // Bins other than DC and Nyquist stand for a conjugate pair in the output.
    std::vector<Complex> grad_x_spec(n, Complex(0.0, 0.0));
    for (std::size_t k = 0; k < spec_x.size(); ++k) {
      const double weight = (k == 0 || 2 * k == n) ? 1.0 : 2.0;
      const Complex z = (weight / n_d) * spec_up[k];
      const Complex g = gain(static_cast<Eigen::Index>(k), c);
      out.gain(static_cast<Eigen::Index>(k), c) = z * std::conj(spec_x[k]);
      grad_x_spec[k] = z * std::conj(g);
    }
    const std::vector<Complex> time = dft(grad_x_spec, true);
    for (std::size_t i = 0; i < n; ++i) out.x(static_cast<Eigen::Index>(i), c) = time[i].real();
  }
  return out;
}

Json gff_vector_to_json(const GffVector &v) {
  Json gains = Json::array();
  for (Eigen::Index r = 0; r < v.gains.rows(); ++r) {
    Json row = Json::array();
    for (Eigen::Index c = 0; c < v.gains.cols(); ++c) {
      row.push_back({v.gains(r, c).real(), v.gains(r, c).imag()});
    }
    gains.push_back(row);
  }
  return {{"input", matrix_to_json(v.input)},
          {"gains", gains},
          {"expected_output", matrix_to_json(v.expected_output)}};
}

GffVector gff_vector_from_json(const Json &j) {
  try {
    GffVector v;
    v.input = matrix_from_json(j.at("input"), "input");
    v.expected_output = matrix_from_json(j.at("expected_output"), "expected_output");
    const Json &g = j.at("gains");
    if (!g.is_array() || g.empty()) throw InputError("gains must be a list of rows");
    v.gains.resize(static_cast<Eigen::Index>(g.size()), static_cast<Eigen::Index>(g[0].size()));
    for (std::size_t r = 0; r < g.size(); ++r) {
      if (g[r].size() != g[0].size()) throw InputError("gain rows differ in length");
      for (std::size_t c = 0; c < g[r].size(); ++c) {
        const Json &z = g[r][c];
        if (!z.is_array() || z.size() != 2) throw InputError("gain entries must be [re, im]");
        v.gains(r, c) = Complex(z[0].get<double>(), z[1].get<double>());
      }
    }
    check_shapes(v.input, v.gains);
    if (v.expected_output.rows() != v.input.rows() || v.expected_output.cols() != v.input.cols()) {
      throw InputError("expected_output shape differs from input");
    }
    return v;
  } catch (const nlohmann::json::exception &e) {
    throw InputError(std::string("malformed test vector: ") + e.what());
  }
}

std::vector<GffVector> read_gff_vectors(const std::filesystem::path &path) {
  const Json j = read_json(path);
  std::vector<GffVector> out;
  if (j.is_array()) {
    for (const Json &item : j) out.push_back(gff_vector_from_json(item));
  } else {
    out.push_back(gff_vector_from_json(j));
  }
  return out;
}

}  // namespace dtt
