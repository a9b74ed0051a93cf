#include "changen/evalkit/metrics.hpp"

#include <cmath>
#include <limits>

#include "changen/core/error.hpp"

namespace changen::eval {

FeatureStats feature_stats(const Eigen::MatrixXd& features, double ridge) {
  const auto n = features.rows();
  const auto d = features.cols();
  if (n == 0 || d == 0) throw ValidationError("feature_stats needs at least one feature vector");
  FeatureStats s;
  s.count = n;
  s.mean = features.colwise().mean().transpose();
  if (n < 2) {
    s.cov = Eigen::MatrixXd::Identity(d, d) * ridge;
    return s;
  }
  const Eigen::MatrixXd centered = features.rowwise() - s.mean.transpose();
  s.cov = (centered.transpose() * centered) / static_cast<double>(n - 1);
  s.cov = 0.5 * (s.cov + s.cov.transpose());
  return s;
}

FeatureStats feature_stats(const torch::Tensor& features, double ridge) {
  if (features.dim() != 2) throw ShapeError("features must be [N, d]");
  auto t = features.detach().to(torch::kCPU, torch::kFloat64).contiguous();
  Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> m(
      t.data_ptr<double>(), t.size(0), t.size(1));
  return feature_stats(Eigen::MatrixXd(m), ridge);
}

namespace {

Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& m, double floor, double& min_eig) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (m + m.transpose()));
  Eigen::VectorXd ev = es.eigenvalues();
  min_eig = std::min(min_eig, ev.minCoeff());
  ev = ev.cwiseMax(floor).cwiseSqrt();
  return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

}  // namespace

FidReport fid_report(const FeatureStats& a, const FeatureStats& b, double floor) {
  if (a.dim() != b.dim()) throw ShapeError("fid: feature dimensions differ");
  FidReport r;
  r.min_eigenvalue = std::numeric_limits<double>::infinity();
  const Eigen::MatrixXd sa = psd_sqrt(a.cov, 0.0, r.min_eigenvalue);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sa * b.cov * sa);
  const Eigen::VectorXd ev = es.eigenvalues();
  r.min_eigenvalue = std::min(r.min_eigenvalue, ev.minCoeff());
  const double scale = std::max(1.0, ev.cwiseAbs().maxCoeff());
  r.regularized = r.min_eigenvalue < -1e-8 * scale;
  const double tr_sqrt = ev.cwiseMax(floor).cwiseSqrt().sum();
  const double mean_term = (a.mean - b.mean).squaredNorm();
  const double value = mean_term + a.cov.trace() + b.cov.trace() - 2.0 * tr_sqrt;
  // the floor can push exact-zero cases a hair negative
  r.value = std::max(0.0, value);
  return r;
}

double fid(const FeatureStats& a, const FeatureStats& b, double floor) { return fid_report(a, b, floor).value; }

double inception_score(const Eigen::MatrixXd& probs, double eps) {
  const auto n = probs.rows();
  if (n == 0 || probs.cols() == 0) throw ValidationError("inception_score needs a non-empty [N, K] matrix");
  for (Eigen::Index i = 0; i < n; ++i) {
    const double s = probs.row(i).sum();
    if (std::abs(s - 1.0) > 1e-4 || probs.row(i).minCoeff() < 0.0) {
      throw ValidationError("inception_score: row " + std::to_string(i) + " is not a probability vector");
    }
  }
  const Eigen::MatrixXd p = probs.cwiseMax(eps);
  const Eigen::RowVectorXd marginal = p.colwise().mean();
  double kl = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    kl += (p.row(i).array() * (p.row(i).array().log() - marginal.array().log())).sum();
  }
  return std::exp(kl / static_cast<double>(n));
}

double inception_score(const torch::Tensor& probs, double eps) {
  if (probs.dim() != 2) throw ShapeError("probabilities must be [N, K]");
  auto t = probs.detach().to(torch::kCPU, torch::kFloat64).contiguous();
  Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> m(
      t.data_ptr<double>(), t.size(0), t.size(1));
  return inception_score(Eigen::MatrixXd(m), eps);
}

LeakageReport leakage_metric(const ImageArray& image_t, const ImageArray& image_t1, const torch::Tensor& changed) {
  if (image_t.height() != image_t1.height() || image_t.width() != image_t1.width() || changed.dim() != 2 ||
      changed.size(0) != image_t.height() || changed.size(1) != image_t.width()) {
    throw ShapeError("leakage_metric: images and change map are not aligned");
  }
  const auto diff = (image_t1.tensor().to(torch::kFloat64) - image_t.tensor().to(torch::kFloat64)).abs().mean(0);
  const auto ch = changed.to(torch::kCPU) != 0;
  LeakageReport r;
  r.changed_pixels = static_cast<std::size_t>(ch.sum().item<std::int64_t>());
  r.unchanged_pixels = static_cast<std::size_t>(changed.numel()) - r.changed_pixels;
  if (r.changed_pixels > 0) r.changed_diff = diff.masked_select(ch).mean().item<double>();
  if (r.unchanged_pixels > 0) r.unchanged_diff = diff.masked_select(ch.logical_not()).mean().item<double>();
  if (r.changed_pixels > 0) {
    if (r.unchanged_diff > 0.0) {
      r.ratio = r.changed_diff / r.unchanged_diff;
    } else {
      r.ratio = r.changed_diff == 0.0 ? 1.0 : std::numeric_limits<double>::infinity();
    }
  }
  return r;
}

std::vector<NormMap> feature_norm_map(const gen::FeaturePyramid& pyramid) {
  std::vector<NormMap> maps;
  for (const auto& level : pyramid.levels) {
    if (!level.defined() || level.dim() != 4) throw ShapeError("feature pyramid levels must be [N, C, H, W]");
    auto raw = level[0].detach().to(torch::kFloat64).pow(2).sum(0).sqrt();
    const double peak = raw.max().item<double>();
    maps.push_back({raw, peak > 0.0 ? raw / peak : torch::zeros_like(raw)});
  }
  return maps;
}

}  // namespace changen::eval
