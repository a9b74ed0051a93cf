#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include <Eigen/Dense>
#include <torch/torch.h>

#include "changen/core/types.hpp"
#include "changen/gennet/generator.hpp"

namespace changen::eval {

/// Gaussian summary of a feature set. Sigma is the unbiased sample covariance; with fewer
/// than two samples it is replaced by ridge * I.
struct FeatureStats {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
  std::int64_t count = 0;

  int dim() const { return static_cast<int>(mean.size()); }
};

FeatureStats feature_stats(const Eigen::MatrixXd& features, double ridge = 1e-6);
/// features: [N, d] tensor of any floating dtype.
FeatureStats feature_stats(const torch::Tensor& features, double ridge = 1e-6);

struct FidReport {
  double value = 0.0;
  /// True when the square-root intermediate had eigenvalues below -tolerance that were floored.
  bool regularized = false;
  double min_eigenvalue = 0.0;
};

/// Frechet distance between two Gaussians. The trace of (Sa Sb)^{1/2} is taken as the trace
/// of (Sa^{1/2} Sb Sa^{1/2})^{1/2}, whose symmetrized eigenvalues are floored at `floor`.
FidReport fid_report(const FeatureStats& a, const FeatureStats& b, double floor = 1e-10);
double fid(const FeatureStats& a, const FeatureStats& b, double floor = 1e-10);

/// exp(mean KL(p(y|x) || p(y))) over rows of an [N, K] probability matrix.
double inception_score(const Eigen::MatrixXd& probs, double eps = 1e-12);
double inception_score(const torch::Tensor& probs, double eps = 1e-12);

struct LeakageReport {
  double changed_diff = 0.0;
  double unchanged_diff = 0.0;
  std::size_t changed_pixels = 0;
  std::size_t unchanged_pixels = 0;
  /// changed / unchanged. Absent when nothing changed; 1 when both diffs are zero;
  /// +inf when only the unchanged diff is zero.
  std::optional<double> ratio;
};

/// Mean absolute pixel difference between I_t and the synthetic I_{t+1}, split by the
/// binary change map [H, W] (nonzero = changed).
LeakageReport leakage_metric(const ImageArray& image_t, const ImageArray& image_t1, const torch::Tensor& changed);

struct NormMap {
  torch::Tensor raw;         // [H_i, W_i] l2 norm over channels
  torch::Tensor normalized;  // raw / max(raw), zeros when max is 0
};

/// Per-level channel l2 norm maps of the first item of each pyramid level.
std::vector<NormMap> feature_norm_map(const gen::FeaturePyramid& pyramid);

}  // namespace changen::eval
