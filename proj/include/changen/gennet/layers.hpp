#pragma once

#include <torch/torch.h>

namespace changen::gen {

inline constexpr double kLeakySlope = 0.2;
inline constexpr double kNormEpsilon = 1e-5;

/// Puts a module in eval mode for the guard's lifetime.
class EvalScope {
 public:
  explicit EvalScope(torch::nn::Module& m) : module_(m), was_training_(m.is_training()) { m.eval(); }
  ~EvalScope() { module_.train(was_training_); }
  EvalScope(const EvalScope&) = delete;
  EvalScope& operator=(const EvalScope&) = delete;

 private:
  torch::nn::Module& module_;
  bool was_training_;
};

/// Channel count scaled by the global width factor, never below 1.
int scaled_channels(int base, double width_scale);

/// Largest divisor of `channels` not above 32 (equals min(32, channels) for powers of two).
int group_count(int channels);

torch::Tensor lrelu(const torch::Tensor& x);

/// Parameter-free per-sample, per-channel normalization over the spatial axes.
/// A 1x1 map normalizes to exactly zero, a constant one to zero up to rounding.
torch::Tensor instance_norm(const torch::Tensor& x, double eps = kNormEpsilon);

/// Parameter-free group normalization with group_count(channels) groups.
torch::Tensor group_norm(const torch::Tensor& x, double eps = kNormEpsilon);

torch::Tensor upsample2x(const torch::Tensor& x);

struct SNConv2dOptions {
  SNConv2dOptions(int in, int out, int kernel) : in_channels(in), out_channels(out), kernel_size(kernel) {}
  int in_channels;
  int out_channels;
  int kernel_size;
  int stride = 1;
  int padding = -1;  // -1: same padding (kernel / 2)
  bool bias = true;

  SNConv2dOptions& with_stride(int s) { stride = s; return *this; }
  SNConv2dOptions& with_padding(int p) { padding = p; return *this; }
  SNConv2dOptions& with_bias(bool b) { bias = b; return *this; }
};

/// Convolution whose weight is divided by its largest singular value, estimated with one
/// power iteration per training-mode forward. In eval mode the stored vectors are reused,
/// so inference is a pure function of the parameters and buffers.
class SNConv2dImpl : public torch::nn::Module {
 public:
  explicit SNConv2dImpl(const SNConv2dOptions& options);

  torch::Tensor forward(const torch::Tensor& x);

  /// Weight actually applied by forward (weight_orig / sigma).
  torch::Tensor normalized_weight();
  /// Current sigma estimate from the stored power-iteration vectors.
  torch::Tensor sigma();

  const SNConv2dOptions& options() const { return options_; }

 private:
  SNConv2dOptions options_;
  torch::Tensor weight_orig_;
  torch::Tensor bias_;
  torch::Tensor u_;
  torch::Tensor v_;
};
TORCH_MODULE(SNConv2d);

enum class NormKind { Instance, Group };

/// Spatially-adaptive normalization: norm(x) * (1 + gamma(cond)) + beta(cond), with gamma
/// and beta predicted by a small conv net from the conditioning map.
class SpadeImpl : public torch::nn::Module {
 public:
  SpadeImpl(int channels, int cond_channels, int hidden, NormKind kind);

  /// cond is resized (nearest) to x's spatial size.
  torch::Tensor forward(const torch::Tensor& x, const torch::Tensor& cond);

 private:
  NormKind kind_;
  SNConv2d shared_{nullptr};
  SNConv2d gamma_{nullptr};
  SNConv2d beta_{nullptr};
};
TORCH_MODULE(Spade);

}  // namespace changen::gen
