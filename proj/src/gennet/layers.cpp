#include "changen/gennet/layers.hpp"

#include <algorithm>
#include <cmath>

#include "changen/core/tensor.hpp"

namespace changen::gen {

int scaled_channels(int base, double width_scale) {
  return std::max(1, static_cast<int>(std::lround(base * width_scale)));
}

int group_count(int channels) {
  for (int g = std::min(32, channels); g > 1; --g) {
    if (channels % g == 0) return g;
  }
  return 1;
}

torch::Tensor lrelu(const torch::Tensor& x) { return torch::leaky_relu(x, kLeakySlope); }

torch::Tensor instance_norm(const torch::Tensor& x, double eps) {
  auto mean = x.mean({2, 3}, true);
  auto centered = x - mean;
  auto var = centered.pow(2).mean({2, 3}, true);
  return centered / torch::sqrt(var + eps);
}

torch::Tensor group_norm(const torch::Tensor& x, double eps) {
  return torch::group_norm(x, group_count(static_cast<int>(x.size(1))), {}, {}, eps);
}

torch::Tensor upsample2x(const torch::Tensor& x) {
  return resize_nearest(x, static_cast<int>(x.size(2) * 2), static_cast<int>(x.size(3) * 2));
}

SNConv2dImpl::SNConv2dImpl(const SNConv2dOptions& options) : options_(options) {
  if (options_.padding < 0) options_.padding = options_.kernel_size / 2;
  const auto k = options_.kernel_size;
  const double fan_in = static_cast<double>(options_.in_channels) * k * k;
  const double bound = 1.0 / std::sqrt(fan_in);
  weight_orig_ = register_parameter(
      "weight_orig",
      torch::empty({options_.out_channels, options_.in_channels, k, k}).uniform_(-bound, bound));
  if (options_.bias) {
    bias_ = register_parameter("bias", torch::empty({options_.out_channels}).uniform_(-bound, bound));
  }
  auto u = torch::randn({options_.out_channels});
  auto v = torch::randn({options_.in_channels * k * k});
  u_ = register_buffer("u", u / (u.norm() + 1e-12));
  v_ = register_buffer("v", v / (v.norm() + 1e-12));
}

torch::Tensor SNConv2dImpl::sigma() {
  auto w = weight_orig_.reshape({options_.out_channels, -1});
  // clones: a later training-mode call updates u_ and v_ in place while this graph lives
  return torch::dot(u_.clone(), torch::mv(w, v_.clone()));
}

torch::Tensor SNConv2dImpl::normalized_weight() {
  if (is_training()) {
    torch::NoGradGuard no_grad;
    auto w = weight_orig_.reshape({options_.out_channels, -1});
    auto v = torch::mv(w.t(), u_);
    v_.copy_(v / (v.norm() + 1e-12));
    auto u = torch::mv(w, v_);
    u_.copy_(u / (u.norm() + 1e-12));
  }
  return weight_orig_ / sigma();
}

torch::Tensor SNConv2dImpl::forward(const torch::Tensor& x) {
  return torch::conv2d(x, normalized_weight(), bias_, options_.stride, options_.padding);
}

SpadeImpl::SpadeImpl(int channels, int cond_channels, int hidden, NormKind kind) : kind_(kind) {
  shared_ = register_module("shared", SNConv2d(SNConv2dOptions(cond_channels, hidden, 3)));
  gamma_ = register_module("gamma", SNConv2d(SNConv2dOptions(hidden, channels, 3)));
  beta_ = register_module("beta", SNConv2d(SNConv2dOptions(hidden, channels, 3)));
}

torch::Tensor SpadeImpl::forward(const torch::Tensor& x, const torch::Tensor& cond) {
  auto c = resize_nearest(cond, static_cast<int>(x.size(2)), static_cast<int>(x.size(3)));
  auto h = torch::relu(shared_->forward(c));
  auto normalized = kind_ == NormKind::Instance ? instance_norm(x) : group_norm(x);
  return normalized * (1 + gamma_->forward(h)) + beta_->forward(h);
}

}  // namespace changen::gen
