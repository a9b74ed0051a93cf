#include "changen/advtrain/losses.hpp"

#include <sstream>

#include "changen/core/error.hpp"

namespace changen::adv {

torch::Tensor class_balance_weights(const torch::Tensor& labels, int num_classes) {
  auto counts = torch::bincount(labels.reshape({-1}).to(torch::kInt64), {}, num_classes).to(torch::kFloat64);
  const double total = static_cast<double>(labels.numel());
  return torch::where(counts > 0, total / counts.clamp_min(1.0), torch::zeros_like(counts));
}

torch::Tensor weighted_cross_entropy(const torch::Tensor& logits, const torch::Tensor& labels,
                                     const torch::Tensor& class_weights) {
  auto target = labels.to(torch::kInt64).unsqueeze(1);
  auto ce = -torch::log_softmax(logits, 1).gather(1, target).squeeze(1);
  if (!class_weights.defined()) return ce.mean();
  auto w = class_weights.to(logits.scalar_type()).index({labels.to(torch::kInt64)});
  return (w * ce).sum() / w.sum();
}

torch::Tensor d_loss(const torch::Tensor& real_logits, const torch::Tensor& real_labels,
                     const torch::Tensor& fake_logits, int fake_class) {
  const int classes = static_cast<int>(real_logits.size(1));
  auto real = weighted_cross_entropy(real_logits, real_labels, class_balance_weights(real_labels, classes));
  auto fake_labels = torch::full({fake_logits.size(0), fake_logits.size(2), fake_logits.size(3)}, fake_class,
                                 torch::TensorOptions().dtype(torch::kInt64));
  auto fake = weighted_cross_entropy(fake_logits, fake_labels);
  return 0.5 * (real + fake);
}

torch::Tensor g_loss(const torch::Tensor& fake_logits, const torch::Tensor& fake_labels) {
  const int classes = static_cast<int>(fake_logits.size(1));
  return weighted_cross_entropy(fake_logits, fake_labels, class_balance_weights(fake_labels, classes));
}

void require_finite(const torch::Tensor& loss, const std::string& what,
                    std::initializer_list<std::pair<const char*, torch::Tensor>> activations) {
  if (torch::isfinite(loss).all().item<bool>()) return;
  std::ostringstream os;
  os << what << " is not finite";
  for (const auto& [name, t] : activations) {
    if (!t.defined()) continue;
    auto d = t.detach().to(torch::kFloat64);
    os << "; " << name << ": finite=" << torch::isfinite(d).all().item<bool>()
       << " min=" << d.nan_to_num().min().item<double>() << " max=" << d.nan_to_num().max().item<double>()
       << " mean=" << d.nan_to_num().mean().item<double>();
  }
  throw TrainingError(os.str());
}

}  // namespace changen::adv
