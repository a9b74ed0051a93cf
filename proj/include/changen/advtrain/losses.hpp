#pragma once

#include <initializer_list>
#include <string>
#include <utility>

#include <torch/torch.h>

namespace changen::adv {

/// Inverse-frequency weights over `num_classes`: w_c = numel / count_c for classes present
/// in `labels`, 0 for absent ones.
torch::Tensor class_balance_weights(const torch::Tensor& labels, int num_classes);

/// Per-pixel cross-entropy of logits [N, K, H, W] against labels [N, H, W], averaged with
/// per-class weights (sum(w * ce) / sum(w)); plain mean when class_weights is undefined.
torch::Tensor weighted_cross_entropy(const torch::Tensor& logits, const torch::Tensor& labels,
                                     const torch::Tensor& class_weights = {});

/// Discriminator objective: real pixels classified as their time-t semantic class
/// (class-balanced), fake pixels as the fake class; the two terms are averaged.
torch::Tensor d_loss(const torch::Tensor& real_logits, const torch::Tensor& real_labels,
                     const torch::Tensor& fake_logits, int fake_class);

/// Generator objective: fake pixels classified as their post-event semantic class
/// (class-balanced).
torch::Tensor g_loss(const torch::Tensor& fake_logits, const torch::Tensor& fake_labels);

/// Throws TrainingError with summary statistics of the given activations when `loss` is
/// not finite.
void require_finite(const torch::Tensor& loss, const std::string& what,
                    std::initializer_list<std::pair<const char*, torch::Tensor>> activations);

}  // namespace changen::adv
