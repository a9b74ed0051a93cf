#include "changen/core/types.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "changen/core/error.hpp"

namespace changen {

SemanticMask::SemanticMask(int height, int width, int class_count, std::vector<Label> labels)
    : height_(height), width_(width), class_count_(class_count), labels_(std::move(labels)) {
  if (height < 1 || width < 1) {
    throw ValidationError("mask must be at least 1x1, got " + std::to_string(height) + "x" +
                          std::to_string(width));
  }
  if (class_count < 2 || class_count > 256) {
    throw ValidationError("class count must lie in [2, 256], got " + std::to_string(class_count));
  }
  if (labels_.size() != static_cast<std::size_t>(height) * static_cast<std::size_t>(width)) {
    throw ShapeError("mask label buffer does not match " + std::to_string(height) + "x" +
                     std::to_string(width));
  }
  for (Label l : labels_) {
    if (l >= class_count) {
      throw ValidationError("label " + std::to_string(l) + " >= class count " +
                            std::to_string(class_count));
    }
  }
}

SemanticMask SemanticMask::zeros(int height, int width, int class_count) {
  return SemanticMask(height, width, class_count,
                      std::vector<Label>(static_cast<std::size_t>(std::max(height, 0)) *
                                         static_cast<std::size_t>(std::max(width, 0))));
}

void SemanticMask::set(int row, int col, Label label) {
  if (label >= class_count_) {
    throw ValidationError("label " + std::to_string(label) + " >= class count " +
                          std::to_string(class_count_));
  }
  labels_[index(row, col)] = label;
}

std::size_t SemanticMask::foreground_count() const {
  return static_cast<std::size_t>(
      std::count_if(labels_.begin(), labels_.end(), [](Label l) { return l != kBackground; }));
}

Label SemanticMask::max_label() const {
  return labels_.empty() ? Label{0} : *std::max_element(labels_.begin(), labels_.end());
}

ImageArray::ImageArray(torch::Tensor pixels) {
  if (pixels.dim() != 3 || pixels.size(0) != 3 || pixels.size(1) < 1 || pixels.size(2) < 1) {
    throw ShapeError("image must be [3, H, W], got " + std::to_string(pixels.dim()) + "-d tensor");
  }
  pixels_ = pixels.detach().to(torch::kCPU, torch::kFloat32).contiguous();
  if (!torch::isfinite(pixels_).all().item<bool>()) {
    throw ValidationError("image contains non-finite values");
  }
}

ImageArray ImageArray::filled(int height, int width, float value) {
  return ImageArray(torch::full({3, height, width}, value));
}

float ImageArray::at(int ch, int row, int col) const {
  return pixels_.data_ptr<float>()[(static_cast<std::int64_t>(ch) * height() + row) * width() + col];
}

bool ImageArray::in_range() const {
  return pixels_.ge(-1.0f).all().item<bool>() && pixels_.le(1.0f).all().item<bool>();
}

ImageArray normalize(const RawImage& raw) {
  if (raw.channels != 3) {
    throw ValidationError("expected a 3-channel RGB image, got " + std::to_string(raw.channels) +
                          " channels");
  }
  if (raw.data.size() != static_cast<std::size_t>(raw.height) * raw.width * 3) {
    throw ShapeError("raw image buffer does not match its header");
  }
  auto hwc = torch::from_blob(const_cast<std::uint8_t*>(raw.data.data()),
                              {raw.height, raw.width, 3}, torch::kUInt8);
  auto chw = hwc.permute({2, 0, 1}).to(torch::kFloat32);
  return ImageArray(chw / 127.5f - 1.0f);
}

RawImage denormalize(const ImageArray& image) {
  RawImage raw{image.height(), image.width(), 3, {}};
  auto hwc = ((image.tensor().clamp(-1.0f, 1.0f) + 1.0f) * 127.5f)
                 .round()
                 .permute({1, 2, 0})
                 .contiguous()
                 .to(torch::kUInt8);
  raw.data.assign(hwc.data_ptr<std::uint8_t>(), hwc.data_ptr<std::uint8_t>() + hwc.numel());
  return raw;
}

}  // namespace changen
