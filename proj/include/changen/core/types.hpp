#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <torch/torch.h>

namespace changen {

using Label = std::uint8_t;

/// Label 0 is background everywhere; anything > 0 is foreground.
inline constexpr Label kBackground = 0;

struct Pixel {
  int row = 0;
  int col = 0;
  friend bool operator==(const Pixel&, const Pixel&) = default;
  friend auto operator<=>(const Pixel&, const Pixel&) = default;
};

/// Integer label map of one scene at one time step. Row-major, values < class_count.
class SemanticMask {
 public:
  SemanticMask() = default;
  SemanticMask(int height, int width, int class_count, std::vector<Label> labels);

  static SemanticMask zeros(int height, int width, int class_count);

  int height() const { return height_; }
  int width() const { return width_; }
  int class_count() const { return class_count_; }
  std::size_t size() const { return labels_.size(); }
  bool empty() const { return labels_.empty(); }

  Label at(int row, int col) const { return labels_[index(row, col)]; }
  Label at(Pixel p) const { return at(p.row, p.col); }
  void set(int row, int col, Label label);
  void set(Pixel p, Label label) { set(p.row, p.col, label); }

  bool contains(int row, int col) const {
    return row >= 0 && col >= 0 && row < height_ && col < width_;
  }
  bool is_foreground(int row, int col) const { return at(row, col) != kBackground; }

  std::span<const Label> labels() const { return labels_; }
  std::size_t foreground_count() const;
  Label max_label() const;

  friend bool operator==(const SemanticMask&, const SemanticMask&) = default;

 private:
  std::size_t index(int row, int col) const {
    return static_cast<std::size_t>(row) * static_cast<std::size_t>(width_) +
           static_cast<std::size_t>(col);
  }

  int height_ = 0;
  int width_ = 0;
  int class_count_ = 2;
  std::vector<Label> labels_;
};

/// Raw 8-bit raster, row-major interleaved channels.
struct RawImage {
  int height = 0;
  int width = 0;
  int channels = 0;
  std::vector<std::uint8_t> data;

  std::uint8_t at(int row, int col, int ch) const {
    return data[(static_cast<std::size_t>(row) * width + col) * channels + ch];
  }
  friend bool operator==(const RawImage&, const RawImage&) = default;
};

/// Normalized RGB image in [-1, 1], stored as a contiguous float tensor [3, H, W].
class ImageArray {
 public:
  ImageArray() = default;
  /// Accepts [3, H, W]; converts to contiguous float32 on CPU. Throws on non-finite values.
  explicit ImageArray(torch::Tensor pixels);

  static ImageArray filled(int height, int width, float value);

  int height() const { return static_cast<int>(pixels_.size(1)); }
  int width() const { return static_cast<int>(pixels_.size(2)); }
  bool empty() const { return !pixels_.defined(); }

  const torch::Tensor& tensor() const { return pixels_; }
  float at(int ch, int row, int col) const;

  /// True when every value lies in [-1, 1].
  bool in_range() const;

 private:
  torch::Tensor pixels_;
};

/// Maps 8-bit RGB [0, 255] linearly onto [-1, 1].
ImageArray normalize(const RawImage& raw);
/// Inverse of normalize with rounding; values outside [-1, 1] are clamped.
RawImage denormalize(const ImageArray& image);

}  // namespace changen
