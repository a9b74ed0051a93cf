#include "changen/core/visualize.hpp"

#include "changen/core/error.hpp"
#include "changen/core/image_io.hpp"

namespace changen {

torch::Tensor colorize_labels(const torch::Tensor& labels) {
  static const float palette[][3] = {{0.0f, 0.0f, 0.0f},   {1.0f, 1.0f, 1.0f}, {0.2f, 0.5f, 1.0f},
                                     {1.0f, 0.3f, 0.3f},   {0.3f, 1.0f, 0.3f}, {1.0f, 0.9f, 0.2f},
                                     {0.8f, 0.3f, 1.0f},   {0.2f, 0.9f, 0.9f}};
  constexpr int kColors = sizeof palette / sizeof palette[0];
  auto lut = torch::from_blob(const_cast<float*>(&palette[0][0]), {kColors, 3}, torch::kFloat32).clone();
  auto idx = labels.to(torch::kInt64).remainder(kColors);
  return lut.index({idx}).permute({2, 0, 1}) * 2.0f - 1.0f;
}

void write_grid(const std::filesystem::path& path, const std::vector<std::vector<torch::Tensor>>& rows) {
  if (rows.empty() || rows.front().empty()) throw ValidationError("empty image grid");
  const auto h = rows.front().front().size(1);
  const auto w = rows.front().front().size(2);
  std::size_t cols = 0;
  for (const auto& r : rows) cols = std::max(cols, r.size());
  constexpr int gap = 2;
  auto canvas = torch::ones({3, static_cast<std::int64_t>(rows.size()) * (h + gap) - gap,
                             static_cast<std::int64_t>(cols) * (w + gap) - gap});
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j < rows[i].size(); ++j) {
      const auto& t = rows[i][j];
      if (t.size(1) != h || t.size(2) != w) throw ShapeError("grid tiles must share a size");
      const auto r0 = static_cast<std::int64_t>(i) * (h + gap);
      const auto c0 = static_cast<std::int64_t>(j) * (w + gap);
      canvas.slice(1, r0, r0 + h).slice(2, c0, c0 + w).copy_(t.detach().to(torch::kCPU, torch::kFloat32));
    }
  }
  write_image(path, ImageArray(canvas.clamp(-1.0f, 1.0f)));
}

void write_unit_map(const std::filesystem::path& path, const torch::Tensor& map) {
  auto bytes = (map.detach().to(torch::kFloat64).clamp(0.0, 1.0) * 255.0).round().to(torch::kUInt8).contiguous();
  const auto* p = bytes.data_ptr<std::uint8_t>();
  write_gray(path, static_cast<int>(map.size(0)), static_cast<int>(map.size(1)),
             std::span<const std::uint8_t>(p, static_cast<std::size_t>(bytes.numel())));
}

}  // namespace changen
