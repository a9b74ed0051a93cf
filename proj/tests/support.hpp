#pragma once

#include <filesystem>
#include <random>
#include <string>

#include <unistd.h>

#include "changen/core/rng.hpp"
#include "changen/core/types.hpp"

namespace changen::testing {

/// Fresh scratch directory under the system temp dir, removed on destruction.
class ScratchDir {
 public:
  explicit ScratchDir(const std::string& tag) {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("changen_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~ScratchDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  ScratchDir(const ScratchDir&) = delete;
  ScratchDir& operator=(const ScratchDir&) = delete;
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

/// Random label map of rectangles and blobs, foreground fraction roughly 20-40 %.
inline SemanticMask random_mask(int h, int w, int classes, Rng& rng) {
  auto m = SemanticMask::zeros(h, w, classes);
  const int shapes = rng.uniform_int(0, 8);
  for (int s = 0; s < shapes; ++s) {
    const auto label = static_cast<Label>(rng.uniform_int(1, classes - 1));
    const int rh = rng.uniform_int(1, std::max(1, h / 4));
    const int rw = rng.uniform_int(1, std::max(1, w / 4));
    const int r0 = rng.uniform_int(0, h - rh);
    const int c0 = rng.uniform_int(0, w - rw);
    const bool ellipse = rng.bernoulli(0.3);
    for (int r = r0; r < r0 + rh; ++r) {
      for (int c = c0; c < c0 + rw; ++c) {
        if (ellipse) {
          const double dy = (r - r0 + 0.5) / rh - 0.5, dx = (c - c0 + 0.5) / rw - 0.5;
          if (dx * dx + dy * dy > 0.25) continue;
        }
        m.set(r, c, label);
      }
    }
  }
  return m;
}

}  // namespace changen::testing
