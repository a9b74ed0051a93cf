#include "changen/core/image_io.hpp"

#include <png.h>

#include <string>

#include "changen/core/error.hpp"

namespace changen {
namespace {

struct PngImage {
  png_image image{};
  PngImage() {
    image.version = PNG_IMAGE_VERSION;
  }
  ~PngImage() { png_image_free(&image); }
  PngImage(const PngImage&) = delete;
  PngImage& operator=(const PngImage&) = delete;
};

void begin_read(PngImage& png, const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw IngestionError("missing file " + path.string());
  if (!png_image_begin_read_from_file(&png.image, path.c_str())) {
    throw IngestionError(path.string() + ": " + png.image.message);
  }
}

}  // namespace

RawImage read_png(const std::filesystem::path& path) {
  PngImage png;
  begin_read(png, path);
  const bool color = (png.image.format & PNG_FORMAT_FLAG_COLOR) != 0;
  png.image.format = color ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  RawImage img;
  img.height = static_cast<int>(png.image.height);
  img.width = static_cast<int>(png.image.width);
  img.channels = color ? 3 : 1;
  img.data.resize(PNG_IMAGE_SIZE(png.image));
  if (!png_image_finish_read(&png.image, nullptr, img.data.data(), 0, nullptr)) {
    throw IngestionError(path.string() + ": " + png.image.message);
  }
  return img;
}

std::pair<int, int> png_size(const std::filesystem::path& path) {
  PngImage png;
  begin_read(png, path);
  return {static_cast<int>(png.image.height), static_cast<int>(png.image.width)};
}

void write_png(const std::filesystem::path& path, const RawImage& image) {
  if (image.channels != 1 && image.channels != 3) {
    throw ValidationError("only 1- or 3-channel rasters can be written");
  }
  if (image.data.size() != static_cast<std::size_t>(image.height) * image.width * image.channels) {
    throw ShapeError("raster buffer does not match its header");
  }
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  PngImage png;
  png.image.width = static_cast<png_uint_32>(image.width);
  png.image.height = static_cast<png_uint_32>(image.height);
  png.image.format = image.channels == 1 ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
  if (!png_image_write_to_file(&png.image, path.c_str(), 0, image.data.data(), 0, nullptr)) {
    throw IngestionError("cannot write " + path.string() + ": " + png.image.message);
  }
}

SemanticMask read_mask(const std::filesystem::path& path, int class_count) {
  auto raw = read_png(path);
  if (raw.channels != 1) {
    throw ValidationError(path.string() + ": mask must be single-channel, got " +
                          std::to_string(raw.channels) + " channels");
  }
  int c = class_count;
  if (c <= 0) {
    int max_label = 0;
    for (auto v : raw.data) max_label = std::max<int>(max_label, v);
    c = std::max(2, max_label + 1);
  }
  return SemanticMask(raw.height, raw.width, c, std::move(raw.data));
}

void write_mask(const std::filesystem::path& path, const SemanticMask& mask) {
  write_gray(path, mask.height(), mask.width(), mask.labels());
}

ImageArray read_image(const std::filesystem::path& path) { return normalize(read_png(path)); }

void write_image(const std::filesystem::path& path, const ImageArray& image) {
  write_png(path, denormalize(image));
}

void write_gray(const std::filesystem::path& path, int height, int width,
                std::span<const std::uint8_t> data) {
  RawImage raw{height, width, 1, std::vector<std::uint8_t>(data.begin(), data.end())};
  write_png(path, raw);
}

}  // namespace changen
