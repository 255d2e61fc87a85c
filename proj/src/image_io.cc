#include "gsculpt/image_io.h"

#include <algorithm>
#include <cmath>
#include <cstring>

#include <boost/beast/core/detail/base64.hpp>
#include <png.h>

#include "gsculpt/error.h"
#include "gsculpt/scene_io.h"

namespace gsculpt {

namespace {

std::string EncodeRaw(const std::vector<uint8_t>& pixels, int width, int height,
                      png_uint_32 format) {
  png_image img;
  std::memset(&img, 0, sizeof(img));
  img.version = PNG_IMAGE_VERSION;
  img.width = static_cast<png_uint_32>(width);
  img.height = static_cast<png_uint_32>(height);
  img.format = format;
  png_alloc_size_t size = 0;
  if (!png_image_write_to_memory(&img, nullptr, &size, 0, pixels.data(), 0, nullptr)) {
    throw Error(ErrorCode::kIoFailure, std::string("png encode: ") + img.message);
  }
  std::string out(size, '\0');
  if (!png_image_write_to_memory(&img, out.data(), &size, 0, pixels.data(), 0, nullptr)) {
    throw Error(ErrorCode::kIoFailure, std::string("png encode: ") + img.message);
  }
  out.resize(size);
  return out;
}

std::vector<uint8_t> DecodeRaw(const std::string& bytes, png_uint_32 format, int& width,
                               int& height) {
  png_image img;
  std::memset(&img, 0, sizeof(img));
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&img, bytes.data(), bytes.size())) {
    throw Error(ErrorCode::kIoFailure, std::string("png decode: ") + img.message);
  }
  img.format = format;
  std::vector<uint8_t> pixels(PNG_IMAGE_SIZE(img));
  if (!png_image_finish_read(&img, nullptr, pixels.data(), 0, nullptr)) {
    png_image_free(&img);
    throw Error(ErrorCode::kIoFailure, std::string("png decode: ") + img.message);
  }
  width = static_cast<int>(img.width);
  height = static_cast<int>(img.height);
  return pixels;
}

}  // namespace

std::string EncodePng(const Image& image) {
  std::vector<uint8_t> px(image.rgb.size());
  for (size_t i = 0; i < px.size(); ++i) {
    px[i] = static_cast<uint8_t>(std::lround(255.0 * std::clamp(image.rgb[i], 0.0, 1.0)));
  }
  return EncodeRaw(px, image.width, image.height, PNG_FORMAT_RGB);
}

Image DecodeRgbPng(const std::string& bytes) {
  int w = 0, h = 0;
  const auto px = DecodeRaw(bytes, PNG_FORMAT_RGB, w, h);
  Image image(w, h);
  for (size_t i = 0; i < px.size(); ++i) image.rgb[i] = px[i] / 255.0;
  return image;
}

void SavePng(const Image& image, const std::filesystem::path& path) {
  WriteFileBytes(EncodePng(image), path);
}

std::string EncodeMaskPng(const Mask& mask) {
  std::vector<uint8_t> px(mask.bits.size());
  for (size_t i = 0; i < px.size(); ++i) px[i] = mask.bits[i] ? 255 : 0;
  return EncodeRaw(px, mask.width, mask.height, PNG_FORMAT_GRAY);
}

Mask DecodeMaskPng(const std::string& bytes, int view_id) {
  int w = 0, h = 0;
  const auto px = DecodeRaw(bytes, PNG_FORMAT_GRAY, w, h);
  Mask mask(view_id, w, h);
  for (size_t i = 0; i < px.size(); ++i) mask.bits[i] = px[i] >= 128 ? 1 : 0;
  return mask;
}

void SaveMaskPng(const Mask& mask, const std::filesystem::path& path) {
  WriteFileBytes(EncodeMaskPng(mask), path);
}

Mask LoadMaskPng(const std::filesystem::path& path, int view_id) {
  return DecodeMaskPng(ReadFileBytes(path), view_id);
}

std::string Base64Encode(const std::string& bytes) {
  namespace b64 = boost::beast::detail::base64;
  std::string out(b64::encoded_size(bytes.size()), '\0');
  out.resize(b64::encode(out.data(), bytes.data(), bytes.size()));
  return out;
}

std::string Base64Decode(const std::string& text) {
  namespace b64 = boost::beast::detail::base64;
  // The decoder stops at '=' padding, so measure consumption without it.
  size_t len = text.size();
  for (int pad = 0; pad < 2 && len > 0 && text[len - 1] == '='; ++pad) --len;
  std::string out(b64::decoded_size(text.size()), '\0');
  const auto [written, read] = b64::decode(out.data(), text.data(), len);
  if (read != len) throw Error(ErrorCode::kInvalidArgument, "invalid base64 payload");
  out.resize(written);
  return out;
}

}  // namespace gsculpt
