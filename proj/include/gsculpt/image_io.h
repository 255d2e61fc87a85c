#pragma once

#include <filesystem>
#include <string>

#include "gsculpt/types.h"

namespace gsculpt {

// 8-bit RGB PNG, round(255 * clamp(v, 0, 1)).
std::string EncodePng(const Image& image);
Image DecodeRgbPng(const std::string& bytes);
void SavePng(const Image& image, const std::filesystem::path& path);

// 8-bit grayscale PNG: 0 outside, 255 inside. Decoding treats >= 128 as set.
std::string EncodeMaskPng(const Mask& mask);
Mask DecodeMaskPng(const std::string& bytes, int view_id = 0);
void SaveMaskPng(const Mask& mask, const std::filesystem::path& path);
Mask LoadMaskPng(const std::filesystem::path& path, int view_id = 0);

std::string Base64Encode(const std::string& bytes);
std::string Base64Decode(const std::string& text);

}  // namespace gsculpt
