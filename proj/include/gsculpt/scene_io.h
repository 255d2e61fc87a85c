#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include <nlohmann/json.hpp>

#include "gsculpt/types.h"

namespace gsculpt {

// Binary little-endian splat PLY. Stored attributes are pre-activation
// (logit opacity, log scale, raw SH DC); the loader applies the activations
// and the writer inverts them. An optional int `label` vertex property
// carries per-Gaussian ground-truth labels.
GaussianScene LoadScenePly(const std::filesystem::path& path);
GaussianScene ParseScenePly(const std::string& bytes);
void SaveScenePly(const GaussianScene& scene, const std::filesystem::path& path);
std::string SerializeScenePly(const GaussianScene& scene);

nlohmann::json CamerasToJson(const ViewSet& views);
ViewSet CamerasFromJson(const nlohmann::json& doc);
ViewSet LoadCameras(const std::filesystem::path& path);
void SaveCameras(const ViewSet& views, const std::filesystem::path& path);

nlohmann::json ClicksToJson(const ClickSet& clicks, bool with_source = false);
ClickSet ClicksFromJson(const nlohmann::json& doc);
ClickSet LoadClicks(const std::filesystem::path& path);
void SaveClicks(const ClickSet& clicks, const std::filesystem::path& path, bool with_source);
// Throws kBadClick when a click lies outside its camera's image.
void ValidateClicks(const ClickSet& clicks, const ViewSet& views);

nlohmann::json SelectionToJson(const Selection& selection);
Selection SelectionFromJson(const nlohmann::json& doc);
Selection LoadSelection(const std::filesystem::path& path);
void SaveSelection(const Selection& selection, const std::filesystem::path& path);

// Uniform-stride subset of ceil(rate * K) views starting at index 0,
// optionally permuted by a seeded shuffle.
ViewSet SubsampleViews(const ViewSet& views, double rate, bool shuffle, uint64_t seed);

nlohmann::json ReadJsonFile(const std::filesystem::path& path);
void WriteJsonFile(const nlohmann::json& doc, const std::filesystem::path& path);
std::string ReadFileBytes(const std::filesystem::path& path);
void WriteFileBytes(const std::string& bytes, const std::filesystem::path& path);

}  // namespace gsculpt
