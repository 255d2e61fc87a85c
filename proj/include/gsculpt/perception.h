#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "gsculpt/epipolar.h"
#include "gsculpt/types.h"

namespace gsculpt {

// Promptable 2D segmenter role.
class Segmenter {
 public:
  virtual ~Segmenter() = default;
  // Throws kNoPositiveClick without positives, kRemoteUnavailable on
  // transport failure. An empty mask is a valid result.
  virtual Mask Segment(const Camera& cam, const Image& image, const std::vector<Click>& positive,
                       const std::vector<Click>& negative) const = 0;
  virtual std::string Describe() const = 0;
};

// Dense feature extractor role.
class FeatureExtractor {
 public:
  virtual ~FeatureExtractor() = default;
  virtual FeatureMap Extract(const Camera& cam, const Image& image) const = 0;
  // Image pixels per feature cell.
  virtual int stride() const = 0;
  virtual std::string Describe() const = 0;
};

// Ground-truth segmenter over a labeled scene: the union of label regions
// under the positive clicks minus label regions under negative clicks.
class OracleSegmenter : public Segmenter {
 public:
  explicit OracleSegmenter(std::shared_ptr<const GaussianScene> labeled_scene);

  Mask Segment(const Camera& cam, const Image& image, const std::vector<Click>& positive,
               const std::vector<Click>& negative) const override;
  std::string Describe() const override { return "oracle"; }

 private:
  std::shared_ptr<const GaussianScene> scene_;
};

// POST {endpoint}/segment with the image and point prompts.
class RemoteSegmenter : public Segmenter {
 public:
  explicit RemoteSegmenter(std::string endpoint) : endpoint_(std::move(endpoint)) {}

  Mask Segment(const Camera& cam, const Image& image, const std::vector<Click>& positive,
               const std::vector<Click>& negative) const override;
  std::string Describe() const override { return "remote:" + endpoint_; }

 private:
  std::string endpoint_;
};

inline constexpr int kFeatureDownsample = 2;
inline constexpr int kOracleFeatureDim = 8;

// Hand-built descriptor per cell of the 2x-downsampled image: mean RGB, RGB
// standard deviation, mean |dx| and |dy| of luminance, L2-normalized. Cells
// see only their own pixels.
class OracleFeatureExtractor : public FeatureExtractor {
 public:
  explicit OracleFeatureExtractor(int patch_size = 16);

  FeatureMap Extract(const Camera& cam, const Image& image) const override;
  int stride() const override { return patch_ * kFeatureDownsample; }
  std::string Describe() const override;

 private:
  int patch_;
};

// POST {endpoint}/features; the returned grid must match the configured stride.
class RemoteFeatureExtractor : public FeatureExtractor {
 public:
  RemoteFeatureExtractor(std::string endpoint, int patch_size);

  FeatureMap Extract(const Camera& cam, const Image& image) const override;
  int stride() const override { return patch_ * kFeatureDownsample; }
  std::string Describe() const override { return "remote:" + endpoint_; }

 private:
  std::string endpoint_;
  int patch_;
};

// Adds N(0, sigma) noise to every descriptor entry, seeded per view.
class NoisyFeatureExtractor : public FeatureExtractor {
 public:
  NoisyFeatureExtractor(std::shared_ptr<const FeatureExtractor> inner, double sigma, uint64_t seed)
      : inner_(std::move(inner)), sigma_(sigma), seed_(seed) {}

  FeatureMap Extract(const Camera& cam, const Image& image) const override;
  int stride() const override { return inner_->stride(); }
  std::string Describe() const override;

 private:
  std::shared_ptr<const FeatureExtractor> inner_;
  double sigma_;
  uint64_t seed_;
};

// 2x box downsampling (odd trailing row/column dropped).
Image Downsample2x(const Image& image);

// "oracle" or "remote:<url>". The oracle needs a labeled scene.
std::shared_ptr<const Segmenter> MakeSegmenter(const std::string& spec,
                                               std::shared_ptr<const GaussianScene> scene);
std::shared_ptr<const FeatureExtractor> MakeFeatureExtractor(const std::string& spec, int patch_size);

}  // namespace gsculpt
