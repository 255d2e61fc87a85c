#include "gsculpt/perception.h"

#include <cmath>

#include <nlohmann/json.hpp>

#include "gsculpt/error.h"
#include "gsculpt/image_io.h"
#include "gsculpt/random.h"
#include "gsculpt/remote.h"
#include "gsculpt/render.h"

namespace gsculpt {

OracleSegmenter::OracleSegmenter(std::shared_ptr<const GaussianScene> labeled_scene)
    : scene_(std::move(labeled_scene)) {
  if (!scene_ || !scene_->has_labels()) {
    throw Error(ErrorCode::kMissingLabels, "oracle segmenter needs a labeled scene");
  }
}

Mask OracleSegmenter::Segment(const Camera& cam, const Image&, const std::vector<Click>& positive,
                              const std::vector<Click>& negative) const {
  if (positive.empty()) throw Error(ErrorCode::kNoPositiveClick, "no positive click");
  const LabelMap labels = RenderLabelMap(*scene_, cam);
  auto label_under = [&](const Click& c) {
    const int col = std::clamp(static_cast<int>(std::floor(c.x)), 0, cam.width - 1);
    const int row = std::clamp(static_cast<int>(std::floor(c.y)), 0, cam.height - 1);
    return labels.at(row, col);
  };
  std::vector<int32_t> include, exclude;
  for (const Click& c : positive) include.push_back(label_under(c));
  for (const Click& c : negative) exclude.push_back(label_under(c));
  auto contains = [](const std::vector<int32_t>& v, int32_t x) {
    return std::find(v.begin(), v.end(), x) != v.end();
  };
  Mask mask(cam.id, cam.width, cam.height);
  for (size_t p = 0; p < mask.bits.size(); ++p) {
    const int32_t l = labels.labels[p];
    mask.bits[p] = contains(include, l) && !contains(exclude, l) ? 1 : 0;
  }
  return mask;
}

Mask RemoteSegmenter::Segment(const Camera& cam, const Image& image,
                              const std::vector<Click>& positive,
                              const std::vector<Click>& negative) const {
  if (positive.empty()) throw Error(ErrorCode::kNoPositiveClick, "no positive click");
  nlohmann::json points = nlohmann::json::array();
  for (const Click& c : positive) points.push_back({{"x", c.x}, {"y", c.y}, {"label", 1}});
  for (const Click& c : negative) points.push_back({{"x", c.x}, {"y", c.y}, {"label", 0}});
  const nlohmann::json reply =
      PostJson(endpoint_, "/segment", {{"image_png", Base64Encode(EncodePng(image))}, {"points", points}});
  Mask mask;
  try {
    mask = DecodeMaskPng(Base64Decode(reply.at("mask_png").get<std::string>()), cam.id);
  } catch (const nlohmann::json::exception&) {
    throw Error(ErrorCode::kRemoteUnavailable, "segment reply lacks mask_png");
  } catch (const Error& e) {
    throw Error(ErrorCode::kRemoteUnavailable, std::string("segment reply: ") + e.what());
  }
  if (mask.width != cam.width || mask.height != cam.height) {
    throw Error(ErrorCode::kDimensionMismatch, "remote mask size differs from the view");
  }
  return mask;
}

Image Downsample2x(const Image& image) {
  Image out(image.width / 2, image.height / 2);
  for (int r = 0; r < out.height; ++r) {
    for (int c = 0; c < out.width; ++c) {
      for (int ch = 0; ch < 3; ++ch) {
        out.at(r, c)[ch] = 0.25 * (image.at(2 * r, 2 * c)[ch] + image.at(2 * r, 2 * c + 1)[ch] +
                                   image.at(2 * r + 1, 2 * c)[ch] +
                                   image.at(2 * r + 1, 2 * c + 1)[ch]);
      }
    }
  }
  return out;
}

OracleFeatureExtractor::OracleFeatureExtractor(int patch_size) : patch_(patch_size) {
  if (patch_ < 1) throw Error(ErrorCode::kInvalidArgument, "patch size must be >= 1");
}

std::string OracleFeatureExtractor::Describe() const {
  return "oracle(patch=" + std::to_string(patch_) + ")";
}

FeatureMap OracleFeatureExtractor::Extract(const Camera& cam, const Image& image) const {
  if (image.width <= 0 || image.height <= 0) {
    throw Error(ErrorCode::kInvalidArgument, "empty image");
  }
  const Image small = Downsample2x(image);
  FeatureMap fm;
  fm.view_id = cam.id;
  fm.grid_width = small.width / patch_;
  fm.grid_height = small.height / patch_;
  fm.dim = kOracleFeatureDim;
  fm.stride = stride();
  fm.data.assign(static_cast<size_t>(fm.grid_width) * fm.grid_height * fm.dim, 0.0f);
  auto luma = [&small](int r, int c) {
    const double* p = small.at(r, c);
    return 0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2];
  };
  const double n = static_cast<double>(patch_) * patch_;
  for (int gr = 0; gr < fm.grid_height; ++gr) {
    for (int gc = 0; gc < fm.grid_width; ++gc) {
      double sum[3] = {0, 0, 0}, sq[3] = {0, 0, 0};
      double gx = 0.0, gy = 0.0;
      for (int r = gr * patch_; r < (gr + 1) * patch_; ++r) {
        for (int c = gc * patch_; c < (gc + 1) * patch_; ++c) {
          const double* p = small.at(r, c);
          for (int ch = 0; ch < 3; ++ch) {
            sum[ch] += p[ch];
            sq[ch] += p[ch] * p[ch];
          }
          if (c + 1 < (gc + 1) * patch_) gx += std::abs(luma(r, c + 1) - luma(r, c));
          if (r + 1 < (gr + 1) * patch_) gy += std::abs(luma(r + 1, c) - luma(r, c));
        }
      }
      double desc[kOracleFeatureDim];
      for (int ch = 0; ch < 3; ++ch) {
        const double mean = sum[ch] / n;
        desc[ch] = mean;
        desc[3 + ch] = std::sqrt(std::max(0.0, sq[ch] / n - mean * mean));
      }
      const double pairs = patch_ > 1 ? static_cast<double>(patch_) * (patch_ - 1) : 1.0;
      desc[6] = gx / pairs;
      desc[7] = gy / pairs;
      double norm = 0.0;
      for (double v : desc) norm += v * v;
      norm = std::sqrt(norm);
      float* out = fm.cell(gr, gc);
      for (int k = 0; k < kOracleFeatureDim; ++k) {
        out[k] = static_cast<float>(norm > 0.0 ? desc[k] / norm : 0.0);
      }
    }
  }
  return fm;
}

RemoteFeatureExtractor::RemoteFeatureExtractor(std::string endpoint, int patch_size)
    : endpoint_(std::move(endpoint)), patch_(patch_size) {
  if (patch_ < 1) throw Error(ErrorCode::kInvalidArgument, "patch size must be >= 1");
}

FeatureMap RemoteFeatureExtractor::Extract(const Camera& cam, const Image& image) const {
  if (image.width <= 0 || image.height <= 0) {
    throw Error(ErrorCode::kInvalidArgument, "empty image");
  }
  const nlohmann::json reply = PostJson(
      endpoint_, "/features",
      {{"image_png", Base64Encode(EncodePng(image))}, {"downsample", kFeatureDownsample}});
  FeatureMap fm;
  fm.view_id = cam.id;
  fm.stride = stride();
  try {
    fm.grid_height = reply.at("h").get<int>();
    fm.grid_width = reply.at("w").get<int>();
    fm.dim = reply.at("d").get<int>();
    fm.data = reply.at("data").get<std::vector<float>>();
  } catch (const nlohmann::json::exception&) {
    throw Error(ErrorCode::kRemoteUnavailable, "features reply is malformed");
  }
  if (fm.grid_height != image.height / stride() || fm.grid_width != image.width / stride() ||
      fm.dim <= 0 ||
      fm.data.size() != static_cast<size_t>(fm.grid_height) * fm.grid_width * fm.dim) {
    throw Error(ErrorCode::kDimensionMismatch, "remote feature grid inconsistent with stride");
  }
  return fm;
}

FeatureMap NoisyFeatureExtractor::Extract(const Camera& cam, const Image& image) const {
  FeatureMap fm = inner_->Extract(cam, image);
  Rng rng(seed_ * 1000003ULL + static_cast<uint64_t>(cam.id));
  for (float& v : fm.data) v += static_cast<float>(rng.Normal(0.0, sigma_));
  return fm;
}

std::string NoisyFeatureExtractor::Describe() const {
  return inner_->Describe() + "+noise(" + std::to_string(sigma_) + ")";
}

std::shared_ptr<const Segmenter> MakeSegmenter(const std::string& spec,
                                               std::shared_ptr<const GaussianScene> scene) {
  if (spec == "oracle") return std::make_shared<OracleSegmenter>(std::move(scene));
  if (spec.rfind("remote:", 0) == 0) return std::make_shared<RemoteSegmenter>(spec.substr(7));
  throw Error(ErrorCode::kInvalidArgument, "segmenter must be 'oracle' or 'remote:<url>'");
}

std::shared_ptr<const FeatureExtractor> MakeFeatureExtractor(const std::string& spec, int patch_size) {
  if (spec == "oracle") return std::make_shared<OracleFeatureExtractor>(patch_size);
  if (spec.rfind("remote:", 0) == 0) {
    return std::make_shared<RemoteFeatureExtractor>(spec.substr(7), patch_size);
  }
  throw Error(ErrorCode::kInvalidArgument, "feature extractor must be 'oracle' or 'remote:<url>'");
}

}  // namespace gsculpt
