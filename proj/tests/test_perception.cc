#include <gtest/gtest.h>

#include "gsculpt/error.h"
#include "gsculpt/image_io.h"
#include "gsculpt/perception.h"
#include "gsculpt/render.h"
#include "gsculpt/synth_bench.h"
#include "gsculpt/voting.h"
#include "test_util.h"
#include "stub_remote.h"

namespace gsculpt {
namespace {

using testing::CodeOf;

Click At(int view, double x, double y, Polarity p = Polarity::kPositive) {
  Click c;
  c.view_id = view;
  c.x = x;
  c.y = y;
  c.polarity = p;
  return c;
}

Camera Flat(int id, int w, int h) {
  Camera cam;
  cam.id = id;
  cam.width = w;
  cam.height = h;
  cam.fx = cam.fy = w;
  cam.cx = w / 2.0;
  cam.cy = h / 2.0;
  return cam;
}

double Dot(const FeatureMap& f, int r1, int c1, int r2, int c2) {
  double s = 0.0;
  for (int k = 0; k < f.dim; ++k) s += double(f.cell(r1, c1)[k]) * f.cell(r2, c2)[k];
  return s;
}

class OracleSegmenterTest : public ::testing::Test {
 protected:
  void SetUp() override {
    SceneSpec spec;
    spec.seed = 2;
    spec.orbit.count = 4;
    generated_ = GenerateScene(spec);
    scene_ = std::make_shared<const GaussianScene>(generated_.scene);
    target_ = ChooseTarget(generated_);
  }
  GeneratedScene generated_;
  std::shared_ptr<const GaussianScene> scene_;
  BenchTarget target_;
};

TEST_F(OracleSegmenterTest, PositiveClickGivesLabelRegion) {
  OracleSegmenter seg(scene_);
  const Camera& cam = generated_.views[0];
  const Mask m = seg.Segment(cam, Image(cam.width, cam.height), {target_.click}, {});
  EXPECT_EQ(m, LabelMask(generated_.label_maps[0], target_.label, cam.id));
  EXPECT_TRUE(m.any());
}

TEST_F(OracleSegmenterTest, NegativeOnSameObjectCancels) {
  OracleSegmenter seg(scene_);
  const Camera& cam = generated_.views[0];
  Click neg = target_.click;
  neg.polarity = Polarity::kNegative;
  EXPECT_FALSE(seg.Segment(cam, Image(cam.width, cam.height), {target_.click}, {neg}).any());
}

TEST_F(OracleSegmenterTest, NeedsPositiveClickAndLabels) {
  OracleSegmenter seg(scene_);
  const Camera& cam = generated_.views[0];
  EXPECT_EQ(CodeOf([&] { seg.Segment(cam, Image(cam.width, cam.height), {}, {}); }),
            ErrorCode::kNoPositiveClick);
  auto unlabeled = std::make_shared<const GaussianScene>(generated_.scene.gaussians());
  EXPECT_EQ(CodeOf([&] { OracleSegmenter{unlabeled}; }), ErrorCode::kMissingLabels);
  EXPECT_EQ(CodeOf([&] { MakeSegmenter("oracle", unlabeled); }), ErrorCode::kMissingLabels);
  EXPECT_EQ(CodeOf([&] { MakeSegmenter("sam", scene_); }), ErrorCode::kInvalidArgument);
  EXPECT_EQ(MakeSegmenter("remote:http://127.0.0.1:1", scene_)->Describe(), "remote:http://127.0.0.1:1");
}

TEST(Downsample, AveragesBlocks) {
  Image img(4, 2);
  for (int c = 0; c < 4; ++c) {
    img.at(0, c)[0] = c;
    img.at(1, c)[0] = 10 + c;
  }
  const Image small = Downsample2x(img);
  ASSERT_EQ(small.width, 2);
  ASSERT_EQ(small.height, 1);
  EXPECT_DOUBLE_EQ(small.at(0, 0)[0], (0 + 1 + 10 + 11) / 4.0);
  EXPECT_DOUBLE_EQ(small.at(0, 1)[0], (2 + 3 + 12 + 13) / 4.0);
}

TEST(OracleFeatures, GridGeometry) {
  OracleFeatureExtractor fx(16);
  EXPECT_EQ(fx.stride(), 32);
  const FeatureMap f = fx.Extract(Flat(3, 128, 128), Image(128, 128));
  EXPECT_EQ(f.grid_width, 4);
  EXPECT_EQ(f.grid_height, 4);
  EXPECT_EQ(f.stride, 32);
  EXPECT_EQ(f.view_id, 3);
  EXPECT_EQ(f.dim, kOracleFeatureDim);
  EXPECT_EQ(f.data.size(), 4u * 4u * kOracleFeatureDim);
  EXPECT_EQ(CodeOf([] { OracleFeatureExtractor{0}; }), ErrorCode::kInvalidArgument);
}

TEST(OracleFeatures, ConstantImageGivesIdenticalUnitCells) {
  Image img(64, 64);
  for (size_t i = 0; i < img.rgb.size(); i += 3) {
    img.rgb[i] = 0.2;
    img.rgb[i + 1] = 0.7;
    img.rgb[i + 2] = 0.4;
  }
  const FeatureMap f = OracleFeatureExtractor(4).Extract(Flat(0, 64, 64), img);
  for (int r = 0; r < f.grid_height; ++r) {
    for (int c = 0; c < f.grid_width; ++c) {
      for (int k = 0; k < f.dim; ++k) EXPECT_EQ(f.cell(r, c)[k], f.cell(0, 0)[k]);
    }
  }
  EXPECT_NEAR(Dot(f, 0, 0, 0, 0), 1.0, 1e-6);
}

TEST(OracleFeatures, TwoColourCardSeparates) {
  Image img(64, 64);
  for (int r = 0; r < 64; ++r) {
    for (int c = 0; c < 64; ++c) img.at(r, c)[c < 32 ? 0 : 2] = 1.0;
  }
  const FeatureMap f = OracleFeatureExtractor(4).Extract(Flat(0, 64, 64), img);
  ASSERT_EQ(f.grid_width, 8);
  for (int r = 0; r < f.grid_height; ++r) {
    for (int c = 0; c < f.grid_width; ++c) {
      const bool left = c < 4;
      EXPECT_NEAR(Dot(f, r, c, 0, left ? 0 : 7), 1.0, 1e-6);
      EXPECT_LT(Dot(f, r, c, 0, left ? 7 : 0), 0.5);
    }
  }
}

TEST(OracleFeatures, ShiftByStrideShiftsGrid) {
  Rng rng(8);
  Image img(96, 64);
  for (double& v : img.rgb) v = rng.Uniform();
  const int stride = 8;  // patch 4
  Image shifted(96, 64);
  for (int r = 0; r < 64; ++r) {
    for (int c = stride; c < 96; ++c) {
      for (int ch = 0; ch < 3; ++ch) shifted.at(r, c)[ch] = img.at(r, c - stride)[ch];
    }
  }
  OracleFeatureExtractor fx(4);
  const FeatureMap a = fx.Extract(Flat(0, 96, 64), img);
  const FeatureMap b = fx.Extract(Flat(0, 96, 64), shifted);
  for (int r = 0; r < a.grid_height; ++r) {
    for (int c = 0; c + 1 < a.grid_width; ++c) {
      for (int k = 0; k < a.dim; ++k) EXPECT_EQ(a.cell(r, c)[k], b.cell(r, c + 1)[k]);
    }
  }
}

TEST(NoisyFeatures, SeededPerView) {
  auto inner = std::make_shared<OracleFeatureExtractor>(4);
  NoisyFeatureExtractor noisy(inner, 0.1, 7);
  const Image img(32, 32);
  const FeatureMap a = noisy.Extract(Flat(1, 32, 32), img);
  EXPECT_EQ(a.data, noisy.Extract(Flat(1, 32, 32), img).data);
  EXPECT_NE(a.data, noisy.Extract(Flat(2, 32, 32), img).data);
  EXPECT_NE(a.data, inner->Extract(Flat(1, 32, 32), img).data);
}

TEST(Base64, RoundTripsEveryPaddingLength) {
  std::string bytes;
  for (int n = 0; n < 12; ++n) {
    EXPECT_EQ(Base64Decode(Base64Encode(bytes)), bytes) << n;
    bytes.push_back(static_cast<char>(n * 37 + 200));
  }
  EXPECT_EQ(Base64Encode("ab"), "YWI=");
  EXPECT_EQ(CodeOf([] { Base64Decode("YW!="); }), ErrorCode::kInvalidArgument);
}

TEST(RemoteSegmenter, SendsImageAndPointsAndDecodesMask) {
  testing::StubRemote stub;
  nlohmann::json seen;
  stub.Route("/api/segment", [&seen](const nlohmann::json& body) {
    seen = body;
    // Mask: the left half of the decoded image.
    const Image img = DecodeRgbPng(Base64Decode(body.at("image_png").get<std::string>()));
    Mask m(0, img.width, img.height);
    for (int r = 0; r < img.height; ++r) {
      for (int c = 0; c < img.width / 2; ++c) m.bits[r * img.width + c] = 1;
    }
    return nlohmann::json{{"mask_png", Base64Encode(EncodeMaskPng(m))}};
  });
  stub.Start();
  RemoteSegmenter seg(stub.endpoint() + "/api");
  Image img(20, 10);
  img.at(3, 4)[1] = 1.0;
  const Mask m = seg.Segment(Flat(5, 20, 10), img, {At(5, 2.5, 3.5)}, {At(5, 15, 5, Polarity::kNegative)});
  EXPECT_EQ(m.view_id, 5);
  EXPECT_EQ(m.count(), 100u);
  EXPECT_EQ(m.at(0, 9), 1);
  EXPECT_EQ(m.at(0, 10), 0);
  const Image echoed = DecodeRgbPng(Base64Decode(seen["image_png"].get<std::string>()));
  EXPECT_EQ(echoed.rgb, img.rgb);
  ASSERT_EQ(seen["points"].size(), 2u);
  EXPECT_EQ(seen["points"][0]["label"], 1);
  EXPECT_EQ(seen["points"][0]["x"], 2.5);
  EXPECT_EQ(seen["points"][1]["label"], 0);
}

TEST(RemoteSegmenter, FailuresAreRemoteUnavailable) {
  testing::StubRemote stub;
  stub.RawRoute("/bad/segment", "not json");
  stub.RawRoute("/err/segment", "{}", 500);
  stub.RawRoute("/empty/segment", "{}");
  stub.Route("/small/segment", [](const nlohmann::json&) {
    return nlohmann::json{{"mask_png", Base64Encode(EncodeMaskPng(Mask(0, 3, 3)))}};
  });
  stub.Start();
  const Camera cam = Flat(0, 8, 8);
  const Image img(8, 8);
  for (const char* prefix : {"/bad", "/err", "/empty"}) {
    RemoteSegmenter seg(stub.endpoint() + prefix);
    EXPECT_EQ(CodeOf([&] { seg.Segment(cam, img, {At(0, 1, 1)}, {}); }), ErrorCode::kRemoteUnavailable)
        << prefix;
  }
  RemoteSegmenter small(stub.endpoint() + "/small");
  EXPECT_EQ(CodeOf([&] { small.Segment(cam, img, {At(0, 1, 1)}, {}); }), ErrorCode::kDimensionMismatch);
  // Nothing listens on port 1.
  RemoteSegmenter down("http://127.0.0.1:1");
  EXPECT_EQ(CodeOf([&] { down.Segment(cam, img, {At(0, 1, 1)}, {}); }), ErrorCode::kRemoteUnavailable);
  EXPECT_EQ(CodeOf([&] { down.Segment(cam, img, {}, {}); }), ErrorCode::kNoPositiveClick);
}

TEST(RemoteFeatures, GridMustMatchStride) {
  testing::StubRemote stub;
  stub.Route("/features", [](const nlohmann::json& body) {
    EXPECT_EQ(body["downsample"], kFeatureDownsample);
    std::vector<float> data(2 * 4 * 3);
    for (size_t i = 0; i < data.size(); ++i) data[i] = static_cast<float>(i);
    return nlohmann::json{{"h", 2}, {"w", 4}, {"d", 3}, {"data", data}};
  });
  stub.Start();
  const FeatureMap f = RemoteFeatureExtractor(stub.endpoint(), 4).Extract(Flat(0, 32, 16), Image(32, 16));
  EXPECT_EQ(f.grid_width, 4);
  EXPECT_EQ(f.grid_height, 2);
  EXPECT_EQ(f.stride, 8);
  EXPECT_EQ(f.cell(1, 2)[1], 19.0f);
  // Same reply, but a patch size that implies a different grid.
  EXPECT_EQ(CodeOf([&] { RemoteFeatureExtractor(stub.endpoint(), 2).Extract(Flat(0, 32, 16), Image(32, 16)); }),
            ErrorCode::kDimensionMismatch);
}

// Wraps the oracle but fails one view as an unreachable service would.
class FlakySegmenter : public Segmenter {
 public:
  FlakySegmenter(std::shared_ptr<const Segmenter> inner, int bad_view)
      : inner_(std::move(inner)), bad_view_(bad_view) {}
  Mask Segment(const Camera& cam, const Image& image, const std::vector<Click>& pos,
               const std::vector<Click>& neg) const override {
    if (cam.id == bad_view_) throw Error(ErrorCode::kRemoteUnavailable, "connection refused");
    return inner_->Segment(cam, image, pos, neg);
  }
  std::string Describe() const override { return "flaky"; }

 private:
  std::shared_ptr<const Segmenter> inner_;
  int bad_view_;
};

TEST_F(OracleSegmenterTest, RemoteFailureBecomesViewSkip) {
  FlakySegmenter seg(std::make_shared<OracleSegmenter>(scene_), 2);
  OracleFeatureExtractor fx(2);
  const SegmentResult r = RunSegmentation(*scene_, generated_.views, {target_.click}, seg, fx, SegmentConfig{});
  ASSERT_EQ(r.report.skipped_views.size(), 1u);
  EXPECT_EQ(r.report.skipped_views[0].first, 2);
  EXPECT_EQ(r.report.skipped_views[0].second.rfind("RemoteUnavailable", 0), 0u);
  EXPECT_TRUE(r.selection.has_value());
  for (int v : r.report.accepted_views) EXPECT_NE(v, 2);
}

}  // namespace
}  // namespace gsculpt
