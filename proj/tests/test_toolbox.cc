#include <gtest/gtest.h>

#include <numeric>

#include "gsculpt/error.h"
#include "gsculpt/render.h"
#include "gsculpt/scene_io.h"
#include "gsculpt/synth_bench.h"
#include "gsculpt/toolbox.h"
#include "test_util.h"

namespace gsculpt {
namespace {

using testing::CodeOf;

Selection EveryOther(const GaussianScene& scene) {
  std::vector<uint32_t> idx;
  for (uint32_t i = 0; i < scene.size(); i += 2) idx.push_back(i);
  return Selection::Create(scene, idx);
}

bool SameGaussian(const Gaussian& a, const Gaussian& b) {
  return a.position == b.position && a.scale == b.scale && a.rotation.coeffs() == b.rotation.coeffs() &&
         a.opacity == b.opacity && a.color == b.color && a.sh_rest == b.sh_rest;
}

// Every unselected Gaussian survives bit-identically.
void ExpectUnselectedUntouched(const GaussianScene& before, const GaussianScene& after, const Selection& sel) {
  const auto flags = sel.MembershipFlags(before.size());
  for (size_t i = 0; i < before.size(); ++i) {
    if (!flags[i]) EXPECT_TRUE(SameGaussian(before[i], after[i])) << i;
  }
}

TEST(Colorize, ReplaceSetsEverySelectedColor) {
  Rng rng(1);
  const GaussianScene scene = testing::RandomScene(rng, 20);
  const Selection sel = EveryOther(scene);
  const Eigen::Vector3d red(1, 0, 0);
  const GaussianScene out = Colorize(scene, sel, red, ColorizeMode::kReplace);
  for (uint32_t i : sel.indices()) EXPECT_EQ(out[i].color, red);
  ExpectUnselectedUntouched(scene, out, sel);
  EXPECT_NE(out.content_hash(), scene.content_hash());
}

TEST(Colorize, BalancedMovesMeanAndKeepsContrast) {
  Rng rng(2);
  const GaussianScene scene = testing::RandomScene(rng, 20);
  const Selection sel = EveryOther(scene);
  const Eigen::Vector3d target(0.2, 0.6, 0.4);
  const GaussianScene out = Colorize(scene, sel, target, ColorizeMode::kBalanced);
  Eigen::Vector3d mean = Eigen::Vector3d::Zero();
  for (uint32_t i : sel.indices()) mean += out[i].color;
  EXPECT_LT((mean / sel.size() - target).norm(), 1e-12);
  const uint32_t a = sel.indices()[0], b = sel.indices()[1];
  EXPECT_LT(((out[a].color - out[b].color) - (scene[a].color - scene[b].color)).norm(), 1e-12);
  ExpectUnselectedUntouched(scene, out, sel);
}

TEST(Colorize, Rejections) {
  Rng rng(3);
  const GaussianScene scene = testing::RandomScene(rng, 4);
  const Selection sel = EveryOther(scene);
  EXPECT_EQ(CodeOf([&] { Colorize(scene, sel, {1.5, 0, 0}, ColorizeMode::kReplace); }), ErrorCode::kInvalidArgument);
  const GaussianScene other = testing::RandomScene(rng, 4);
  EXPECT_EQ(CodeOf([&] { Colorize(other, sel, {1, 0, 0}, ColorizeMode::kReplace); }),
            ErrorCode::kSelectionMismatch);
}

TEST(Scale, AboutCentroid) {
  Gaussian a, b, c;
  a.position = {0, 0, 0};
  b.position = {2, 0, 0};
  c.position = {5, 5, 5};
  a.scale = b.scale = {0.1, 0.2, 0.3};
  const GaussianScene scene({a, b, c});
  const Selection sel = Selection::Create(scene, {0, 1});
  const GaussianScene out = ScaleSelection(scene, sel, 2.0);
  EXPECT_EQ(out[0].position, Eigen::Vector3d(-1, 0, 0));
  EXPECT_EQ(out[1].position, Eigen::Vector3d(3, 0, 0));
  EXPECT_EQ(out[0].scale, Eigen::Vector3d(0.2, 0.4, 0.6));
  EXPECT_TRUE(SameGaussian(out[2], c));
  for (double eps : {0.0, -1.0, std::numeric_limits<double>::infinity()}) {
    EXPECT_EQ(CodeOf([&] { ScaleSelection(scene, sel, eps); }), ErrorCode::kNonPositiveEpsilon);
  }
}

TEST(Scale, InverseRoundTrip) {
  Rng rng(4);
  const GaussianScene scene = testing::RandomScene(rng, 50);
  const Selection sel = EveryOther(scene);
  for (double eps : {0.3, 1.7, 4.0}) {
    const GaussianScene up = ScaleSelection(scene, sel, eps);
    const GaussianScene back = ScaleSelection(up, Selection::Create(up, sel.indices()), 1.0 / eps);
    for (size_t i = 0; i < scene.size(); ++i) {
      EXPECT_LT((back[i].position - scene[i].position).norm(), 1e-9);
      EXPECT_LT((back[i].scale - scene[i].scale).norm(), 1e-9);
    }
    ExpectUnselectedUntouched(scene, up, sel);
  }
}

std::vector<Gaussian> ReadGaussians(const nlohmann::json& arr) {
  std::vector<Gaussian> out;
  for (const auto& j : arr) {
    Gaussian g;
    auto vec = [](const nlohmann::json& a) {
      return Eigen::Vector3d(a[0].get<double>(), a[1].get<double>(), a[2].get<double>());
    };
    g.position = vec(j["position"]);
    g.scale = vec(j["scale"]);
    const auto& q = j["rotation_wxyz"];
    g.rotation = Eigen::Quaterniond(q[0].get<double>(), q[1].get<double>(), q[2].get<double>(), q[3].get<double>());
    out.push_back(g);
  }
  return out;
}

// Frozen values from tests/oracles/make_oracles.py.
TEST(CopyPaste, MatchesFrozenTransform) {
  const nlohmann::json doc = ReadJsonFile(testing::DataDir() / "transform_expected.json");
  const GaussianScene scene(ReadGaussians(doc["input"]));
  const Selection all = Selection::Create(scene, {0, 1, 2});
  const CopyPasteResult r = CopyPaste(scene, all, PlacementTransform::FromJson(doc["placement"]));
  ASSERT_EQ(r.scene.size(), 6u);
  EXPECT_EQ(r.copies.indices(), (std::vector<uint32_t>{3, 4, 5}));
  EXPECT_EQ(r.copies.scene_hash(), r.scene.content_hash());
  const auto expected = ReadGaussians(doc["expected_copies"]);
  for (size_t k = 0; k < 3; ++k) {
    const Gaussian& got = r.scene[3 + k];
    EXPECT_LT((got.position - expected[k].position).norm(), 1e-12) << k;
    EXPECT_LT((got.scale - expected[k].scale).norm(), 1e-12) << k;
    EXPECT_LT(got.rotation.angularDistance(expected[k].rotation), 1e-9) << k;
    EXPECT_TRUE(SameGaussian(r.scene[k], scene[k]));
  }
}

TEST(Placement, Validation) {
  EXPECT_EQ(CodeOf([] { PlacementTransform::FromJson({{"uniform_scale", 0.0}}); }), ErrorCode::kInvalidArgument);
  EXPECT_EQ(CodeOf([] { PlacementTransform::FromJson({{"rotation", {2, 0, 0, 0}}}); }),
            ErrorCode::kInvalidArgument);
  EXPECT_EQ(CodeOf([] { PlacementTransform::FromJson({{"translation", {1, 2}}}); }), ErrorCode::kInvalidArgument);
  PlacementTransform t;
  t.translation = {1, 2, 3};
  t.uniform_scale = 0.5;
  const PlacementTransform back = PlacementTransform::FromJson(t.ToJson());
  EXPECT_EQ(back.translation, t.translation);
  EXPECT_EQ(back.uniform_scale, 0.5);
}

TEST(Combine, EqualsConcatenationOfTransformedCopies) {
  Rng rng(5);
  const GaussianScene target = testing::RandomScene(rng, 10, 1.0, true);
  const GaussianScene source = testing::RandomScene(rng, 8, 1.0, true);
  const Selection sel = EveryOther(source);
  PlacementTransform t;
  t.translation = {3, 0, 0};
  t.rotation = Eigen::Quaterniond(Eigen::AngleAxisd(0.4, Eigen::Vector3d::UnitY()));
  const GaussianScene out = Combine(target, source, sel, t);
  std::vector<Gaussian> manual = target.gaussians();
  for (const Gaussian& g : TransformedCopies(source, sel, t)) manual.push_back(g);
  ASSERT_EQ(out.size(), manual.size());
  for (size_t i = 0; i < manual.size(); ++i) EXPECT_TRUE(SameGaussian(out[i], manual[i])) << i;
  for (size_t k = 0; k < sel.size(); ++k) EXPECT_EQ(out.labels()[10 + k], source.labels()[sel.indices()[k]]);

  // Into an empty target.
  const GaussianScene fresh = Combine(GaussianScene(), source, sel, PlacementTransform{});
  EXPECT_EQ(fresh.size(), sel.size());
  EXPECT_TRUE(fresh.has_labels());
}

TEST(Remove, RemapAndOrder) {
  Rng rng(6);
  const GaussianScene scene = testing::RandomScene(rng, 9, 1.0, true);
  const Selection sel = Selection::Create(scene, {1, 4, 8});
  const RemovalResult r = RemoveSelection(scene, sel);
  EXPECT_EQ(r.remap, (std::vector<int64_t>{0, -1, 1, 2, -1, 3, 4, 5, -1}));
  for (size_t i = 0; i < scene.size(); ++i) {
    if (r.remap[i] < 0) continue;
    EXPECT_TRUE(SameGaussian(r.scene[r.remap[i]], scene[i]));
    EXPECT_EQ(r.scene.labels()[r.remap[i]], scene.labels()[i]);
  }
  std::vector<uint32_t> all(scene.size());
  std::iota(all.begin(), all.end(), 0u);
  EXPECT_EQ(CodeOf([&] { RemoveSelection(scene, Selection::Create(scene, all)); }), ErrorCode::kWouldEmptyScene);
}

// Removing is the same as making the selection fully transparent.
TEST(Remove, RenderMatchesZeroOpacity) {
  Rng rng(7);
  const GaussianScene scene = testing::RandomScene(rng, 60);
  const Selection sel = EveryOther(scene);
  const GaussianScene removed = RemoveSelection(scene, sel).scene;
  std::vector<Gaussian> ghosts = scene.gaussians();
  for (uint32_t i : sel.indices()) ghosts[i].opacity = 0.0;
  const GaussianScene transparent(ghosts);
  for (int v = 0; v < 4; ++v) {
    const Camera cam = testing::RandomCamera(rng, v, 40, 30);
    const Image a = Render(removed, cam).color, b = Render(transparent, cam).color;
    for (size_t p = 0; p < a.rgb.size(); ++p) ASSERT_NEAR(a.rgb[p], b.rgb[p], 1e-12);
  }
}

TEST(Editors, Builtins) {
  Image img(2, 1);
  img.rgb = {0.2, 0.4, 0.6, 1.0, 0.0, 0.5};
  const Camera cam;
  EXPECT_EQ(MakeEditor("builtin:identity")->Edit(img, "", cam).rgb, img.rgb);
  const Image tinted = MakeEditor("builtin:tint-red")->Edit(img, "", cam);
  EXPECT_DOUBLE_EQ(tinted.rgb[0], 0.6);
  EXPECT_DOUBLE_EQ(tinted.rgb[1], 0.2);
  EXPECT_DOUBLE_EQ(tinted.rgb[3], 1.0);
  Camera one;
  one.id = 3;
  Mask left(3, 2, 1);
  left.bits = {1, 0};
  const RegionRecolorEditor recolor({{3, left}}, Eigen::Vector3d(0, 1, 0));
  EXPECT_EQ(recolor.Edit(img, "", one).rgb, (std::vector<double>{0, 1, 0, 1.0, 0.0, 0.5}));
  EXPECT_EQ(recolor.Edit(img, "", cam).rgb, img.rgb);  // no mask for this view
  EXPECT_EQ(CodeOf([&] { recolor.Edit(Image(3, 1), "", one); }), ErrorCode::kDimensionMismatch);
  EXPECT_EQ(CodeOf([] { MakeEditor("builtin:sepia"); }), ErrorCode::kEditorUnavailable);
  EXPECT_EQ(CodeOf([] { MakeEditor("remote:ftp://x"); }), ErrorCode::kInvalidArgument);
}

TEST(Gradient, MatchesFiniteDifferences) {
  Rng rng(8);
  for (int trial = 0; trial < 3; ++trial) {
    const GaussianScene scene = testing::RandomScene(rng, 25);
    const Selection sel = EveryOther(scene);
    const Camera cam = testing::RandomCamera(rng, 0, 24, 24);
    Image target(24, 24);
    for (double& v : target.rgb) v = rng.Uniform();
    const auto grad = DcColorGradient(scene, sel, cam, target, Eigen::Vector3d::Zero());
    const double h = 1e-6;
    for (size_t k = 0; k < sel.size(); ++k) {
      for (int ch = 0; ch < 3; ++ch) {
        auto loss_at = [&](double delta) {
          std::vector<Gaussian> gs = scene.gaussians();
          gs[sel.indices()[k]].color[ch] += delta;
          return L1Distance(Render(GaussianScene(gs), cam).color, target);
        };
        const double fd = (loss_at(h) - loss_at(-h)) / (2 * h);
        EXPECT_NEAR(grad[k][ch], fd, 1e-4 * std::max(1.0, std::abs(fd))) << trial << ' ' << k << ' ' << ch;
      }
    }
  }
}

class EditTest : public ::testing::Test {
 protected:
  void SetUp() override {
    SceneSpec spec;
    spec.seed = 1;
    spec.orbit.count = 6;
    spec.width = spec.height = 64;
    g_ = GenerateScene(spec);
    const BenchTarget t = ChooseTarget(g_);
    std::vector<uint32_t> idx;
    for (size_t i = 0; i < g_.scene.size(); ++i) {
      if (g_.scene.labels()[i] == t.label) idx.push_back(static_cast<uint32_t>(i));
    }
    sel_ = Selection::Create(g_.scene, idx);
  }
  GeneratedScene g_;
  std::optional<Selection> sel_;
};

TEST_F(EditTest, IdentityEditorChangesNothing) {
  EditRequest req;
  req.steps = 5;
  req.editor = MakeEditor("builtin:identity");
  const EditResult r = SemanticEdit(g_.scene, *sel_, g_.views, req);
  EXPECT_EQ(r.scene.content_hash(), g_.scene.content_hash());
  for (double l : r.loss_trace) EXPECT_EQ(l, 0.0);
}

TEST_F(EditTest, SingleAnnealedStepIsNoOp) {
  EditRequest req;
  req.steps = 1;
  req.step_size = 0.1;
  req.editor = MakeEditor("builtin:tint-red");
  const EditResult r = SemanticEdit(g_.scene, *sel_, g_.views, req);
  EXPECT_EQ(r.scene.content_hash(), g_.scene.content_hash());
  EXPECT_EQ(r.loss_trace.size(), 1u);
  EXPECT_GT(r.loss_trace[0], 0.0);
}

TEST_F(EditTest, TintStepPushesTowardRedLocally) {
  const EditStepResult r =
      SemanticEditStep(g_.scene, *sel_, g_.views[0], *MakeEditor("builtin:tint-red"), "", 1e-3);
  ExpectUnselectedUntouched(g_.scene, r.scene, *sel_);
  EXPECT_EQ(r.selection.scene_hash(), r.scene.content_hash());
  int moved = 0;
  for (uint32_t i : sel_->indices()) {
    const Eigen::Vector3d d = r.scene[i].color - g_.scene[i].color;
    if (d.isZero(0.0)) continue;
    ++moved;
    EXPECT_GE(d.x(), 0.0);
    EXPECT_LE(d.y(), 0.0);
    EXPECT_LE(d.z(), 0.0);
  }
  EXPECT_GT(moved, 0);
}

TEST_F(EditTest, Deterministic) {
  EditRequest req;
  req.steps = 20;
  req.seed = 9;
  req.editor = MakeEditor("builtin:tint-red");
  const EditResult a = SemanticEdit(g_.scene, *sel_, g_.views, req);
  const EditResult b = SemanticEdit(g_.scene, *sel_, g_.views, req);
  EXPECT_EQ(a.scene.content_hash(), b.scene.content_hash());
  EXPECT_EQ(a.loss_trace, b.loss_trace);
  EXPECT_EQ(a.sampled_views, b.sampled_views);
}

TEST_F(EditTest, RegionLossFallsOverTraining) {
  EditRequest req;
  req.steps = 200;
  req.step_size = 2e-4;
  req.annealing = false;
  req.editor = MakeEditor("builtin:tint-red");
  int calls = 0;
  const EditResult r = SemanticEdit(g_.scene, *sel_, g_.views, req, [&](int, int, double) { ++calls; });
  EXPECT_EQ(calls, 200);
  const auto& t = r.region_loss_trace;
  const double first = std::accumulate(t.begin(), t.begin() + 50, 0.0) / 50;
  const double last = std::accumulate(t.end() - 50, t.end(), 0.0) / 50;
  EXPECT_LT(last, first);
  ExpectUnselectedUntouched(g_.scene, r.scene, *sel_);
}

TEST(ApplyOp, DescriptorsDispatch) {
  Rng rng(9);
  const GaussianScene scene = testing::RandomScene(rng, 10, 1.0, true);
  const Selection sel = EveryOther(scene);
  const OpResult col = ApplyOp({{"op", "colorize"}, {"color", {0, 1, 0}}}, scene, sel, {});
  EXPECT_EQ(col.scene[0].color, Eigen::Vector3d(0, 1, 0));
  EXPECT_EQ(col.selection->scene_hash(), col.scene.content_hash());
  const OpResult rem = ApplyOp({{"op", "remove"}}, scene, sel, {});
  EXPECT_EQ(rem.scene.size(), 5u);
  EXPECT_FALSE(rem.selection);
  ASSERT_TRUE(rem.remap);
  const OpResult cp = ApplyOp({{"op", "copy_paste"}, {"placement", {{"translation", {1, 0, 0}}}}}, scene, sel, {});
  EXPECT_EQ(cp.scene.size(), 15u);
  EXPECT_EQ(cp.selection->indices().front(), 10u);

  const auto dir = testing::TempDir("applyop");
  SaveScenePly(scene, dir / "src.ply");
  const OpResult comb = ApplyOp({{"op", "combine"}, {"source_scene", (dir / "src.ply").string()}}, scene,
                                std::nullopt, {});
  EXPECT_EQ(comb.scene.size(), 20u);
  EXPECT_EQ(comb.selection->size(), 10u);

  EXPECT_TRUE(IsLongOp({{"op", "edit"}}));
  EXPECT_FALSE(IsLongOp({{"op", "scale"}}));
  EXPECT_EQ(CodeOf([&] { ApplyOp({{"op", "scale"}, {"epsilon", 2}}, scene, std::nullopt, {}); }),
            ErrorCode::kEmptySelection);
  EXPECT_EQ(CodeOf([&] { ApplyOp({{"op", "scale"}}, scene, sel, {}); }), ErrorCode::kInvalidArgument);
  EXPECT_EQ(CodeOf([&] { ApplyOp({{"op", "explode"}}, scene, sel, {}); }), ErrorCode::kInvalidArgument);
  EXPECT_EQ(CodeOf([&] { ApplyOp({{"op", "colorize"}, {"color", {1, 0, 0}}, {"mode", "hsv"}}, scene, sel, {}); }),
            ErrorCode::kInvalidArgument);
}

}  // namespace
}  // namespace gsculpt
