#include <gtest/gtest.h>

#include "gsculpt/error.h"
#include "gsculpt/image_io.h"
#include "gsculpt/render.h"
#include "gsculpt/scene_io.h"
#include "gsculpt/server.h"
#include "gsculpt/synth_bench.h"
#include "test_util.h"

#include <httplib.h>  // after Eigen: <resolv.h> defines _res

namespace gsculpt {
namespace {

nlohmann::json Body(const Response& r) { return nlohmann::json::parse(r.body); }

class ServerTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    SceneSpec spec;
    spec.seed = 8;
    spec.orbit.count = 6;
    spec.width = spec.height = 64;
    generated_ = new GeneratedScene(GenerateScene(spec));
    dir_ = new std::filesystem::path(testing::TempDir("server"));
    SaveScenePly(generated_->scene, *dir_ / "scene.ply");
    SaveCameras(generated_->views, *dir_ / "cameras.json");
    // The PLY stores float32, so the served scene is the reloaded one.
    loaded_ = new GaussianScene(LoadScenePly(*dir_ / "scene.ply"));
  }
  static void TearDownTestSuite() {
    delete generated_;
    delete dir_;
    delete loaded_;
  }

  std::string NewSession(SessionService& svc) {
    const Response r = svc.Dispatch([&] {
      return svc.CreateSession({{"scene", (*dir_ / "scene.ply").string()},
                                {"cameras", (*dir_ / "cameras.json").string()},
                                {"patch", 2}});
    });
    EXPECT_EQ(r.status, 200) << r.body;
    return Body(r)["session_id"];
  }
  // Waits for the job and returns its final JSON.
  nlohmann::json Await(SessionService& svc, const Response& started) {
    EXPECT_EQ(started.status, 202) << started.body;
    svc.WaitForJobs();
    return Body(svc.GetJob(Body(started)["job_id"]));
  }
  void ClickTarget(SessionService& svc, const std::string& sid) {
    const BenchTarget t = ChooseTarget(*generated_);
    const Response r = svc.Dispatch([&] {
      return svc.AddClick(sid, {{"view_id", t.click.view_id}, {"x", t.click.x}, {"y", t.click.y}});
    });
    ASSERT_EQ(r.status, 200) << r.body;
  }
  nlohmann::json SegmentNow(SessionService& svc, const std::string& sid) {
    return Await(svc, svc.Dispatch([&] { return svc.StartSegment(sid, nlohmann::json::object()); }));
  }
  std::string Hash(SessionService& svc, const std::string& sid) {
    return Body(svc.GetSelection(sid))["scene_hash"];
  }

  static GeneratedScene* generated_;
  static std::filesystem::path* dir_;
  static GaussianScene* loaded_;
};

GeneratedScene* ServerTest::generated_ = nullptr;
std::filesystem::path* ServerTest::dir_ = nullptr;
GaussianScene* ServerTest::loaded_ = nullptr;

TEST_F(ServerTest, CreateReportsScene) {
  SessionService svc(1);
  const Response r = svc.Dispatch([&] {
    return svc.CreateSession({{"scene", (*dir_ / "scene.ply").string()}, {"cameras", CamerasToJson(generated_->views)}});
  });
  ASSERT_EQ(r.status, 200);
  const auto j = Body(r);
  EXPECT_EQ(j["gaussians"], generated_->scene.size());
  EXPECT_EQ(j["views"], generated_->views.size());
  EXPECT_EQ(j["scene_hash"], loaded_->content_hash());
  EXPECT_EQ(Body(svc.Views(j["session_id"]))["views"].size(), generated_->views.size());
}

TEST_F(ServerTest, RenderMatchesLibraryAndIsIdempotent) {
  SessionService svc(1);
  const std::string sid = NewSession(svc);
  for (const Camera& cam : generated_->views) {
    const Response a = svc.Dispatch([&] { return svc.Render(sid, std::to_string(cam.id), "none"); });
    ASSERT_EQ(a.status, 200);
    EXPECT_EQ(a.content_type, "image/png");
    EXPECT_EQ(a.body, EncodePng(Render(*loaded_, cam).color));
    EXPECT_EQ(svc.Dispatch([&] { return svc.Render(sid, std::to_string(cam.id), "none"); }).body, a.body);
  }
  EXPECT_EQ(svc.GetSelection(sid).body, svc.GetSelection(sid).body);
}

TEST_F(ServerTest, ClickSegmentRemoveUndo) {
  SessionService svc(1);
  const std::string sid = NewSession(svc);
  const std::string before = svc.Dispatch([&] { return svc.Render(sid, "1", "none"); }).body;
  ClickTarget(svc, sid);
  const nlohmann::json job = SegmentNow(svc, sid);
  ASSERT_EQ(job["state"], "done") << job.dump();
  EXPECT_EQ(job["progress"], 1.0);
  const nlohmann::json sel = Body(svc.GetSelection(sid));
  ASSERT_FALSE(sel["selection"].is_null());
  EXPECT_EQ(sel["selection"], job["result"]["selection"]);

  const Response mask = svc.Dispatch([&] { return svc.MaskPng(sid, "1"); });
  ASSERT_EQ(mask.status, 200);
  EXPECT_TRUE(DecodeMaskPng(mask.body).any());
  const Response overlay = svc.Dispatch([&] { return svc.Render(sid, "1", "mask"); });
  EXPECT_NE(overlay.body, before);

  const Response removed = svc.Dispatch([&] { return svc.ApplyOperation(sid, {{"op", {{"op", "remove"}}}}); });
  ASSERT_EQ(removed.status, 200) << removed.body;
  EXPECT_LT(Body(removed)["gaussians"].get<size_t>(), generated_->scene.size());
  EXPECT_TRUE(Body(removed)["selection"].is_null());

  // Undo the removal, the segmentation and the click.
  for (int i = 0; i < 3; ++i) ASSERT_EQ(svc.Dispatch([&] { return svc.UndoLast(sid); }).status, 200);
  const Image a = DecodeRgbPng(before);
  const Image b = DecodeRgbPng(svc.Dispatch([&] { return svc.Render(sid, "1", "none"); }).body);
  for (size_t p = 0; p < a.rgb.size(); ++p) ASSERT_NEAR(a.rgb[p], b.rgb[p], 1e-6);
  EXPECT_EQ(Hash(svc, sid), loaded_->content_hash());
  EXPECT_EQ(svc.UndoLast(sid).status, 409);
}

TEST_F(ServerTest, UndoDepthIsBounded) {
  SessionService svc(1);
  const std::string sid = NewSession(svc);
  for (int i = 0; i < 40; ++i) {
    ASSERT_EQ(svc.Dispatch([&] { return svc.AddClick(sid, {{"view_id", 0}, {"x", 1.0 + i}, {"y", 2.0}}); }).status,
              200);
  }
  int undone = 0;
  while (svc.UndoLast(sid).status == 200) ++undone;
  EXPECT_EQ(undone, static_cast<int>(kUndoDepth));
}

TEST_F(ServerTest, ThirtyTwoMutationsThenUndosRestoreInitial) {
  SessionService svc(1);
  const std::string sid = NewSession(svc);
  const std::string initial = Hash(svc, sid);
  // Click and segment are the first two of 32 mutations.
  ClickTarget(svc, sid);
  ASSERT_EQ(SegmentNow(svc, sid)["state"], "done");
  std::vector<std::string> hashes = {Hash(svc, sid)};
  for (int i = 0; i < 30; ++i) {
    const nlohmann::json op = i % 2 ? nlohmann::json{{"op", "scale"}, {"epsilon", 1.1}}
                                    : nlohmann::json{{"op", "colorize"}, {"color", {0.1 * (i % 10), 0.5, 0.2}}};
    const Response r = svc.Dispatch([&] { return svc.ApplyOperation(sid, op); });
    ASSERT_EQ(r.status, 200) << r.body;
    hashes.push_back(Hash(svc, sid));
  }
  for (int i = 30; i > 0; --i) {
    ASSERT_EQ(svc.UndoLast(sid).status, 200);
    EXPECT_EQ(Hash(svc, sid), hashes[i - 1]);
  }
  ASSERT_EQ(svc.UndoLast(sid).status, 200);
  ASSERT_EQ(svc.UndoLast(sid).status, 200);
  EXPECT_EQ(Hash(svc, sid), initial);
  EXPECT_EQ(svc.UndoLast(sid).status, 409);
}

TEST_F(ServerTest, SessionsAreIsolated) {
  SessionService svc(1);
  const std::string a = NewSession(svc), b = NewSession(svc);
  EXPECT_NE(a, b);
  ClickTarget(svc, a);
  ASSERT_EQ(SegmentNow(svc, a)["state"], "done");
  ASSERT_EQ(svc.Dispatch([&] { return svc.ApplyOperation(a, {{"op", "remove"}}); }).status, 200);
  EXPECT_EQ(Hash(svc, b), loaded_->content_hash());
  EXPECT_TRUE(Body(svc.GetSelection(b))["selection"].is_null());
  EXPECT_EQ(svc.UndoLast(b).status, 409);
}

TEST_F(ServerTest, EditJobReportsProgress) {
  SessionService svc(1);
  const std::string sid = NewSession(svc);
  ClickTarget(svc, sid);
  ASSERT_EQ(SegmentNow(svc, sid)["state"], "done");
  const nlohmann::json job = Await(svc, svc.Dispatch([&] {
    return svc.ApplyOperation(sid, {{"op", "edit"}, {"editor", "builtin:tint-red"}, {"steps", 12}, {"step_size", 1e-3}});
  }));
  EXPECT_EQ(job["state"], "done") << job.dump();
  EXPECT_EQ(job["kind"], "edit");
  EXPECT_EQ(job["progress"], 1.0);
  EXPECT_EQ(job["loss_trace"].size(), 12u);
  EXPECT_NE(Hash(svc, sid), loaded_->content_hash());
}

TEST_F(ServerTest, BusySessionRejectsWrites) {
  SessionService svc(1);
  const std::string sid = NewSession(svc);
  ClickTarget(svc, sid);
  ASSERT_EQ(SegmentNow(svc, sid)["state"], "done");
  const Response started = svc.Dispatch([&] {
    return svc.ApplyOperation(sid, {{"op", "edit"}, {"editor", "builtin:tint-red"}, {"steps", 400}});
  });
  ASSERT_EQ(started.status, 202);
  const Response click = svc.Dispatch([&] { return svc.AddClick(sid, {{"view_id", 0}, {"x", 1}, {"y", 1}}); });
  EXPECT_EQ(click.status, 409);
  EXPECT_EQ(Body(click)["error"]["code"], "SessionBusy");
  EXPECT_EQ(svc.Dispatch([&] { return svc.UndoLast(sid); }).status, 409);
  // Reads still work mid-job.
  EXPECT_EQ(svc.Dispatch([&] { return svc.Render(sid, "0", "none"); }).status, 200);
  svc.WaitForJobs();
  EXPECT_EQ(svc.Dispatch([&] { return svc.UndoLast(sid); }).status, 200);
}

TEST_F(ServerTest, ErrorStatuses) {
  SessionService svc(1);
  const std::string sid = NewSession(svc);
  auto status = [&](const std::function<Response()>& f) { return svc.Dispatch(f).status; };
  auto code = [&](const std::function<Response()>& f) { return Body(svc.Dispatch(f))["error"]["code"]; };

  EXPECT_EQ(status([&] { return svc.Views("s999"); }), 404);
  EXPECT_EQ(code([&] { return svc.Views("s999"); }), "UnknownSession");
  EXPECT_EQ(status([&] { return svc.Render(sid, "77", "none"); }), 404);
  EXPECT_EQ(status([&] { return svc.Render(sid, "abc", "none"); }), 422);
  EXPECT_EQ(status([&] { return svc.Render(sid, "0", "glow"); }), 422);
  EXPECT_EQ(code([&] { return svc.MaskPng(sid, "0"); }), "NoSelection");
  EXPECT_EQ(status([&] { return svc.GetJob("j404"); }), 404);
  EXPECT_EQ(status([&] { return svc.AddClick(sid, {{"view_id", 77}, {"x", 1}, {"y", 1}}); }), 404);
  EXPECT_EQ(status([&] { return svc.AddClick(sid, {{"view_id", 0}, {"x", -5}, {"y", 1}}); }), 422);
  EXPECT_EQ(status([&] { return svc.AddClick(sid, {{"x", 1}}); }), 422);
  EXPECT_EQ(status([&] { return svc.AddClick(sid, {{"view_id", 0}, {"x", 1}, {"y", 1}, {"polarity", "maybe"}}); }),
            422);
  EXPECT_EQ(status([&] { return svc.StartSegment(sid, nlohmann::json::object()); }), 422);
  EXPECT_EQ(status([&] { return svc.ApplyOperation(sid, {{"op", "remove"}}); }), 409);
  EXPECT_EQ(status([&] { return svc.ApplyOperation(sid, {{"op", "shatter"}}); }), 422);
  EXPECT_EQ(status([&] { return svc.CreateSession({{"scene", "/nonexistent.ply"}, {"cameras", "/x.json"}}); }), 422);
  EXPECT_EQ(code([&] {
              return svc.CreateSession({{"scene", (*dir_ / "scene.ply").string()},
                                        {"cameras", (*dir_ / "cameras.json").string()},
                                        {"segmenter", "magic"}});
            }),
            "InvalidArgument");
}

TEST(HttpStatus, Mapping) {
  EXPECT_EQ(HttpStatusFor(ErrorCode::kUnknownView), 404);
  EXPECT_EQ(HttpStatusFor(ErrorCode::kWouldEmptyScene), 409);
  EXPECT_EQ(HttpStatusFor(ErrorCode::kSelectionMismatch), 409);
  EXPECT_EQ(HttpStatusFor(ErrorCode::kRemoteUnavailable), 502);
  EXPECT_EQ(HttpStatusFor(ErrorCode::kEditorUnavailable), 502);
  EXPECT_EQ(HttpStatusFor(ErrorCode::kMalformedHeader), 422);
}

TEST_F(ServerTest, EmptySegmentationFailsTheJob) {
  SessionService svc(1);
  const std::string sid = NewSession(svc);
  // Positive and negative on the same spot cancel in every view. Short and
  // long polarity names are both accepted.
  const BenchTarget t = ChooseTarget(*generated_);
  for (const char* polarity : {"pos", "negative"}) {
    const nlohmann::json click = {{"view_id", 0}, {"x", t.click.x}, {"y", t.click.y}, {"polarity", polarity}};
    ASSERT_EQ(svc.Dispatch([&] { return svc.AddClick(sid, click); }).status, 200);
  }
  const nlohmann::json job = SegmentNow(svc, sid);
  EXPECT_EQ(job["state"], "failed");
  EXPECT_EQ(job["error"]["code"], "EmptySelection");
  EXPECT_EQ(job["error"]["status"], 409);
}

TEST_F(ServerTest, HttpRoundTrip) {
  SessionService svc(1);
  httplib::Server server;
  RegisterRoutes(server, svc);
  const int port = server.bind_to_any_port("127.0.0.1");
  std::thread thread([&] { server.listen_after_bind(); });
  server.wait_until_ready();
  httplib::Client client("127.0.0.1", port);

  const nlohmann::json create = {{"scene", (*dir_ / "scene.ply").string()},
                                 {"cameras", (*dir_ / "cameras.json").string()},
                                 {"patch", 2}};
  auto res = client.Post("/session", create.dump(), "application/json");
  ASSERT_TRUE(res);
  ASSERT_EQ(res->status, 200) << res->body;
  const std::string sid = nlohmann::json::parse(res->body)["session_id"];

  res = client.Get("/session/" + sid + "/render?view=2");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 200);
  EXPECT_EQ(res->get_header_value("Content-Type"), "image/png");
  EXPECT_EQ(res->body, EncodePng(Render(*loaded_, generated_->views[2]).color));

  const BenchTarget t = ChooseTarget(*generated_);
  res = client.Post("/session/" + sid + "/click",
                    nlohmann::json({{"view_id", t.click.view_id}, {"x", t.click.x}, {"y", t.click.y}}).dump(),
                    "application/json");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 200);
  res = client.Post("/session/" + sid + "/segment", "", "application/json");
  ASSERT_TRUE(res);
  ASSERT_EQ(res->status, 202);
  const std::string jid = nlohmann::json::parse(res->body)["job_id"];
  svc.WaitForJobs();
  res = client.Get("/job/" + jid);
  ASSERT_TRUE(res);
  EXPECT_EQ(nlohmann::json::parse(res->body)["state"], "done");
  res = client.Get("/session/" + sid + "/mask?view=0");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 200);

  res = client.Post("/session/" + sid + "/op", "{not json", "application/json");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 422);
  res = client.Get("/nowhere");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 404);
  EXPECT_EQ(nlohmann::json::parse(res->body)["error"]["code"], "UnknownRoute");
  res = client.Delete("/session/" + sid + "/clicks");
  ASSERT_TRUE(res);
  EXPECT_EQ(nlohmann::json::parse(res->body)["clicks"], 0);

  server.stop();
  thread.join();
}

}  // namespace
}  // namespace gsculpt
