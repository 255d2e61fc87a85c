#include "gsculpt/server.h"

#include <httplib.h>

#include "gsculpt/image_io.h"
#include "gsculpt/parallel.h"
#include "gsculpt/render.h"
#include "gsculpt/scene_io.h"
#include "gsculpt/toolbox.h"

namespace gsculpt {

namespace {

// Releases a session's write flag on scope exit unless handed to a job.
class WriteLease {
 public:
  explicit WriteLease(Session& s) : session_(&s) {}
  ~WriteLease() {
    if (session_) session_->EndWrite();
  }
  WriteLease(const WriteLease&) = delete;
  WriteLease& operator=(const WriteLease&) = delete;
  void Release() { session_ = nullptr; }

 private:
  Session* session_;
};

Response Busy() {
  return Response::Fail(409, "SessionBusy", "another mutation is in flight for this session");
}

int ParseViewParam(const std::string& view) {
  try {
    size_t used = 0;
    const int id = std::stoi(view, &used);
    if (used == view.size()) return id;
  } catch (const std::exception&) {
  }
  throw Error(ErrorCode::kInvalidArgument, "view must be an integer id, got '" + view + "'");
}

nlohmann::json ErrorJson(const Error& e) {
  return {{"code", std::string(ErrorCodeName(e.code()))},
          {"message", e.what()},
          {"status", HttpStatusFor(e.code())}};
}

}  // namespace

int HttpStatusFor(ErrorCode code) {
  switch (code) {
    case ErrorCode::kUnknownView:
      return 404;
    case ErrorCode::kSelectionMismatch:
    case ErrorCode::kEmptySelection:
    case ErrorCode::kWouldEmptyScene:
      return 409;
    case ErrorCode::kRemoteUnavailable:
    case ErrorCode::kEditorUnavailable:
      return 502;
    default:
      return 422;
  }
}

SessionVersion Session::Current() const {
  std::shared_lock lock(state_mutex);
  return versions.back();
}

void Session::Push(SessionVersion next) {
  std::unique_lock lock(state_mutex);
  versions.push_back(std::move(next));
  while (versions.size() > kUndoDepth + 1) versions.pop_front();
}

bool Session::Undo() {
  std::unique_lock lock(state_mutex);
  if (versions.size() <= 1) return false;
  versions.pop_back();
  return true;
}

size_t Session::depth() const {
  std::shared_lock lock(state_mutex);
  return versions.size() - 1;
}

nlohmann::json Job::ToJson() const {
  std::lock_guard lock(mutex);
  nlohmann::json j = {{"job_id", id}, {"session_id", session_id}, {"kind", kind},
                      {"state", state}, {"progress", progress}};
  if (!loss_trace.empty()) j["loss_trace"] = loss_trace;
  if (!result.is_null()) j["result"] = result;
  if (!error.is_null()) j["error"] = error;
  return j;
}

JobRunner::JobRunner(int workers) {
  for (int i = 0; i < std::max(1, workers); ++i) threads_.emplace_back([this] { Loop(); });
}

JobRunner::~JobRunner() {
  {
    std::lock_guard lock(mutex_);
    stopping_ = true;
  }
  cv_.notify_all();
  for (auto& t : threads_) t.join();
}

void JobRunner::Submit(std::function<void()> task) {
  {
    std::lock_guard lock(mutex_);
    queue_.push_back(std::move(task));
  }
  cv_.notify_one();
}

void JobRunner::Drain() {
  std::unique_lock lock(mutex_);
  idle_cv_.wait(lock, [this] { return queue_.empty() && busy_ == 0; });
}

void JobRunner::Loop() {
  for (;;) {
    std::function<void()> task;
    {
      std::unique_lock lock(mutex_);
      cv_.wait(lock, [this] { return stopping_ || !queue_.empty(); });
      if (queue_.empty()) return;
      task = std::move(queue_.front());
      queue_.pop_front();
      ++busy_;
    }
    task();
    {
      std::lock_guard lock(mutex_);
      --busy_;
    }
    idle_cv_.notify_all();
  }
}

Response Response::Json(const nlohmann::json& j, int status) {
  return {status, "application/json", j.dump()};
}

Response Response::Png(std::string bytes) { return {200, "image/png", std::move(bytes)}; }

Response Response::Fail(int status, const std::string& code, const std::string& message,
                        const nlohmann::json& detail) {
  nlohmann::json j = {{"error", {{"code", code}, {"message", message}}}};
  if (!detail.is_null()) j["error"]["detail"] = detail;
  return Json(j, status);
}

SessionService::SessionService(int job_workers) : runner_(job_workers) {}

Response SessionService::Dispatch(const std::function<Response()>& handler) {
  try {
    return handler();
  } catch (const Error& e) {
    return Response::Fail(HttpStatusFor(e.code()), std::string(ErrorCodeName(e.code())), e.what());
  } catch (const nlohmann::json::exception& e) {
    return Response::Fail(422, "InvalidArgument", std::string("bad request body: ") + e.what());
  }
}

std::shared_ptr<Session> SessionService::Find(const std::string& sid) {
  std::lock_guard lock(sessions_mutex_);
  const auto it = sessions_.find(sid);
  return it == sessions_.end() ? nullptr : it->second;
}

std::shared_ptr<Job> SessionService::NewJob(const std::string& sid, const std::string& kind) {
  auto job = std::make_shared<Job>();
  job->session_id = sid;
  job->kind = kind;
  std::lock_guard lock(jobs_mutex_);
  job->id = "j" + std::to_string(next_job_++);
  jobs_[job->id] = job;
  return job;
}

Response SessionService::CreateSession(const nlohmann::json& body) {
  if (!body.contains("scene") || !body.contains("cameras")) {
    throw Error(ErrorCode::kInvalidArgument, "session needs \"scene\" and \"cameras\"");
  }
  auto session = std::make_shared<Session>();
  const auto scene = std::make_shared<const GaussianScene>(LoadScenePly(body["scene"].get<std::string>()));
  if (scene->empty()) throw Error(ErrorCode::kEmptyScene, "scene has no gaussians");
  const auto& cams = body["cameras"];
  session->views = cams.is_string() ? LoadCameras(cams.get<std::string>()) : CamerasFromJson(cams);
  if (session->views.empty()) throw Error(ErrorCode::kEmptyResult, "no cameras");
  session->segmenter_spec = body.value("segmenter", std::string("oracle"));
  session->features_spec = body.value("features", std::string("oracle"));
  session->patch = body.value("patch", 16);
  session->features = MakeFeatureExtractor(session->features_spec, session->patch);
  if (session->segmenter_spec == "oracle" && !scene->has_labels()) {
    throw Error(ErrorCode::kMissingLabels, "the oracle segmenter needs a labeled scene");
  }
  MakeSegmenter(session->segmenter_spec, scene);  // fail fast on a bad segmenter string
  session->versions.push_back({scene, std::nullopt, {}});
  {
    std::lock_guard lock(sessions_mutex_);
    session->id = "s" + std::to_string(next_session_++);
    sessions_[session->id] = session;
  }
  return Response::Json({{"session_id", session->id},
                         {"gaussians", scene->size()},
                         {"views", session->views.size()},
                         {"scene_hash", scene->content_hash()}});
}

#define GSCULPT_FIND_SESSION(var, sid)                                              \
  auto var = Find(sid);                                                            \
  if (!var) return Response::Fail(404, "UnknownSession", "no session '" + sid + "'")

Response SessionService::Views(const std::string& sid) {
  GSCULPT_FIND_SESSION(session, sid);
  return Response::Json({{"views", CamerasToJson(session->views)["cameras"]}});
}

Response SessionService::Render(const std::string& sid, const std::string& view,
                                const std::string& overlay) {
  GSCULPT_FIND_SESSION(session, sid);
  if (overlay != "none" && overlay != "mask") {
    throw Error(ErrorCode::kInvalidArgument, "overlay must be mask or none");
  }
  const Camera& cam = FindCamera(session->views, ParseViewParam(view));
  const SessionVersion v = session->Current();
  Image image = gsculpt::Render(*v.scene, cam).color;
  if (overlay == "mask" && v.selection) {
    TintMask(image, RenderSelectionMask(*v.scene, *v.selection, cam));
  }
  return Response::Png(EncodePng(image));
}

Response SessionService::MaskPng(const std::string& sid, const std::string& view) {
  GSCULPT_FIND_SESSION(session, sid);
  const Camera& cam = FindCamera(session->views, ParseViewParam(view));
  const SessionVersion v = session->Current();
  if (!v.selection) return Response::Fail(404, "NoSelection", "session has no selection yet");
  return Response::Png(EncodeMaskPng(RenderSelectionMask(*v.scene, *v.selection, cam)));
}

Response SessionService::AddClick(const std::string& sid, const nlohmann::json& body) {
  GSCULPT_FIND_SESSION(session, sid);
  Click click;
  click.view_id = body.at("view_id").get<int>();
  click.x = body.at("x").get<double>();
  click.y = body.at("y").get<double>();
  // Long names from the UI, short ones as in clicks files.
  const std::string polarity = body.value("polarity", std::string("positive"));
  if (polarity == "positive" || polarity == "pos") {
    click.polarity = Polarity::kPositive;
  } else if (polarity == "negative" || polarity == "neg") {
    click.polarity = Polarity::kNegative;
  } else {
    throw Error(ErrorCode::kInvalidArgument, "polarity must be positive or negative");
  }
  ValidateClicks({click}, session->views);
  if (!session->TryBeginWrite()) return Busy();
  WriteLease lease(*session);
  SessionVersion next = session->Current();
  next.clicks.push_back(click);
  const size_t count = next.clicks.size();
  session->Push(std::move(next));
  return Response::Json({{"clicks", count}, {"depth", session->depth()}});
}

Response SessionService::ClearClicks(const std::string& sid) {
  GSCULPT_FIND_SESSION(session, sid);
  if (!session->TryBeginWrite()) return Busy();
  WriteLease lease(*session);
  SessionVersion next = session->Current();
  next.clicks.clear();
  session->Push(std::move(next));
  return Response::Json({{"clicks", 0}, {"depth", session->depth()}});
}

Response SessionService::StartSegment(const std::string& sid, const nlohmann::json& body) {
  GSCULPT_FIND_SESSION(session, sid);
  const nlohmann::json cfg = body.is_object() && body.contains("config") ? body["config"] : body;
  SegmentConfig config;
  if (cfg.is_object()) {
    config.threshold = cfg.value("threshold", config.threshold);
    config.mode = ParseVotePowerMode(cfg.value("mode", std::string(VotePowerModeName(config.mode))));
    config.iim = cfg.value("iim", config.iim);
    config.epipolar = cfg.value("epipolar", config.epipolar);
    config.iim_mask_threshold = cfg.value("iim_mask_threshold", config.iim_mask_threshold);
  }
  if (!(config.threshold > 0.0 && config.threshold < 1.0)) {
    throw Error(ErrorCode::kInvalidArgument, "threshold must be in (0, 1)");
  }
  if (session->Current().clicks.empty()) {
    throw Error(ErrorCode::kNoPositiveClick, "place at least one click before segmenting");
  }
  if (!session->TryBeginWrite()) return Busy();
  auto job = NewJob(sid, "segment");
  runner_.Submit([session, job, config] {
    WriteLease lease(*session);
    {
      std::lock_guard lock(job->mutex);
      job->state = "running";
    }
    nlohmann::json error;
    nlohmann::json result;
    try {
      SessionVersion v = session->Current();
      const auto segmenter = MakeSegmenter(session->segmenter_spec, v.scene);
      SegmentResult r =
          RunSegmentation(*v.scene, session->views, v.clicks, *segmenter, *session->features, config);
      if (!r.selection) {
        bool remote_failure = false;
        for (const auto& [view, reason] : r.report.skipped_views) {
          remote_failure |= reason.rfind("features ", 0) == 0 ||
                            reason.rfind("RemoteUnavailable", 0) == 0;
        }
        error = {{"code", remote_failure ? "RemoteUnavailable" : "EmptySelection"},
                 {"message", "no gaussian cleared the vote threshold"},
                 {"status", remote_failure ? 502 : 409},
                 {"detail", r.report.ToJson()}};
      } else {
        v.selection = r.selection;
        result = {{"selection", SelectionToJson(*r.selection)}, {"report", r.report.ToJson()}};
        session->Push(std::move(v));
      }
    } catch (const Error& e) {
      error = ErrorJson(e);
    } catch (const std::exception& e) {
      error = {{"code", "Internal"}, {"message", e.what()}, {"status", 500}};
    }
    std::lock_guard lock(job->mutex);
    job->progress = 1.0;
    job->state = error.is_null() ? "done" : "failed";
    job->result = std::move(result);
    job->error = std::move(error);
  });
  return Response::Json({{"job_id", job->id}}, 202);
}

Response SessionService::GetSelection(const std::string& sid) {
  GSCULPT_FIND_SESSION(session, sid);
  const SessionVersion v = session->Current();
  return Response::Json({{"selection", v.selection ? SelectionToJson(*v.selection) : nlohmann::json()},
                         {"scene_hash", v.scene->content_hash()},
                         {"gaussians", v.scene->size()}});
}

Response SessionService::ApplyOperation(const std::string& sid, const nlohmann::json& body) {
  GSCULPT_FIND_SESSION(session, sid);
  const nlohmann::json descriptor = body.is_object() && body.contains("op") && body["op"].is_object()
                                        ? body["op"]
                                        : body;
  if (!session->TryBeginWrite()) return Busy();
  WriteLease lease(*session);
  const SessionVersion v = session->Current();
  if (v.selection) v.selection->CheckBound(*v.scene);

  auto commit = [session, v](OpResult r) {
    SessionVersion next{std::make_shared<const GaussianScene>(std::move(r.scene)), std::move(r.selection),
                        v.clicks};
    const nlohmann::json summary = {
        {"gaussians", next.scene->size()},
        {"scene_hash", next.scene->content_hash()},
        {"selection", next.selection ? SelectionToJson(*next.selection) : nlohmann::json()}};
    session->Push(std::move(next));
    return summary;
  };

  if (!IsLongOp(descriptor)) {
    nlohmann::json summary = commit(ApplyOp(descriptor, *v.scene, v.selection, session->views));
    summary["depth"] = session->depth();
    return Response::Json(summary);
  }

  if (!v.selection) throw Error(ErrorCode::kEmptySelection, "edit needs a selection");
  auto job = NewJob(sid, "edit");
  lease.Release();
  runner_.Submit([session, job, descriptor, v, commit] {
    WriteLease inner(*session);
    {
      std::lock_guard lock(job->mutex);
      job->state = "running";
    }
    nlohmann::json error;
    nlohmann::json result;
    try {
      OpResult r = ApplyOp(descriptor, *v.scene, v.selection, session->views,
                           [&job](int step, int steps, double loss) {
                             std::lock_guard lock(job->mutex);
                             job->progress = static_cast<double>(step) / steps;
                             job->loss_trace.push_back(loss);
                           });
      result = commit(std::move(r));
    } catch (const Error& e) {
      error = ErrorJson(e);
    } catch (const std::exception& e) {
      error = {{"code", "Internal"}, {"message", e.what()}, {"status", 500}};
    }
    std::lock_guard lock(job->mutex);
    job->state = error.is_null() ? "done" : "failed";
    job->result = std::move(result);
    job->error = std::move(error);
  });
  return Response::Json({{"job_id", job->id}}, 202);
}

Response SessionService::UndoLast(const std::string& sid) {
  GSCULPT_FIND_SESSION(session, sid);
  if (!session->TryBeginWrite()) return Busy();
  WriteLease lease(*session);
  if (!session->Undo()) return Response::Fail(409, "NothingToUndo", "already at the initial version");
  const SessionVersion v = session->Current();
  return Response::Json({{"depth", session->depth()},
                         {"gaussians", v.scene->size()},
                         {"scene_hash", v.scene->content_hash()}});
}

Response SessionService::GetJob(const std::string& jid) {
  std::shared_ptr<Job> job;
  {
    std::lock_guard lock(jobs_mutex_);
    const auto it = jobs_.find(jid);
    if (it != jobs_.end()) job = it->second;
  }
  if (!job) return Response::Fail(404, "UnknownJob", "no job '" + jid + "'");
  return Response::Json(job->ToJson());
}

#undef GSCULPT_FIND_SESSION

void RegisterRoutes(httplib::Server& server, SessionService& service) {
  auto send = [](httplib::Response& res, const Response& r) {
    res.status = r.status;
    res.set_content(r.body, r.content_type.c_str());
  };
  auto body_json = [](const httplib::Request& req) {
    if (req.body.empty()) return nlohmann::json::object();
    try {
      return nlohmann::json::parse(req.body);
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::kInvalidArgument, std::string("body is not JSON: ") + e.what());
    }
  };
  auto route = [&service, send](auto fn) {
    return [&service, send, fn](const httplib::Request& req, httplib::Response& res) {
      send(res, service.Dispatch([&] { return fn(req); }));
    };
  };

  server.Post("/session", route([&service, body_json](const httplib::Request& req) {
    return service.CreateSession(body_json(req));
  }));
  server.Get(R"(/session/([^/]+)/views)", route([&service](const httplib::Request& req) {
    return service.Views(req.matches[1]);
  }));
  server.Get(R"(/session/([^/]+)/render)", route([&service](const httplib::Request& req) {
    return service.Render(req.matches[1], req.get_param_value("view"),
                          req.has_param("overlay") ? req.get_param_value("overlay") : "none");
  }));
  server.Get(R"(/session/([^/]+)/mask)", route([&service](const httplib::Request& req) {
    return service.MaskPng(req.matches[1], req.get_param_value("view"));
  }));
  server.Post(R"(/session/([^/]+)/click)", route([&service, body_json](const httplib::Request& req) {
    return service.AddClick(req.matches[1], body_json(req));
  }));
  server.Delete(R"(/session/([^/]+)/clicks)", route([&service](const httplib::Request& req) {
    return service.ClearClicks(req.matches[1]);
  }));
  server.Post(R"(/session/([^/]+)/segment)", route([&service, body_json](const httplib::Request& req) {
    return service.StartSegment(req.matches[1], body_json(req));
  }));
  server.Get(R"(/session/([^/]+)/selection)", route([&service](const httplib::Request& req) {
    return service.GetSelection(req.matches[1]);
  }));
  server.Post(R"(/session/([^/]+)/op)", route([&service, body_json](const httplib::Request& req) {
    return service.ApplyOperation(req.matches[1], body_json(req));
  }));
  server.Post(R"(/session/([^/]+)/undo)", route([&service](const httplib::Request& req) {
    return service.UndoLast(req.matches[1]);
  }));
  server.Get(R"(/job/([^/]+))", route([&service](const httplib::Request& req) {
    return service.GetJob(req.matches[1]);
  }));
  server.set_error_handler([](const httplib::Request&, httplib::Response& res) {
    if (res.body.empty()) {
      const Response r = Response::Fail(res.status, res.status == 404 ? "UnknownRoute" : "HttpError",
                                        "no such route");
      res.set_content(r.body, r.content_type.c_str());
    }
  });
}

}  // namespace gsculpt
