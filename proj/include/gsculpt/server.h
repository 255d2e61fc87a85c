#pragma once

#include <atomic>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "gsculpt/error.h"
#include "gsculpt/perception.h"
#include "gsculpt/types.h"
#include "gsculpt/voting.h"

namespace httplib {
class Server;
}

namespace gsculpt {

inline constexpr size_t kUndoDepth = 32;

// Everything undo restores.
struct SessionVersion {
  std::shared_ptr<const GaussianScene> scene;
  std::optional<Selection> selection;
  ClickSet clicks;
};

struct Session {
  std::string id;
  ViewSet views;
  std::string segmenter_spec;
  std::string features_spec;
  int patch = 16;
  std::shared_ptr<const FeatureExtractor> features;

  // Guards `versions`. Readers snapshot the top under a shared lock.
  mutable std::shared_mutex state_mutex;
  std::deque<SessionVersion> versions;  // front = oldest, never empty
  // Set for the whole of every mutation, background jobs included. A flag
  // rather than a mutex because a job releases it from a worker thread.
  std::atomic<bool> busy{false};

  bool TryBeginWrite() {
    bool expected = false;
    return busy.compare_exchange_strong(expected, true);
  }
  void EndWrite() { busy.store(false); }

  SessionVersion Current() const;
  // Caller owns the write flag. Drops the oldest version past kUndoDepth.
  void Push(SessionVersion next);
  bool Undo();
  size_t depth() const;
};

struct Job {
  std::string id;
  std::string session_id;
  std::string kind;
  mutable std::mutex mutex;
  std::string state = "queued";  // queued | running | done | failed
  double progress = 0.0;
  std::vector<double> loss_trace;
  nlohmann::json result;
  nlohmann::json error;

  nlohmann::json ToJson() const;
};

// Fixed pool of worker threads draining a FIFO.
class JobRunner {
 public:
  explicit JobRunner(int workers);
  ~JobRunner();
  JobRunner(const JobRunner&) = delete;
  JobRunner& operator=(const JobRunner&) = delete;

  void Submit(std::function<void()> task);
  // Blocks until the queue is empty and no task is running.
  void Drain();

 private:
  void Loop();

  std::mutex mutex_;
  std::condition_variable cv_;
  std::condition_variable idle_cv_;
  std::deque<std::function<void()>> queue_;
  int busy_ = 0;
  bool stopping_ = false;
  std::vector<std::thread> threads_;
};

// An HTTP status plus JSON body, or PNG bytes.
struct Response {
  int status = 200;
  std::string content_type = "application/json";
  std::string body;

  static Response Json(const nlohmann::json& j, int status = 200);
  static Response Png(std::string bytes);
  static Response Fail(int status, const std::string& code, const std::string& message,
                       const nlohmann::json& detail = nullptr);
};

// Route logic independent of the transport, so tests can call it directly.
class SessionService {
 public:
  explicit SessionService(int job_workers = 2);

  Response CreateSession(const nlohmann::json& body);
  Response Views(const std::string& sid);
  Response Render(const std::string& sid, const std::string& view, const std::string& overlay);
  Response MaskPng(const std::string& sid, const std::string& view);
  Response AddClick(const std::string& sid, const nlohmann::json& body);
  Response ClearClicks(const std::string& sid);
  Response StartSegment(const std::string& sid, const nlohmann::json& body);
  Response GetSelection(const std::string& sid);
  Response ApplyOperation(const std::string& sid, const nlohmann::json& body);
  Response UndoLast(const std::string& sid);
  Response GetJob(const std::string& jid);

  // Parses JSON bodies and maps library errors to status codes.
  Response Dispatch(const std::function<Response()>& handler);

  void WaitForJobs() { runner_.Drain(); }

 private:
  std::shared_ptr<Session> Find(const std::string& sid);
  std::shared_ptr<Job> NewJob(const std::string& sid, const std::string& kind);

  std::mutex sessions_mutex_;
  std::map<std::string, std::shared_ptr<Session>> sessions_;
  std::mutex jobs_mutex_;
  std::map<std::string, std::shared_ptr<Job>> jobs_;
  uint64_t next_session_ = 1;
  uint64_t next_job_ = 1;
  JobRunner runner_;
};

// Mounts every route on `server`.
void RegisterRoutes(httplib::Server& server, SessionService& service);

// HTTP status for a library error code.
int HttpStatusFor(ErrorCode code);

}  // namespace gsculpt
