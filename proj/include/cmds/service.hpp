#pragma once

// Local HTTP service driving solves for an interactive front end.
//
//   POST /solve           settings JSON -> {"job_id", "status"}; 409 while a job is queued or running
//   GET  /status/{id}     {"job_id", "status": queued|running|done|failed, ...}
//   GET  /embedding/{id}  embedding document (same bytes the CLI writes)
//   GET  /metrics/{id}    metrics report
//   GET  /tensor          labels and grid of the served tensor
//
// One job runs at a time on a dedicated worker thread.

#include <cmds/io.hpp>

#include <httplib.h>

#include <condition_variable>
#include <mutex>
#include <thread>

namespace cmds {

class EmbeddingService {
 public:
  enum class JobStatus { queued, running, done, failed };

  static const char* to_string(JobStatus s) {
    switch (s) {
      case JobStatus::queued: return "queued";
      case JobStatus::running: return "running";
      case JobStatus::done: return "done";
      case JobStatus::failed: return "failed";
    }
    return "failed";
  }

  explicit EmbeddingService(DistanceTensor tensor) : tensor_(std::move(tensor)) {
    worker_ = std::thread([this] { work(); });
  }

  EmbeddingService(const EmbeddingService&) = delete;
  EmbeddingService& operator=(const EmbeddingService&) = delete;

  ~EmbeddingService() {
    {
      std::lock_guard lock(mutex_);
      stopping_ = true;
    }
    cv_.notify_all();
    worker_.join();
  }

  void mount(httplib::Server& server) {
    server.Post("/solve", [this](const httplib::Request& req, httplib::Response& res) { post_solve(req, res); });
    server.Get(R"(/status/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
      with_job(req.matches[1], res, [&](const Job& job) {
        Json body;
        body["job_id"] = job.id;
        body["status"] = to_string(job.status);
        if (job.status == JobStatus::done) body["converged"] = job.result->provenance.converged;
        if (job.status == JobStatus::failed) body["error"] = job.error;
        reply(res, 200, dump(body));
      });
    });
    server.Get(R"(/embedding/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
      with_finished_job(req.matches[1], res, [&](const Job& job) { reply(res, 200, dump(to_json(*job.result))); });
    });
    server.Get(R"(/metrics/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
      with_finished_job(req.matches[1], res,
                        [&](const Job& job) { reply(res, 200, dump(metrics_report(*job.result, tensor_))); });
    });
    server.Get("/tensor", [this](const httplib::Request&, httplib::Response& res) {
      Json body;
      body["T"] = tensor_.T();
      body["N"] = tensor_.N();
      body["labels"] = tensor_.labels;
      body["alpha"] = tensor_.grid.alpha;
      if (tensor_.grid.two_axis()) body["beta"] = tensor_.grid.beta;
      reply(res, 200, dump(body));
    });
  }

  /// Blocks until `id` leaves the queued/running states or the timeout hits.
  bool wait_for(const std::string& id, std::chrono::milliseconds timeout) {
    std::unique_lock lock(mutex_);
    return cv_.wait_for(lock, timeout, [&] {
      auto it = jobs_.find(id);
      return it != jobs_.end() && (it->second.status == JobStatus::done || it->second.status == JobStatus::failed);
    });
  }

 private:
  struct Job {
    std::string id;
    JobStatus status = JobStatus::queued;
    SolverSettings settings;
    std::optional<EmbeddingFile> result;
    std::string error;
  };

  static void reply(httplib::Response& res, int status, const std::string& body) {
    res.status = status;
    res.set_content(body, "application/json");
  }

  static void reply_error(httplib::Response& res, int status, const std::string& message) {
    Json body;
    body["error"] = message;
    reply(res, status, dump(body));
  }

  void post_solve(const httplib::Request& req, httplib::Response& res) {
    SolverSettings settings;
    try {
      const Json doc = req.body.empty() ? Json::object() : detail::parse_text(req.body, "request body");
      settings = settings_from_json(doc);
      if (settings.variant.tag != Variant::raw) build_weights(tensor_, settings.variant);
    } catch (const Error& e) {
      reply_error(res, 400, e.what());
      return;
    }
    std::string id;
    {
      std::lock_guard lock(mutex_);
      if (active_) {
        reply_error(res, 409, "solver busy with job " + *active_);
        return;
      }
      id = std::to_string(++counter_);
      jobs_[id] = Job{id, JobStatus::queued, settings, std::nullopt, {}};
      active_ = id;
    }
    cv_.notify_all();
    Json body;
    body["job_id"] = id;
    body["status"] = "queued";
    reply(res, 202, dump(body));
  }

  template <typename F>
  void with_job(const std::string& id, httplib::Response& res, F&& f) {
    std::lock_guard lock(mutex_);
    auto it = jobs_.find(id);
    if (it == jobs_.end()) {
      reply_error(res, 404, "unknown job " + id);
      return;
    }
    f(it->second);
  }

  template <typename F>
  void with_finished_job(const std::string& id, httplib::Response& res, F&& f) {
    with_job(id, res, [&](const Job& job) {
      if (job.status == JobStatus::failed) return reply_error(res, 409, "job " + id + " failed: " + job.error);
      if (job.status != JobStatus::done) return reply_error(res, 409, "job " + id + " is " + to_string(job.status));
      try {
        f(job);
      } catch (const Error& e) {
        reply_error(res, 400, e.what());
      }
    });
  }

  void work() {
    std::unique_lock lock(mutex_);
    while (true) {
      cv_.wait(lock, [&] { return stopping_ || (active_ && jobs_[*active_].status == JobStatus::queued); });
      if (stopping_) return;
      Job& job = jobs_[*active_];
      job.status = JobStatus::running;
      const SolverSettings settings = job.settings;
      const std::string id = job.id;
      lock.unlock();

      std::optional<EmbeddingFile> result;
      std::string error;
      try {
        result = run_embedding(tensor_, settings);
      } catch (const std::exception& e) {
        error = e.what();
      }

      lock.lock();
      Job& finished = jobs_[id];
      finished.result = std::move(result);
      finished.error = std::move(error);
      finished.status = finished.result ? JobStatus::done : JobStatus::failed;
      active_.reset();
      cv_.notify_all();
    }
  }

  const DistanceTensor tensor_;
  std::mutex mutex_;
  std::condition_variable cv_;
  std::map<std::string, Job> jobs_;
  std::optional<std::string> active_;
  std::uint64_t counter_ = 0;
  bool stopping_ = false;
  std::thread worker_;
};

}  // namespace cmds
