#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <deque>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "kdsel/config.hpp"
#include "workspace.hpp"

namespace kdsel::service {

enum class JobState { Queued, Running, Finished, Failed, Cancelled };
std::string job_state_name(JobState state);
bool is_terminal(JobState state);

struct JobSpec {
  TrainConfig config;
  std::string corpus_id;
  std::string selector_id;  // empty: derived from the job id
};

// Single training slot: jobs run one at a time on a worker thread, FIFO.
class JobQueue {
 public:
  explicit JobQueue(Workspace& workspace);
  ~JobQueue();
  JobQueue(const JobQueue&) = delete;
  JobQueue& operator=(const JobQueue&) = delete;

  std::string submit(JobSpec spec);
  nlohmann::json status(const std::string& job_id) const;  // throws NotFound
  JobState state(const std::string& job_id) const;
  // Queued jobs are cancelled at once; a running job stops at the next batch.
  nlohmann::json cancel(const std::string& job_id);

  struct EventBatch {
    std::vector<std::string> lines;  // NDJSON lines, already serialized
    std::size_t next = 0;            // sequence number after the last line
    bool finished = false;           // job is terminal and every event was returned
  };
  // Returns the events with sequence >= since, waiting up to `wait` for at
  // least one when none are available yet.
  EventBatch events(const std::string& job_id, std::size_t since,
                    std::chrono::milliseconds wait = std::chrono::milliseconds(0)) const;

  // Blocks until the job is terminal or the timeout expires.
  bool wait(const std::string& job_id, std::chrono::milliseconds timeout) const;

  void shutdown();

 private:
  struct Job;
  std::shared_ptr<Job> find(const std::string& job_id) const;
  void worker_loop();
  void run(Job& job);
  void append_event(Job& job, nlohmann::json event);

  Workspace& ws_;
  std::string token_;
  mutable std::mutex mu_;
  mutable std::condition_variable cv_;
  std::map<std::string, std::shared_ptr<Job>> jobs_;
  std::deque<std::shared_ptr<Job>> queue_;
  std::size_t counter_ = 0;
  bool stopping_ = false;
  std::thread worker_;
};

}  // namespace kdsel::service
