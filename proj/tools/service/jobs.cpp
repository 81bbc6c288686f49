#include "jobs.hpp"

#include <random>

#include "kdsel/errors.hpp"
#include "kdsel/pipeline.hpp"

namespace kdsel::service {

std::string job_state_name(JobState state) {
  switch (state) {
    case JobState::Queued:
      return "queued";
    case JobState::Running:
      return "running";
    case JobState::Finished:
      return "finished";
    case JobState::Failed:
      return "failed";
    case JobState::Cancelled:
      return "cancelled";
  }
  return "queued";
}

bool is_terminal(JobState state) {
  return state == JobState::Finished || state == JobState::Failed || state == JobState::Cancelled;
}

struct JobQueue::Job {
  std::string id;
  JobSpec spec;
  std::string created_at;
  JobState state = JobState::Queued;
  std::size_t epoch = 0;
  nlohmann::json last_event;
  std::string error;
  std::string selector_id;
  std::string report_id;
  std::vector<std::string> events;
  std::atomic<bool> cancel{false};
};

JobQueue::JobQueue(Workspace& workspace) : ws_(workspace) {
  std::random_device rd;
  char buf[16];
  std::snprintf(buf, sizeof buf, "%06x", rd() & 0xFFFFFFu);
  token_ = buf;
  worker_ = std::thread([this] { worker_loop(); });
}

JobQueue::~JobQueue() { shutdown(); }

void JobQueue::shutdown() {
  {
    std::lock_guard lock(mu_);
    if (stopping_ && !worker_.joinable()) return;
    stopping_ = true;
    for (auto& [id, job] : jobs_) job->cancel = true;
  }
  cv_.notify_all();
  if (worker_.joinable()) worker_.join();
}

std::string JobQueue::submit(JobSpec spec) {
  spec.config.validate();
  ws_.corpus(spec.corpus_id);  // fail fast on an unknown corpus
  if (!spec.selector_id.empty() && !valid_identifier(spec.selector_id))
    throw ValidationError("invalid selector id '" + spec.selector_id + "'");
  auto job = std::make_shared<Job>();
  {
    std::lock_guard lock(mu_);
    if (stopping_) throw Error("service is shutting down");
    job->id = "job-" + token_ + "-" + std::to_string(++counter_);
    job->spec = std::move(spec);
    job->created_at = utc_timestamp();
    jobs_[job->id] = job;
    queue_.push_back(job);
  }
  cv_.notify_all();
  return job->id;
}

std::shared_ptr<JobQueue::Job> JobQueue::find(const std::string& job_id) const {
  std::lock_guard lock(mu_);
  auto it = jobs_.find(job_id);
  if (it == jobs_.end()) throw NotFound("no job with id '" + job_id + "'");
  return it->second;
}

nlohmann::json JobQueue::status(const std::string& job_id) const {
  const auto job = find(job_id);
  std::lock_guard lock(mu_);
  std::size_t position = 0;
  for (std::size_t i = 0; i < queue_.size(); ++i)
    if (queue_[i] == job) position = i + 1;
  nlohmann::json j = {{"job_id", job->id},
                      {"state", job_state_name(job->state)},
                      {"corpus_id", job->spec.corpus_id},
                      {"created_at", job->created_at},
                      {"progress", {{"epoch", job->epoch}, {"total_epochs", job->spec.config.epochs}}},
                      {"last_event", job->last_event},
                      {"events", job->events.size()},
                      {"queue_position", position}};
  j["error"] = job->error.empty() ? nlohmann::json(nullptr) : nlohmann::json(job->error);
  j["selector_id"] = job->selector_id.empty() ? nlohmann::json(nullptr) : nlohmann::json(job->selector_id);
  j["report_id"] = job->report_id.empty() ? nlohmann::json(nullptr) : nlohmann::json(job->report_id);
  return j;
}

JobState JobQueue::state(const std::string& job_id) const {
  const auto job = find(job_id);
  std::lock_guard lock(mu_);
  return job->state;
}

nlohmann::json JobQueue::cancel(const std::string& job_id) {
  const auto job = find(job_id);
  {
    std::lock_guard lock(mu_);
    job->cancel = true;
    if (job->state == JobState::Queued) {
      std::erase(queue_, job);
      job->state = JobState::Cancelled;
      job->error = "cancelled before start";
    }
  }
  cv_.notify_all();
  return status(job_id);
}

JobQueue::EventBatch JobQueue::events(const std::string& job_id, std::size_t since,
                                      std::chrono::milliseconds wait) const {
  const auto job = find(job_id);
  std::unique_lock lock(mu_);
  if (wait.count() > 0) {
    cv_.wait_for(lock, wait, [&] { return job->events.size() > since || is_terminal(job->state) || stopping_; });
  }
  EventBatch out;
  for (std::size_t i = since; i < job->events.size(); ++i) out.lines.push_back(job->events[i]);
  out.next = std::max(since, job->events.size());
  out.finished = is_terminal(job->state) && out.next >= job->events.size();
  return out;
}

bool JobQueue::wait(const std::string& job_id, std::chrono::milliseconds timeout) const {
  const auto job = find(job_id);
  std::unique_lock lock(mu_);
  return cv_.wait_for(lock, timeout, [&] { return is_terminal(job->state); });
}

void JobQueue::append_event(Job& job, nlohmann::json event) {
  {
    std::lock_guard lock(mu_);
    event["seq"] = job.events.size();
    job.events.push_back(event.dump());
    if (event.value("type", "") == "epoch") job.epoch = event.value("epoch", std::size_t{0}) + 1;
    job.last_event = std::move(event);
  }
  cv_.notify_all();
}

void JobQueue::worker_loop() {
  for (;;) {
    std::shared_ptr<Job> job;
    {
      std::unique_lock lock(mu_);
      cv_.wait(lock, [&] { return stopping_ || !queue_.empty(); });
      if (stopping_) return;
      job = queue_.front();
      queue_.pop_front();
      job->state = JobState::Running;
    }
    cv_.notify_all();
    run(*job);
    cv_.notify_all();
  }
}

namespace {

class JobObserver : public TrainObserver {
 public:
  JobObserver(std::function<void(nlohmann::json)> sink, const std::atomic<bool>& cancel)
      : sink_(std::move(sink)), cancel_(cancel) {}
  void on_event(const TrainEvent& e) override { sink_(to_json(e)); }
  bool cancelled() const override { return cancel_.load(); }

 private:
  std::function<void(nlohmann::json)> sink_;
  const std::atomic<bool>& cancel_;
};

}  // namespace

void JobQueue::run(Job& job) {
  auto finish = [&](JobState state, std::string error) {
    {
      std::lock_guard lock(mu_);
      job.state = state;
      job.error = std::move(error);
    }
    append_event(job, {{"type", "done"}, {"state", job_state_name(state)}, {"selector_id", job.selector_id},
                       {"report_id", job.report_id}});
  };
  try {
    const auto& config = job.spec.config;
    const auto corpus = ws_.corpus(job.spec.corpus_id);
    Corpus train_part, test_part;
    if (corpus->size() < 2) {
      train_part = *corpus;
      test_part = *corpus;
    } else {
      std::tie(train_part, test_part) = split_corpus(*corpus, config.train_fraction, config.seed);
    }
    append_event(job, {{"type", "stage"}, {"stage", "labeling"}, {"series", train_part.size()}});
    const auto labeled = label_corpus(train_part, config);
    append_event(job, {{"type", "stage"},
                       {"stage", "training"},
                       {"windows", labeled.windows.size()},
                       {"supervised", labeled.supervised().size()},
                       {"skipped_short", labeled.stats.skipped_short}});

    JobObserver observer([&](nlohmann::json e) { append_event(job, std::move(e)); }, job.cancel);
    auto result = train(labeled.supervised(), config, &observer);
    if (result.status == TrainStatus::Cancelled) {
      finish(JobState::Cancelled, result.message);
      return;
    }

    std::string selector_id = job.spec.selector_id.empty() ? "sel-" + job.id.substr(4) : job.spec.selector_id;
    const auto path = ws_.model_path(selector_id);
    save_model(result.model, path);
    ws_.forget_model(selector_id);

    append_event(job, {{"type", "stage"}, {"stage", "evaluating"}, {"series", test_part.size()}});
    const auto report = evaluate_selector(result.model, test_part, config);
    const std::string report_id = "report-" + job.id.substr(4);
    auto report_doc = to_json(report);
    report_doc["report_id"] = report_id;
    report_doc["selector_id"] = selector_id;
    report_doc["corpus_id"] = job.spec.corpus_id;
    ws_.store_report(report_id, report_doc);

    SelectorRecord record;
    record.selector_id = selector_id;
    record.config = to_json(config);
    record.metrics = {{"selector_auc_pr", report.selector_avg},
                      {"oracle_auc_pr", report.oracle_avg},
                      {"selection_accuracy", report.selection_accuracy},
                      {"epochs_completed", result.epochs_completed},
                      {"train_status", train_status_name(result.status)},
                      {"report_id", report_id}};
    record.model_path = path.string();
    ws_.registry().put(record);
    {
      std::lock_guard lock(mu_);
      job.selector_id = selector_id;
      job.report_id = report_id;
    }
    if (result.status == TrainStatus::NumericFault) {
      finish(JobState::Failed, result.message + " (last good checkpoint saved)");
    } else {
      finish(JobState::Finished, "");
    }
  } catch (const std::exception& e) {
    finish(JobState::Failed, e.what());
  }
}

}  // namespace kdsel::service
