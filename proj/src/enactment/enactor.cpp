#include "verce/enactment/enactor.hpp"

#include <sys/mman.h>

#include <fstream>
#include <random>

#include "runtime.hpp"
#include "verce/dataflow/graph_io.hpp"

namespace verce::enactment {

namespace fs = std::filesystem;
using detail::NodeFailure;
using detail::StepRecord;

struct Enactor::RunState {
  mutable std::mutex mu;
  mutable std::condition_variable cv;
  RunRecord record;
  std::vector<RunEvent> events;
  bool cancelRequested = false;
  bool terminal = false;
  RunOptions options;
  std::shared_ptr<const dataflow::WorkflowGraph> flat;
  /// Lives in a shared anonymous mapping so forked workers see it.
  std::atomic<bool>* cancel = nullptr;

  RunState() {
    void* mem = ::mmap(nullptr, sizeof(std::atomic<bool>), PROT_READ | PROT_WRITE, MAP_SHARED | MAP_ANONYMOUS, -1, 0);
    if (mem == MAP_FAILED) throw Error("ResourceExhausted", "cannot map cancel flag");
    cancel = new (mem) std::atomic<bool>(false);
  }
  ~RunState() { ::munmap(cancel, sizeof(std::atomic<bool>)); }
};

namespace {

std::string freshRunId() {
  static std::atomic<std::uint64_t> counter{0};
  std::random_device rd;
  std::mt19937_64 rng((static_cast<std::uint64_t>(rd()) << 32) ^ rd() ^ ++counter);
  static const char* hex = "0123456789abcdef";
  std::string id = "run-";
  for (int i = 0; i < 12; ++i) id += hex[rng() % 16];
  return id;
}

/// Plans name nodes of the graph as given; composites run flattened, so an
/// inner node inherits its outermost composite's worker.
std::map<std::string, int> planForFlattened(const ExecutionPlan& plan, const dataflow::WorkflowGraph& flat) {
  std::map<std::string, int> out;
  for (const auto& [id, _] : flat.parts().nodes) {
    if (auto it = plan.partitionOf.find(id); it != plan.partitionOf.end()) {
      out[id] = it->second;
      continue;
    }
    auto it = plan.partitionOf.find(id.substr(0, id.find('/')));
    if (it == plan.partitionOf.end()) throw Error("InvalidPlan", "plan does not assign node " + id);
    out[id] = it->second;
  }
  return out;
}

} // namespace

/// Parent-side RunSink: updates the run record, events and provenance.
class Coordinator final : public detail::RunSink {
public:
  Coordinator(Enactor& enactor, Enactor::RunState& run, std::function<void(EventKind, std::string, Json)> event)
      : enactor_(enactor), run_(run), event_(std::move(event)) {}

  bool provenance() const override { return run_.options.provenance; }
  const std::atomic<bool>& cancelFlag() const override { return *run_.cancel; }
  double now() override { return enactor_.now(); }

  provenance::StepResult recordStep(StepRecord step) override {
    if (run_.options.retainPayloads) {
      for (const auto& o : step.outputs)
        if (o.payload) enactor_.blobStore().putPayload(*o.payload);
    }
    auto result = enactor_.provStore()->recordStep(run_.record.runId, std::move(step.activity), step.inputs, std::move(step.outputs));
    std::lock_guard lock(run_.mu);
    run_.record.activityIds.push_back(result.activityId);
    return result;
  }

  void unitProcessed(const std::string& node, const std::string& port, std::uint64_t seq) override {
    {
      std::lock_guard lock(run_.mu);
      ++run_.record.unitsProcessed;
    }
    event_(EventKind::UnitProcessed, node, {{"port", port}, {"unitSeq", seq}});
  }

  void graphOutput(const std::string& node, const std::string& port, const dataflow::DataUnit& unit) override {
    const auto key = node + "." + port;
    std::lock_guard lock(run_.mu);
    run_.record.outputs[key].push_back(unit);
    run_.record.outputRefs[key].push_back(unit.provId.empty() ? run_.record.runId + "/" + key + "/" + std::to_string(unit.seq)
                                                              : unit.provId);
  }

  void nodeError(const NodeFailure& f) override {
    const bool stopping = run_.cancel->exchange(true);
    {
      std::lock_guard lock(run_.mu);
      // Fail-fast: only the first failure is the cause. Anything reported
      // once the run is stopping (torn sockets, workers killed) is fallout.
      if (!run_.record.errorLog.empty() || (stopping && run_.cancelRequested)) return;
      run_.record.errorLog.push_back({f.node, f.message, f.seq, f.code});
    }
    event_(EventKind::Error, f.node, {{"code", f.code}, {"message", f.message}, {"unitSeq", f.seq}});
  }

private:
  Enactor& enactor_;
  Enactor::RunState& run_;
  std::function<void(EventKind, std::string, Json)> event_;
};

Enactor::Enactor(EnactorConfig config)
    : prov_(config.provStore),
      workDir_(config.workDir.empty() ? fs::temp_directory_path() / ("verce-" + std::to_string(::getpid()))
                                      : config.workDir),
      clock_(config.clock ? config.clock : systemClock()),
      eventMirror_(config.eventMirror),
      blobs_(workDir_ / "blobs") {
  if (prov_) {
    prov_->triggers().setCancelHandler([this](const std::string& runId, const std::string&) { requestCancel(runId); });
    prov_->triggers().setFiredHandler([this](const provenance::FiredAction& f) {
      std::shared_ptr<RunState> run;
      {
        std::lock_guard lock(mu_);
        auto it = runs_.find(f.runId);
        if (it == runs_.end()) return;
        run = it->second;
      }
      pushEvent(*run, EventKind::TriggerFired, "", provenance::toJson(f));
    });
  }
}

Enactor::~Enactor() {
  for (const auto& id : runIds()) requestCancel(id);
  for (auto& t : background_)
    if (t.joinable()) t.join();
  if (prov_) {
    prov_->triggers().setCancelHandler({});
    prov_->triggers().setFiredHandler({});
  }
}

void Enactor::pushEvent(RunState& run, EventKind kind, std::string peInstance, Json detail) {
  std::lock_guard lock(run.mu);
  RunEvent e{run.record.runId, kind, std::move(peInstance), run.events.size() + 1, clock_(), std::move(detail)};
  if (!eventMirror_.empty()) {
    std::lock_guard m(mirrorMu_);
    std::ofstream(eventMirror_, std::ios::app) << canonicalDump(e.toJson()) << '\n';
  }
  run.events.push_back(std::move(e));
  run.cv.notify_all();
}

std::shared_ptr<Enactor::RunState> Enactor::createRun(const dataflow::WorkflowGraph& graph, BackendKind backend,
                                                      std::optional<ExecutionPlan> plan, const InputFeeds& feeds,
                                                      const RunOptions& options) {
  for (const auto& [name, _] : feeds) {
    if (!graph.sourceFeeds().count(name)) throw Error("UnknownFeed", "graph has no source feed named '" + name + "'");
  }
  if (options.provenance && !prov_) throw Error("NoProvenanceStore", "provenance requested but no store configured");

  auto run = std::make_shared<RunState>();
  run->options = options;
  run->flat = std::make_shared<const dataflow::WorkflowGraph>(dataflow::flattenGraph(graph));
  const auto& flat = *run->flat;
  auto& rec = run->record;
  rec.runId = options.runId.empty() ? freshRunId() : options.runId;
  rec.graphRef = dataflow::graphContentHash(graph);
  rec.backend = backend;
  if (backend == BackendKind::Sequential) {
    std::map<std::string, int> all;
    for (const auto& [id, _] : flat.parts().nodes) all[id] = 0;
    rec.plan = plan ? makePlan(flat.parts(), planForFlattened(*plan, flat), plan->workerCount, options.nodeWeights)
                    : makePlan(flat.parts(), std::move(all), 1, options.nodeWeights);
  } else if (plan) {
    rec.plan = makePlan(flat.parts(), planForFlattened(*plan, flat), plan->workerCount, options.nodeWeights);
  } else {
    rec.plan = partitionGraph(flat.parts(), std::max(1, options.workers), options.nodeWeights, options.maxLoad);
  }

  std::lock_guard lock(mu_);
  if (runs_.count(rec.runId) || (prov_ && prov_->hasRun(rec.runId))) {
    throw Error("DuplicateRun", "run id " + rec.runId + " already used");
  }
  runs_[rec.runId] = run;
  return run;
}

void Enactor::execute(const std::shared_ptr<RunState>& runPtr, const dataflow::WorkflowGraph& graph, const InputFeeds& feeds) {
  (void)graph;
  auto& run = *runPtr;
  const auto runId = run.record.runId;
  const auto& opts = run.options;
  {
    std::lock_guard lock(run.mu);
    run.record.status = RunStatus::Running;
    run.record.startedAt = clock_();
  }
  pushEvent(run, EventKind::StateChange, "", {{"status", "running"}});

  auto event = [this, &run](EventKind k, std::string pe, Json detail) { pushEvent(run, k, std::move(pe), std::move(detail)); };
  Coordinator sink(*this, run, event);

  try {
    if (opts.provenance) {
      provenance::RunSummary summary;
      summary.runId = runId;
      summary.agentId = opts.agentId;
      summary.graphRef = run.record.graphRef;
      summary.backend = std::string(backendName(run.record.backend));
      summary.status = "running";
      summary.startedAt = run.record.startedAt;
      summary.metadata = opts.metadata.is_object() ? opts.metadata : Json::object();
      prov_->beginRun(summary);
    }

    std::map<std::string, std::uint64_t> feedSeq;
    detail::FeedAdmitter admit = [&](const std::string& feed, dataflow::DataUnit& unit) {
      if (run.cancel->load()) return false;
      unit.seq = ++feedSeq[feed];
      if (opts.provenance) {
        StepRecord step;
        step.activity.peInstanceId = "feed:" + feed;
        step.activity.peName = "feed";
        step.activity.peVersion = "1";
        step.activity.startedAt = step.activity.endedAt = clock_();
        provenance::OutputRecord o;
        o.port = feed;
        o.payloadDigest = dataflow::payloadDigest(unit.payload);
        o.metadata = unit.metadata.is_object() ? unit.metadata : Json::object();
        o.payload = &unit.payload;
        step.outputs.push_back(std::move(o));
        unit.provId = sink.recordStep(std::move(step)).outputEntityIds.at(0);
      }
      {
        std::lock_guard lock(run.mu);
        ++run.record.feedUnitsDelivered;
      }
      return !run.cancel->load();
    };

    std::unique_ptr<detail::SpillArea> spill;
    if (opts.spill) spill = std::make_unique<detail::SpillArea>(workDir_ / "spill" / runId, opts.spillQuotaBytes);

    switch (run.record.backend) {
    case BackendKind::Sequential: detail::runSequential(*run.flat, feeds, sink, admit); break;
    case BackendKind::Threaded: detail::runThreaded(*run.flat, feeds, sink, admit, spill.get()); break;
    case BackendKind::Multiprocess:
      detail::runMultiprocess(*run.flat, feeds, sink, admit, run.record.plan, spill.get(), blobs_.dir(), *run.cancel);
      break;
    }
    if (spill) {
      std::error_code ec;
      fs::remove(spill->dir(), ec);
    }
  } catch (const Error& e) {
    sink.nodeError({"run", e.code(), e.what(), 0});
  } catch (const std::exception& e) {
    sink.nodeError({"run", "InternalError", e.what(), 0});
  }

  RunStatus final;
  double ended = clock_();
  {
    std::lock_guard lock(run.mu);
    if (!run.record.errorLog.empty()) {
      final = RunStatus::Failed;
    } else if (run.cancelRequested || run.cancel->load()) {
      final = RunStatus::Cancelled;
    } else {
      final = RunStatus::Completed;
    }
  }
  if (opts.provenance && prov_->hasRun(runId)) {
    try {
      prov_->updateRunStatus(runId, std::string(statusName(final)), ended);
    } catch (const std::exception&) {
    }
  }
  {
    std::lock_guard lock(run.mu);
    run.record.status = final;
    run.record.endedAt = ended;
  }
  // The terminal flag flips under the same lock that appends the last event.
  {
    std::lock_guard lock(run.mu);
    RunEvent e{runId, EventKind::StateChange, "", run.events.size() + 1, clock_(), {{"status", statusName(final)}}};
    if (!eventMirror_.empty()) {
      std::lock_guard m(mirrorMu_);
      std::ofstream(eventMirror_, std::ios::app) << canonicalDump(e.toJson()) << '\n';
    }
    run.events.push_back(std::move(e));
    run.terminal = true;
    run.cv.notify_all();
  }
}

RunRecord Enactor::executeGraph(const dataflow::WorkflowGraph& graph, BackendKind backend, std::optional<ExecutionPlan> plan,
                                const InputFeeds& feeds, const RunOptions& options) {
  auto run = createRun(graph, backend, std::move(plan), feeds, options);
  execute(run, graph, feeds);
  std::lock_guard lock(run->mu);
  return run->record;
}

std::string Enactor::submit(dataflow::WorkflowGraph graph, BackendKind backend, std::optional<ExecutionPlan> plan,
                            InputFeeds feeds, RunOptions options) {
  auto run = createRun(graph, backend, std::move(plan), feeds, options);
  const auto id = run->record.runId;
  std::lock_guard lock(mu_);
  background_.emplace_back([this, run, g = std::move(graph), f = std::move(feeds)] { execute(run, g, f); });
  return id;
}

std::shared_ptr<Enactor::RunState> Enactor::find(const std::string& runId) const {
  std::lock_guard lock(mu_);
  auto it = runs_.find(runId);
  if (it == runs_.end()) throw Error("UnknownRun", "no run " + runId);
  return it->second;
}

RunRecord Enactor::record(const std::string& runId) const {
  auto run = find(runId);
  std::lock_guard lock(run->mu);
  return run->record;
}

std::vector<std::string> Enactor::runIds() const {
  std::lock_guard lock(mu_);
  std::vector<std::string> ids;
  for (const auto& [id, _] : runs_) ids.push_back(id);
  return ids;
}

std::vector<RunEvent> Enactor::eventsSince(const std::string& runId, std::uint64_t after) const {
  auto run = find(runId);
  std::lock_guard lock(run->mu);
  if (after >= run->events.size()) return {};
  return {run->events.begin() + static_cast<std::ptrdiff_t>(after), run->events.end()};
}

void Enactor::monitorRun(const std::string& runId, const std::function<void(const RunEvent&)>& onEvent) const {
  auto run = find(runId);
  std::size_t delivered = 0;
  for (;;) {
    std::vector<RunEvent> batch;
    bool finished = false;
    {
      std::unique_lock lock(run->mu);
      run->cv.wait(lock, [&] { return run->events.size() > delivered || run->terminal; });
      batch.assign(run->events.begin() + static_cast<std::ptrdiff_t>(delivered), run->events.end());
      delivered = run->events.size();
      finished = run->terminal;
    }
    for (const auto& e : batch) onEvent(e);
    if (finished) return;
  }
}

RunRecord Enactor::wait(const std::string& runId) const {
  auto run = find(runId);
  std::unique_lock lock(run->mu);
  run->cv.wait(lock, [&] { return run->terminal; });
  return run->record;
}

bool Enactor::requestCancel(const std::string& runId) {
  std::shared_ptr<RunState> run;
  {
    std::lock_guard lock(mu_);
    auto it = runs_.find(runId);
    if (it == runs_.end()) return false;
    run = it->second;
  }
  std::lock_guard lock(run->mu);
  if (run->terminal) return false;
  run->cancelRequested = true;
  run->cancel->store(true);
  return true;
}

RunRecord Enactor::cancelRun(const std::string& runId) {
  auto run = find(runId);
  {
    std::lock_guard lock(run->mu);
    if (run->terminal) throw Error("AlreadyTerminal", "run " + runId + " is already " + std::string(statusName(run->record.status)));
    run->cancelRequested = true;
    run->cancel->store(true);
  }
  return wait(runId);
}

} // namespace verce::enactment
