#pragma once

#include <atomic>
#include <condition_variable>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "verce/blob_store.hpp"
#include "verce/dataflow/graph.hpp"
#include "verce/enactment/run.hpp"
#include "verce/provenance/store.hpp"

namespace verce::enactment {

struct EnactorConfig {
  /// Needed by runs with provenance on. Its cancel and fired handlers are
  /// taken over by the enactor.
  provenance::ProvStore* provStore = nullptr;
  /// Blob store and spill files live below this directory.
  std::filesystem::path workDir;
  Clock clock;
  /// When set, every run event is appended here as one JSON line.
  std::filesystem::path eventMirror;
};

/// Runs workflow graphs and keeps their records and event feeds.
class Enactor {
public:
  explicit Enactor(EnactorConfig config = {});
  ~Enactor();
  Enactor(const Enactor&) = delete;
  Enactor& operator=(const Enactor&) = delete;

  /// Runs to completion in the calling thread. PE failures, cancellation and
  /// spill exhaustion end up in the returned record's status and errorLog.
  /// Errors: DuplicateRun, UnknownFeed, NoProvenanceStore, plan errors.
  RunRecord executeGraph(const dataflow::WorkflowGraph& graph, BackendKind backend, std::optional<ExecutionPlan> plan,
                         const InputFeeds& feeds, const RunOptions& options = {});

  /// Starts the run on a background thread and returns its id.
  std::string submit(dataflow::WorkflowGraph graph, BackendKind backend, std::optional<ExecutionPlan> plan, InputFeeds feeds,
                     RunOptions options = {});

  /// Snapshot. Errors: UnknownRun.
  RunRecord record(const std::string& runId) const;
  std::vector<std::string> runIds() const;
  /// Events with seq > `after`, in order. Errors: UnknownRun.
  std::vector<RunEvent> eventsSince(const std::string& runId, std::uint64_t after) const;
  /// Calls `onEvent` for every event of the run in order, blocking until the
  /// terminal stateChange has been delivered. Errors: UnknownRun.
  void monitorRun(const std::string& runId, const std::function<void(const RunEvent&)>& onEvent) const;
  /// Blocks until the run is terminal.
  RunRecord wait(const std::string& runId) const;

  /// Requests cancellation and waits for the run to stop.
  /// Errors: UnknownRun, AlreadyTerminal.
  RunRecord cancelRun(const std::string& runId);
  /// Non-blocking; false when the run is unknown or already terminal.
  bool requestCancel(const std::string& runId);

  BlobStore& blobStore() noexcept { return blobs_; }
  const std::filesystem::path& workDir() const noexcept { return workDir_; }
  provenance::ProvStore* provStore() const noexcept { return prov_; }
  double now() const { return clock_(); }

  struct RunState;

private:
  std::shared_ptr<RunState> createRun(const dataflow::WorkflowGraph& graph, BackendKind backend,
                                      std::optional<ExecutionPlan> plan, const InputFeeds& feeds, const RunOptions& options);
  void execute(const std::shared_ptr<RunState>& run, const dataflow::WorkflowGraph& graph, const InputFeeds& feeds);
  std::shared_ptr<RunState> find(const std::string& runId) const;
  void pushEvent(RunState& run, EventKind kind, std::string peInstance, Json detail);

  provenance::ProvStore* prov_;
  std::filesystem::path workDir_;
  Clock clock_;
  std::filesystem::path eventMirror_;
  BlobStore blobs_;

  mutable std::mutex mu_;
  std::map<std::string, std::shared_ptr<RunState>> runs_;
  std::vector<std::thread> background_;
  std::mutex mirrorMu_;
};

} // namespace verce::enactment
