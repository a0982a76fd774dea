#pragma once
// Pieces shared by the execution backends. Not part of the public API.

#include <atomic>
#include <condition_variable>
#include <cstdio>
#include <deque>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <set>
#include <string>
#include <vector>

#include "verce/dataflow/graph.hpp"
#include "verce/enactment/run.hpp"
#include "verce/provenance/store.hpp"

namespace verce::enactment::detail {

using dataflow::DataUnit;

/// Thrown inside workers to unwind once the run's cancel flag is set.
/// Deliberately not a std::exception so PE code cannot swallow it by accident.
struct CancelledSignal {};

/// A PE (or the runtime acting for it) failed. Carries what goes in the error log.
struct NodeFailure {
  std::string node;
  std::string code;
  std::string message;
  std::uint64_t seq = 0;
};

struct StepRecord {
  provenance::ProvActivity activity;
  std::vector<std::string> inputs;
  std::vector<provenance::OutputRecord> outputs;
};

/// What workers report to. The parent-side implementation updates the run
/// record and provenance store; forked workers forward to the parent.
class RunSink {
public:
  virtual ~RunSink() = default;
  virtual bool provenance() const = 0;
  virtual const std::atomic<bool>& cancelFlag() const = 0;
  virtual double now() = 0;
  virtual provenance::StepResult recordStep(StepRecord step) = 0;
  virtual void unitProcessed(const std::string& node, const std::string& port, std::uint64_t seq) = 0;
  virtual void graphOutput(const std::string& node, const std::string& port, const DataUnit& unit) = 0;
  /// Records the failure and stops the whole run.
  virtual void nodeError(const NodeFailure& failure) = 0;

  bool cancelled() const { return cancelFlag().load(std::memory_order_relaxed); }
};

/// Feed name -> unit, after the parent assigned seq and provenance id.
/// Returns false when the run was cancelled and feeding should stop.
using FeedAdmitter = std::function<bool(const std::string& feed, DataUnit& unit)>;

/// Connection lookup shared by the backends.
struct Topology {
  explicit Topology(const dataflow::WorkflowGraph& g);

  const dataflow::WorkflowGraph& graph;
  std::vector<std::string> order; ///< topological
  /// (node, output port) -> indices into graph.edges()
  std::map<std::pair<std::string, std::string>, std::vector<std::size_t>> outEdges;
  /// node -> incoming edge indices, in edge order
  std::map<std::string, std::vector<std::size_t>> inEdges;
  /// node -> (feed name, port) bindings, feeds in name order
  std::map<std::string, std::vector<std::pair<std::string, std::string>>> feedBindings;

  const std::vector<std::size_t>& consumers(const std::string& node, const std::string& port) const;
};

class Router {
public:
  virtual ~Router() = default;
  virtual void route(const std::string& node, const std::string& port, DataUnit&& unit) = 0;
};

/// One PE instance plus its emitter. Emissions during process() are
/// buffered and released (recorded, numbered, routed) when the step ends;
/// emissions from start()/finish() are released one by one.
class NodeRunner final : public dataflow::Emitter {
public:
  NodeRunner(std::string id, const dataflow::NodeSpec& spec, RunSink& sink, Router& router);

  const std::string& id() const noexcept { return id_; }
  void start();
  void deliver(const std::string& port, DataUnit unit);
  void finish();

  void emit(std::string_view port, dataflow::Payload payload, Json metadata, std::vector<std::string> derivedFrom) override;

private:
  struct Emission {
    std::string port;
    dataflow::Payload payload;
    Json metadata;
    std::vector<std::string> derivedFrom;
  };

  void instantiate();
  void release(double stepStart);
  [[noreturn]] void fail(const std::string& what, const std::string& code, std::uint64_t seq, double stepStart);
  void generatorStep(const char* phase, const std::function<void()>& body);

  std::string id_;
  const dataflow::NodeSpec& spec_;
  RunSink& sink_;
  Router& router_;
  std::unique_ptr<dataflow::ProcessingElement> pe_;
  bool trackInputs_ = false;
  bool buffering_ = false;
  double stepStart_ = 0.0;
  std::vector<Emission> buffer_;
  std::vector<std::string> consumed_;
  std::map<std::string, std::uint64_t> seqByPort_;
};

/// Local overflow storage for full connections, with a byte quota shared by
/// every connection of the run. Files are created only when something spills.
class SpillArea {
public:
  SpillArea(std::filesystem::path dir, std::uint64_t quotaBytes) : dir_(std::move(dir)), quota_(quotaBytes) {}
  const std::filesystem::path& dir() const noexcept { return dir_; }
  std::uint64_t bytesUsed() const noexcept { return used_.load(); }
  std::size_t filesCreated() const noexcept { return files_.load(); }

  /// FIFO of encoded units on disk.
  class File {
  public:
    File(SpillArea& area, const std::string& name);
    ~File();
    void push(const DataUnit& u);
    DataUnit pop();
    std::size_t size() const noexcept { return count_; }

  private:
    SpillArea& area_;
    std::filesystem::path path_;
    std::FILE* w_ = nullptr;
    std::FILE* r_ = nullptr;
    std::size_t count_ = 0;
  };

private:
  friend class File;
  std::filesystem::path dir_;
  std::uint64_t quota_;
  std::atomic<std::uint64_t> used_{0};
  std::atomic<std::size_t> files_{0};
  std::mutex dirMu_;
};

/// Bounded, order-preserving input side of one PE instance: one FIFO per
/// incoming connection, popped round-robin. push blocks while the FIFO is
/// full unless spilling is enabled.
class Inbox {
public:
  Inbox(std::string owner, std::vector<std::size_t> capacities, const std::atomic<bool>& cancel, SpillArea* spill);

  void push(std::size_t slot, DataUnit unit);
  /// False once every slot is closed and drained.
  bool pop(std::size_t& slot, DataUnit& unit);
  void close(std::size_t slot);

private:
  struct Slot {
    std::deque<DataUnit> queue;
    std::size_t capacity = 1;
    bool closed = false;
    std::unique_ptr<SpillArea::File> spill;
  };

  std::string owner_;
  const std::atomic<bool>& cancel_;
  SpillArea* spillArea_;
  std::mutex mu_;
  std::condition_variable notEmpty_;
  std::condition_variable notFull_;
  std::vector<Slot> slots_;
  std::size_t next_ = 0;
};

// Framing shared by the multiprocess backend: u32 little-endian length, then bytes.

/// Throws CancelledSignal when `cancel` becomes set while waiting; returns
/// false when the peer has gone.
bool writeFrame(int fd, std::string_view bytes, const std::atomic<bool>* cancel);
/// Empty optional on orderly EOF.
std::optional<std::string> readFrame(int fd, const std::atomic<bool>* cancel);

/// Unit encoding for process boundaries: arrays over the inline limit travel
/// through the blob store by reference.
std::string encodeTransported(const DataUnit& u, const std::filesystem::path& blobDir);
DataUnit decodeTransported(dataflow::ByteReader& r, const std::filesystem::path& blobDir);
void writeTransported(dataflow::ByteWriter& w, const DataUnit& u, const std::filesystem::path& blobDir);

/// Worker body shared by the threaded and multiprocess backends.
void runNodeLoop(NodeRunner& runner, Inbox& inbox, const std::vector<std::string>& slotPorts, RunSink& sink);

void runSequential(const dataflow::WorkflowGraph& g, const InputFeeds& feeds, RunSink& sink, const FeedAdmitter& admit);
void runThreaded(const dataflow::WorkflowGraph& g, const InputFeeds& feeds, RunSink& sink, const FeedAdmitter& admit,
                 SpillArea* spill);
void runMultiprocess(const dataflow::WorkflowGraph& g, const InputFeeds& feeds, RunSink& sink, const FeedAdmitter& admit,
                     const ExecutionPlan& plan, SpillArea* spill, const std::filesystem::path& blobDir,
                     std::atomic<bool>& sharedCancel);

} // namespace verce::enactment::detail
