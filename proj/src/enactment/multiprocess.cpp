// Multiprocess backend: one forked worker process per plan partition. Inside
// a worker every PE instance still gets its own thread; connections that
// cross partitions become socket pairs carrying length-prefixed frames, and
// each worker talks to the parent over a control socket (events, graph
// outputs, errors and synchronous provenance calls).

#include <dirent.h>
#include <signal.h>
#include <sys/socket.h>
#include <sys/wait.h>
#include <unistd.h>

#include <chrono>
#include <thread>

#include "runtime.hpp"

namespace verce::enactment::detail {

namespace fs = std::filesystem;
using namespace std::chrono_literals;

namespace {

enum Msg : std::uint8_t { kEvent = 1, kOutput = 2, kProvStep = 3, kError = 4, kDone = 5 };

constexpr auto kKillGrace = 5s;

void writeJson(dataflow::ByteWriter& w, const Json& j) { w.str(canonicalDump(j)); }
Json readJson(dataflow::ByteReader& r) { return Json::parse(r.str()); }

void writeStrings(dataflow::ByteWriter& w, const std::vector<std::string>& v) {
  w.u32(static_cast<std::uint32_t>(v.size()));
  for (const auto& s : v) w.str(s);
}

std::vector<std::string> readStrings(dataflow::ByteReader& r) {
  std::vector<std::string> v(r.u32());
  for (auto& s : v) s = r.str();
  return v;
}

/// RunSink for code running inside a worker process.
class ControlClient final : public RunSink {
public:
  ControlClient(int fd, std::atomic<bool>& cancel, bool prov, std::function<double()> now, fs::path blobDir)
      : fd_(fd), cancel_(cancel), prov_(prov), now_(std::move(now)), blobDir_(std::move(blobDir)) {}

  bool provenance() const override { return prov_; }
  const std::atomic<bool>& cancelFlag() const override { return cancel_; }
  double now() override { return now_(); }

  provenance::StepResult recordStep(StepRecord step) override {
    dataflow::ByteWriter w;
    w.u8(kProvStep);
    writeJson(w, provenance::toJson(step.activity));
    writeStrings(w, step.inputs);
    w.u32(static_cast<std::uint32_t>(step.outputs.size()));
    for (const auto& o : step.outputs) {
      w.str(o.port);
      w.str(o.payloadDigest);
      writeJson(w, o.metadata);
      w.u8(o.derivedFrom ? 1 : 0);
      if (o.derivedFrom) writeStrings(w, *o.derivedFrom);
      w.u8(o.payload ? 1 : 0);
      if (o.payload) dataflow::encodePayload(w, *o.payload);
    }
    std::lock_guard lock(mu_);
    if (!writeFrame(fd_, w.bytes(), nullptr)) throw Error("TransportError", "parent closed the control channel");
    auto reply = readFrame(fd_, nullptr);
    if (!reply) throw Error("TransportError", "parent closed the control channel");
    dataflow::ByteReader r(*reply);
    if (r.u8() == 0) {
      auto code = r.str();
      throw Error(code, r.str());
    }
    provenance::StepResult result;
    result.activityId = r.str();
    result.outputEntityIds = readStrings(r);
    return result;
  }

  void unitProcessed(const std::string& node, const std::string& port, std::uint64_t seq) override {
    dataflow::ByteWriter w;
    w.u8(kEvent);
    w.str(node);
    w.str(port);
    w.u64(seq);
    send(w);
  }

  void graphOutput(const std::string& node, const std::string& port, const DataUnit& unit) override {
    dataflow::ByteWriter w;
    w.u8(kOutput);
    w.str(node);
    w.str(port);
    writeTransported(w, unit, blobDir_);
    send(w);
  }

  void nodeError(const NodeFailure& f) override {
    cancel_.store(true);
    dataflow::ByteWriter w;
    w.u8(kError);
    w.str(f.node);
    w.str(f.code);
    w.str(f.message);
    w.u64(f.seq);
    send(w);
  }

  void done() {
    dataflow::ByteWriter w;
    w.u8(kDone);
    send(w);
  }

private:
  void send(const dataflow::ByteWriter& w) {
    std::lock_guard lock(mu_);
    writeFrame(fd_, w.bytes(), nullptr);
  }

  int fd_;
  std::atomic<bool>& cancel_;
  bool prov_;
  std::function<double()> now_;
  fs::path blobDir_;
  std::mutex mu_;
};

struct WorkerWiring {
  int worker = 0;
  int controlFd = -1;
  std::map<std::size_t, int> outFds;  ///< edge -> write end (consumer elsewhere)
  std::map<std::size_t, int> inFds;   ///< edge -> read end (producer elsewhere)
  std::map<std::tuple<std::string, std::string, std::string>, int> feedFds; ///< (feed, node, port) -> read end
};

/// Router inside a worker: local consumers get an Inbox push, remote ones a frame.
class WorkerRouter final : public Router {
public:
  WorkerRouter(const Topology& topo, const ExecutionPlan& plan, WorkerWiring& wiring, RunSink& sink, SpillArea* spill,
               fs::path blobDir)
      : topo_(topo), wiring_(wiring), sink_(sink), blobDir_(std::move(blobDir)) {
    const auto& edges = topo.graph.edges();
    for (const auto& id : topo.order) {
      if (plan.partitionOf.at(id) != wiring.worker) continue;
      local.push_back(id);
      std::vector<std::size_t> caps;
      auto& ports = slotPorts[id];
      if (auto it = topo.inEdges.find(id); it != topo.inEdges.end()) {
        for (auto e : it->second) {
          edgeSlot[e] = caps.size();
          caps.push_back(edges[e].bufferCapacity);
          ports.push_back(edges[e].to.port);
        }
      }
      if (auto it = topo.feedBindings.find(id); it != topo.feedBindings.end()) {
        for (const auto& [feed, port] : it->second) {
          feedSlot[{feed, id, port}] = caps.size();
          caps.push_back(dataflow::kDefaultBufferCapacity);
          ports.push_back(port);
        }
      }
      inboxes.emplace(id, std::make_unique<Inbox>(id, std::move(caps), sink.cancelFlag(), spill));
    }
  }

  void route(const std::string& node, const std::string& port, DataUnit&& unit) override {
    const auto& edges = topo_.consumers(node, port);
    if (edges.empty()) {
      sink_.graphOutput(node, port, unit);
      return;
    }
    for (auto e : edges) {
      const auto& to = topo_.graph.edges()[e].to;
      if (auto fd = wiring_.outFds.find(e); fd != wiring_.outFds.end()) {
        if (!writeFrame(fd->second, encodeTransported(unit, blobDir_), &sink_.cancelFlag())) {
          if (sink_.cancelled()) throw CancelledSignal{};
          throw Error("TransportError", "consumer of " + node + "." + port + " went away");
        }
      } else {
        inboxes.at(to.node)->push(edgeSlot.at(e), unit);
      }
    }
  }

  void closeOutputs(const std::string& node) {
    const auto& edges = topo_.graph.edges();
    for (std::size_t e = 0; e < edges.size(); ++e) {
      if (edges[e].from.node != node) continue;
      if (auto fd = wiring_.outFds.find(e); fd != wiring_.outFds.end()) {
        ::shutdown(fd->second, SHUT_WR);
        ::close(fd->second);
      } else {
        inboxes.at(edges[e].to.node)->close(edgeSlot.at(e));
      }
    }
  }

  std::vector<std::string> local;
  std::map<std::string, std::unique_ptr<Inbox>> inboxes;
  std::map<std::string, std::vector<std::string>> slotPorts;
  std::map<std::size_t, std::size_t> edgeSlot;
  std::map<std::tuple<std::string, std::string, std::string>, std::size_t> feedSlot;

private:
  const Topology& topo_;
  WorkerWiring& wiring_;
  RunSink& sink_;
  fs::path blobDir_;
};

void closeAllExcept(const std::set<int>& keep) {
  std::vector<int> open;
  if (DIR* d = ::opendir("/proc/self/fd")) {
    const int own = ::dirfd(d);
    while (auto* ent = ::readdir(d)) {
      if (ent->d_name[0] == '.') continue;
      const int fd = std::atoi(ent->d_name);
      if (fd > 2 && fd != own && !keep.count(fd)) open.push_back(fd);
    }
    ::closedir(d);
  }
  for (int fd : open) ::close(fd);
}

void workerMain(const Topology& topo, const ExecutionPlan& plan, WorkerWiring& wiring, std::atomic<bool>& cancel, bool prov,
                std::function<double()> now, SpillArea* spill, const fs::path& blobDir) {
  ControlClient client(wiring.controlFd, cancel, prov, std::move(now), blobDir);
  WorkerRouter router(topo, plan, wiring, client, spill, blobDir);
  std::map<std::string, std::unique_ptr<NodeRunner>> runners;
  for (const auto& id : router.local)
    runners.emplace(id, std::make_unique<NodeRunner>(id, topo.graph.node(id), client, router));

  std::vector<std::thread> threads;
  auto reader = [&](int fd, Inbox& inbox, std::size_t slot, std::string what) {
    try {
      while (auto frame = readFrame(fd, &cancel)) {
        dataflow::ByteReader r(*frame);
        inbox.push(slot, decodeTransported(r, blobDir));
      }
    } catch (const CancelledSignal&) {
    } catch (const std::exception& e) {
      client.nodeError({what, "TransportError", e.what(), 0});
    }
    inbox.close(slot);
    ::close(fd);
  };
  for (const auto& [e, fd] : wiring.inFds) {
    const auto& to = topo.graph.edges()[e].to;
    threads.emplace_back(reader, fd, std::ref(*router.inboxes.at(to.node)), router.edgeSlot.at(e), to.node);
  }
  for (const auto& [key, fd] : wiring.feedFds) {
    const auto& node = std::get<1>(key);
    threads.emplace_back(reader, fd, std::ref(*router.inboxes.at(node)), router.feedSlot.at(key), node);
  }
  for (const auto& id : router.local) {
    threads.emplace_back([&, id] {
      runNodeLoop(*runners.at(id), *router.inboxes.at(id), router.slotPorts.at(id), client);
      router.closeOutputs(id);
    });
  }
  for (auto& t : threads) t.join();
  client.done();
}

/// Parent-side handling of one worker's control channel.
void serveControl(int fd, int worker, RunSink& sink, const fs::path& blobDir, bool& done) {
  try {
    while (auto frame = readFrame(fd, nullptr)) {
      dataflow::ByteReader r(*frame);
      switch (r.u8()) {
      case kEvent: {
        auto node = r.str();
        auto port = r.str();
        sink.unitProcessed(node, port, r.u64());
        break;
      }
      case kOutput: {
        auto node = r.str();
        auto port = r.str();
        sink.graphOutput(node, port, decodeTransported(r, blobDir));
        break;
      }
      case kProvStep: {
        StepRecord step;
        step.activity = provenance::activityFromJson(readJson(r));
        step.inputs = readStrings(r);
        const auto n = r.u32();
        std::vector<dataflow::Payload> payloads;
        payloads.reserve(n);
        std::vector<bool> hasPayload;
        for (std::uint32_t i = 0; i < n; ++i) {
          provenance::OutputRecord o;
          o.port = r.str();
          o.payloadDigest = r.str();
          o.metadata = readJson(r);
          if (r.u8()) o.derivedFrom = readStrings(r);
          const bool has = r.u8() != 0;
          hasPayload.push_back(has);
          payloads.push_back(has ? dataflow::decodePayload(r) : dataflow::Payload{0.0});
          step.outputs.push_back(std::move(o));
        }
        for (std::uint32_t i = 0; i < n; ++i)
          if (hasPayload[i]) step.outputs[i].payload = &payloads[i];
        dataflow::ByteWriter reply;
        try {
          auto result = sink.recordStep(std::move(step));
          reply.u8(1);
          reply.str(result.activityId);
          writeStrings(reply, result.outputEntityIds);
        } catch (const Error& e) {
          reply = {};
          reply.u8(0);
          reply.str(e.code());
          reply.str(e.what());
        }
        writeFrame(fd, reply.bytes(), nullptr);
        break;
      }
      case kError: {
        NodeFailure f;
        f.node = r.str();
        f.code = r.str();
        f.message = r.str();
        f.seq = r.u64();
        sink.nodeError(f);
        break;
      }
      case kDone: done = true; break;
      default: throw Error("MalformedFrame", "unknown control message");
      }
    }
  } catch (const std::exception& e) {
    sink.nodeError({"worker:" + std::to_string(worker), "TransportError", e.what(), 0});
  }
}

std::pair<int, int> socketPair() {
  int sv[2];
  if (::socketpair(AF_UNIX, SOCK_STREAM, 0, sv) != 0) throw Error("TransportError", "socketpair failed");
  return {sv[0], sv[1]};
}

} // namespace

void runMultiprocess(const dataflow::WorkflowGraph& g, const InputFeeds& feeds, RunSink& sink, const FeedAdmitter& admit,
                     const ExecutionPlan& plan, SpillArea* spill, const fs::path& blobDir, std::atomic<bool>& sharedCancel) {
  Topology topo(g);
  std::set<int> workers;
  for (const auto& [_, w] : plan.partitionOf) workers.insert(w);

  // Wiring: child-side fds per worker, parent-side fds separately.
  std::map<int, WorkerWiring> wiring;
  std::map<int, int> parentControl;
  std::vector<std::pair<std::tuple<std::string, std::string, std::string>, int>> parentFeeds;
  std::vector<int> childEnds;
  for (int w : workers) {
    auto [p, c] = socketPair();
    wiring[w].worker = w;
    wiring[w].controlFd = c;
    parentControl[w] = p;
    childEnds.push_back(c);
  }
  const auto& edges = g.edges();
  for (std::size_t e = 0; e < edges.size(); ++e) {
    const int wf = plan.partitionOf.at(edges[e].from.node), wt = plan.partitionOf.at(edges[e].to.node);
    if (wf == wt) continue;
    auto [a, b] = socketPair();
    wiring[wf].outFds[e] = a;
    wiring[wt].inFds[e] = b;
    childEnds.push_back(a);
    childEnds.push_back(b);
  }
  for (const auto& [name, ports] : g.sourceFeeds()) {
    for (const auto& p : ports) {
      auto [a, b] = socketPair();
      const auto key = std::make_tuple(name, p.node, p.port);
      wiring[plan.partitionOf.at(p.node)].feedFds[key] = b;
      parentFeeds.emplace_back(key, a);
      childEnds.push_back(b);
    }
  }

  std::function<double()> now = [&sink] { return sink.now(); };
  std::map<int, pid_t> pids;
  for (int w : workers) {
    const pid_t pid = ::fork();
    if (pid < 0) {
      sharedCancel.store(true);
      sink.nodeError({"worker:" + std::to_string(w), "WorkerCrashed", "fork failed", 0});
      break;
    }
    if (pid == 0) {
      auto& mine = wiring[w];
      std::set<int> keep{mine.controlFd};
      for (const auto& [_, fd] : mine.outFds) keep.insert(fd);
      for (const auto& [_, fd] : mine.inFds) keep.insert(fd);
      for (const auto& [_, fd] : mine.feedFds) keep.insert(fd);
      closeAllExcept(keep);
      int rc = 0;
      try {
        workerMain(topo, plan, mine, sharedCancel, sink.provenance(), now, spill, blobDir);
      } catch (...) {
        rc = 1;
      }
      ::_exit(rc);
    }
    pids[w] = pid;
  }
  for (int fd : childEnds) ::close(fd);

  std::map<int, bool> done;
  for (int w : workers) done[w] = false;
  std::vector<std::thread> controllers;
  for (const auto& [w, fd] : parentControl) {
    if (!pids.count(w)) continue;
    controllers.emplace_back(serveControl, fd, w, std::ref(sink), std::cref(blobDir), std::ref(done[w]));
  }

  try {
    std::map<std::string, std::vector<int>> feedFdsByName;
    for (const auto& [key, fd] : parentFeeds) feedFdsByName[std::get<0>(key)].push_back(fd);
    for (const auto& [name, fds] : feedFdsByName) {
      auto it = feeds.find(name);
      if (it == feeds.end()) continue;
      for (const auto& original : it->second) {
        DataUnit unit = original;
        if (!admit(name, unit)) throw CancelledSignal{};
        const auto frame = encodeTransported(unit, blobDir);
        for (int fd : fds) {
          if (!writeFrame(fd, frame, &sharedCancel)) throw CancelledSignal{};
        }
      }
    }
  } catch (const CancelledSignal&) {
  } catch (const std::exception& e) {
    sink.nodeError({"feed", "TransportError", e.what(), 0});
  }
  for (const auto& [_, fd] : parentFeeds) {
    ::shutdown(fd, SHUT_WR);
    ::close(fd);
  }

  std::map<int, int> statusOf;
  std::optional<std::chrono::steady_clock::time_point> cancelSeen;
  while (statusOf.size() < pids.size()) {
    for (const auto& [w, pid] : pids) {
      if (statusOf.count(w)) continue;
      int status = 0;
      if (::waitpid(pid, &status, WNOHANG) == pid) statusOf[w] = status;
    }
    if (statusOf.size() == pids.size()) break;
    if (sharedCancel.load()) {
      if (!cancelSeen) cancelSeen = std::chrono::steady_clock::now();
      if (std::chrono::steady_clock::now() - *cancelSeen > kKillGrace) {
        for (const auto& [w, pid] : pids)
          if (!statusOf.count(w)) ::kill(pid, SIGKILL);
      }
    }
    std::this_thread::sleep_for(5ms);
  }
  for (auto& t : controllers) t.join();
  for (const auto& [w, fd] : parentControl) ::close(fd);

  if (sharedCancel.load()) return;
  for (const auto& [w, status] : statusOf) {
    if (!done[w] || !WIFEXITED(status) || WEXITSTATUS(status) != 0) {
      sink.nodeError({"worker:" + std::to_string(w), "WorkerCrashed", "worker process ended without finishing", 0});
    }
  }
}

} // namespace verce::enactment::detail
