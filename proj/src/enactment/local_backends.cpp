#include <thread>

#include "runtime.hpp"

namespace verce::enactment::detail {

namespace {

/// Depth-first, in the calling thread: a routed unit is processed by every
/// consumer before route() returns.
class SequentialRouter final : public Router {
public:
  SequentialRouter(const Topology& topo, RunSink& sink) : topo_(topo), sink_(sink) {}
  std::map<std::string, std::unique_ptr<NodeRunner>> runners;

  void route(const std::string& node, const std::string& port, DataUnit&& unit) override {
    const auto& edges = topo_.consumers(node, port);
    if (edges.empty()) {
      sink_.graphOutput(node, port, unit);
      return;
    }
    for (std::size_t k = 0; k < edges.size(); ++k) {
      const auto& to = topo_.graph.edges()[edges[k]].to;
      runners.at(to.node)->deliver(to.port, k + 1 == edges.size() ? std::move(unit) : unit);
    }
  }

private:
  const Topology& topo_;
  RunSink& sink_;
};

} // namespace

void runSequential(const dataflow::WorkflowGraph& g, const InputFeeds& feeds, RunSink& sink, const FeedAdmitter& admit) {
  Topology topo(g);
  SequentialRouter router(topo, sink);
  for (const auto& id : topo.order) router.runners.emplace(id, std::make_unique<NodeRunner>(id, g.node(id), sink, router));
  try {
    for (const auto& id : topo.order) router.runners.at(id)->start();
    for (const auto& [name, ports] : g.sourceFeeds()) {
      auto it = feeds.find(name);
      if (it == feeds.end()) continue;
      for (const auto& original : it->second) {
        DataUnit unit = original;
        if (!admit(name, unit)) throw CancelledSignal{};
        for (const auto& p : ports) router.runners.at(p.node)->deliver(p.port, unit);
      }
    }
    for (const auto& id : topo.order) {
      if (sink.cancelled()) throw CancelledSignal{};
      router.runners.at(id)->finish();
    }
  } catch (const CancelledSignal&) {
  } catch (const NodeFailure& f) {
    sink.nodeError(f);
  }
}

namespace {

/// One Inbox per PE instance; slot i of a node's inbox is its i-th incoming
/// edge, followed by its feed bindings.
class ThreadedRouter final : public Router {
public:
  ThreadedRouter(const Topology& topo, RunSink& sink, SpillArea* spill) : topo_(topo), sink_(sink) {
    const auto& edges = topo.graph.edges();
    for (const auto& id : topo.order) {
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
    for (std::size_t k = 0; k < edges.size(); ++k) {
      const auto& to = topo_.graph.edges()[edges[k]].to;
      inboxes.at(to.node)->push(edgeSlot.at(edges[k]), k + 1 == edges.size() ? std::move(unit) : unit);
    }
  }

  void closeOutputs(const std::string& node) {
    const auto& edges = topo_.graph.edges();
    for (std::size_t e = 0; e < edges.size(); ++e) {
      if (edges[e].from.node == node) inboxes.at(edges[e].to.node)->close(edgeSlot.at(e));
    }
  }

  std::map<std::string, std::unique_ptr<Inbox>> inboxes;
  std::map<std::string, std::vector<std::string>> slotPorts;
  std::map<std::size_t, std::size_t> edgeSlot;
  std::map<std::tuple<std::string, std::string, std::string>, std::size_t> feedSlot;

private:
  const Topology& topo_;
  RunSink& sink_;
};

} // namespace

void runNodeLoop(NodeRunner& runner, Inbox& inbox, const std::vector<std::string>& slotPorts, RunSink& sink) {
  try {
    runner.start();
    std::size_t slot = 0;
    DataUnit unit;
    while (inbox.pop(slot, unit)) runner.deliver(slotPorts[slot], std::move(unit));
    if (sink.cancelled()) throw CancelledSignal{};
    runner.finish();
  } catch (const CancelledSignal&) {
  } catch (const NodeFailure& f) {
    sink.nodeError(f);
  } catch (const std::exception& e) {
    sink.nodeError({runner.id(), "PEFailure", e.what(), 0});
  }
}

void runThreaded(const dataflow::WorkflowGraph& g, const InputFeeds& feeds, RunSink& sink, const FeedAdmitter& admit,
                 SpillArea* spill) {
  Topology topo(g);
  ThreadedRouter router(topo, sink, spill);
  std::map<std::string, std::unique_ptr<NodeRunner>> runners;
  for (const auto& id : topo.order) runners.emplace(id, std::make_unique<NodeRunner>(id, g.node(id), sink, router));

  std::vector<std::thread> threads;
  for (const auto& id : topo.order) {
    threads.emplace_back([&, id] {
      runNodeLoop(*runners.at(id), *router.inboxes.at(id), router.slotPorts.at(id), sink);
      router.closeOutputs(id);
    });
  }

  std::string feedName;
  try {
    for (const auto& [name, ports] : g.sourceFeeds()) {
      feedName = name;
      auto it = feeds.find(name);
      if (it != feeds.end()) {
        for (const auto& original : it->second) {
          DataUnit unit = original;
          if (!admit(name, unit)) throw CancelledSignal{};
          for (const auto& p : ports) router.inboxes.at(p.node)->push(router.feedSlot.at({name, p.node, p.port}), unit);
        }
      }
    }
  } catch (const CancelledSignal&) {
  } catch (const Error& e) {
    sink.nodeError({"feed:" + feedName, e.code(), e.what(), 0});
  }
  for (const auto& [key, slot] : router.feedSlot) router.inboxes.at(std::get<1>(key))->close(slot);
  for (auto& t : threads) t.join();
}

} // namespace verce::enactment::detail
