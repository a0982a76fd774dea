#include "verce/dataflow/graph.hpp"

#include <algorithm>
#include <queue>
#include <set>
#include <unordered_map>

namespace verce::dataflow {

std::vector<Issue> ValidationReport::errors() const {
  std::vector<Issue> out;
  std::copy_if(issues.begin(), issues.end(), std::back_inserter(out),
               [](const Issue& i) { return i.severity == Severity::Error; });
  return out;
}

std::vector<Issue> ValidationReport::warnings() const {
  std::vector<Issue> out;
  std::copy_if(issues.begin(), issues.end(), std::back_inserter(out),
               [](const Issue& i) { return i.severity == Severity::Warning; });
  return out;
}

Json ValidationReport::toJson() const {
  Json list = Json::array();
  for (const auto& i : issues) {
    Json j = {{"severity", i.severity == Severity::Error ? "error" : "warning"},
              {"code", i.code},
              {"message", i.message},
              {"location", i.location}};
    if (!i.nodes.empty()) j["nodes"] = i.nodes;
    list.push_back(std::move(j));
  }
  return {{"ok", ok}, {"issues", std::move(list)}};
}

const NodeSpec& WorkflowGraph::node(const std::string& id) const {
  auto it = parts_.nodes.find(id);
  if (it == parts_.nodes.end()) throw Error("UnknownNode", "no node '" + id + "'");
  return it->second;
}

std::vector<PortRef> WorkflowGraph::unconsumedOutputs() const {
  std::set<std::pair<std::string, std::string>> consumed;
  for (const auto& e : parts_.edges) consumed.emplace(e.from.node, e.from.port);
  std::vector<PortRef> out;
  for (const auto& [id, spec] : parts_.nodes) {
    for (const auto& p : spec.pe->outputPorts) {
      if (!consumed.count({id, p})) out.push_back(PortRef::out(id, p));
    }
  }
  return out;
}

namespace {

/// Node-indexed adjacency over the edges whose endpoints both exist.
struct Topology {
  std::vector<std::string> ids;
  std::vector<std::vector<std::size_t>> succ;
  std::vector<std::vector<std::size_t>> pred;
};

Topology buildTopology(const GraphParts& parts) {
  Topology t;
  std::unordered_map<std::string, std::size_t> index;
  index.reserve(parts.nodes.size());
  t.ids.reserve(parts.nodes.size());
  for (const auto& [id, _] : parts.nodes) {
    index.emplace(id, t.ids.size());
    t.ids.push_back(id);
  }
  t.succ.resize(t.ids.size());
  t.pred.resize(t.ids.size());
  for (const auto& e : parts.edges) {
    auto f = index.find(e.from.node);
    auto g = index.find(e.to.node);
    if (f == index.end() || g == index.end()) continue;
    t.succ[f->second].push_back(g->second);
    t.pred[g->second].push_back(f->second);
  }
  return t;
}

/// Kahn's algorithm with a min-heap on id (ids are stored sorted, so the
/// index order is the lexicographic order). Returns the order and whether it
/// covers every node.
std::pair<std::vector<std::size_t>, bool> kahn(const Topology& t) {
  std::vector<std::size_t> indeg(t.ids.size());
  for (std::size_t i = 0; i < t.ids.size(); ++i) indeg[i] = t.pred[i].size();
  std::priority_queue<std::size_t, std::vector<std::size_t>, std::greater<>> ready;
  for (std::size_t i = 0; i < indeg.size(); ++i)
    if (indeg[i] == 0) ready.push(i);
  std::vector<std::size_t> order;
  order.reserve(t.ids.size());
  while (!ready.empty()) {
    auto n = ready.top();
    ready.pop();
    order.push_back(n);
    for (auto s : t.succ[n])
      if (--indeg[s] == 0) ready.push(s);
  }
  const bool complete = order.size() == t.ids.size();
  return {std::move(order), complete};
}

/// Names one cycle among the nodes Kahn could not schedule. Every such node
/// has an unscheduled predecessor, so walking predecessors must revisit a node.
std::vector<std::string> findCycle(const Topology& t, const std::vector<std::size_t>& scheduled) {
  std::vector<bool> done(t.ids.size(), false);
  for (auto n : scheduled) done[n] = true;
  std::size_t start = 0;
  while (start < done.size() && done[start]) ++start;
  std::vector<std::size_t> path;
  std::vector<int> pos(t.ids.size(), -1);
  std::size_t cur = start;
  while (pos[cur] < 0) {
    pos[cur] = static_cast<int>(path.size());
    path.push_back(cur);
    std::size_t next = cur;
    bool found = false;
    for (auto p : t.pred[cur]) {
      if (!done[p] && (!found || p < next)) {
        next = p;
        found = true;
      }
    }
    cur = next;
  }
  std::vector<std::string> cycle;
  for (auto i = static_cast<std::size_t>(pos[cur]); i < path.size(); ++i) cycle.push_back(t.ids[path[i]]);
  std::sort(cycle.begin(), cycle.end());
  return cycle;
}

std::string joinIds(const std::vector<std::string>& ids) {
  std::string s;
  for (const auto& id : ids) {
    if (!s.empty()) s += ", ";
    s += id;
  }
  return s;
}

} // namespace

ValidationReport validateGraph(const GraphParts& parts) {
  ValidationReport report;
  auto error = [&](std::string code, std::string message, std::string location) {
    report.issues.push_back({Severity::Error, std::move(code), std::move(message), std::move(location), {}});
  };

  for (const auto& [id, spec] : parts.nodes) {
    if (!spec.pe) {
      error("MissingDescriptor", "node has no PE descriptor", id);
      continue;
    }
    if (auto why = checkParameters(spec.pe->parameterSchema, spec.params); !why.empty()) {
      error("ParameterMismatch", why, id);
    }
  }

  auto descriptorOf = [&](const std::string& node) -> const PEDescriptor* {
    auto it = parts.nodes.find(node);
    return it == parts.nodes.end() || !it->second.pe ? nullptr : it->second.pe.get();
  };

  std::set<std::pair<std::string, std::string>> connectedInputs;
  std::set<std::pair<std::string, std::string>> connectedOutputs;
  for (const auto& e : parts.edges) {
    const auto where = e.from.str() + "->" + e.to.str();
    const auto* src = descriptorOf(e.from.node);
    const auto* dst = descriptorOf(e.to.node);
    if (!src || e.from.direction != PortDirection::Output || !src->hasOutput(e.from.port)) {
      error("DanglingPort", "unknown output port " + e.from.str(), where);
    } else {
      connectedOutputs.emplace(e.from.node, e.from.port);
    }
    if (!dst || e.to.direction != PortDirection::Input || !dst->hasInput(e.to.port)) {
      error("DanglingPort", "unknown input port " + e.to.str(), where);
    } else {
      connectedInputs.emplace(e.to.node, e.to.port);
    }
    if (e.bufferCapacity == 0) error("InvalidCapacity", "bufferCapacity must be positive", where);
  }
  for (const auto& [feed, targets] : parts.sourceFeeds) {
    for (const auto& t : targets) {
      const auto* dst = descriptorOf(t.node);
      if (!dst || !dst->hasInput(t.port)) {
        error("DanglingPort", "feed '" + feed + "' targets unknown input port " + t.str(), feed);
      } else {
        connectedInputs.emplace(t.node, t.port);
      }
    }
  }

  const auto topo = buildTopology(parts);
  if (auto [order, complete] = kahn(topo); !complete) {
    auto cycle = findCycle(topo, order);
    report.issues.push_back(
        {Severity::Error, "CycleDetected", "cycle through " + joinIds(cycle), joinIds(cycle), cycle});
  }

  for (const auto& [id, spec] : parts.nodes) {
    if (!spec.pe) continue;
    for (const auto& p : spec.pe->inputPorts) {
      if (!connectedInputs.count({id, p})) {
        report.issues.push_back({Severity::Warning, "UNCONNECTED_INPUT", "input receives no stream", id + "." + p, {}});
      }
    }
    for (const auto& p : spec.pe->outputPorts) {
      if (!connectedOutputs.count({id, p})) {
        report.issues.push_back({Severity::Warning, "UNCONSUMED_OUTPUT", "output is not connected", id + "." + p, {}});
      }
    }
  }

  report.ok = std::none_of(report.issues.begin(), report.issues.end(),
                           [](const Issue& i) { return i.severity == Severity::Error; });
  return report;
}

WorkflowGraph buildGraph(GraphParts parts) {
  auto report = validateGraph(parts);
  if (!report.ok) {
    const auto first = report.errors().front();
    throw GraphError(first.code, first.code + ": " + first.message + " (" + first.location + ")", std::move(report));
  }
  return WorkflowGraph(std::move(parts));
}

std::vector<std::string> topologicalOrder(const GraphParts& parts) {
  const auto topo = buildTopology(parts);
  auto [order, complete] = kahn(topo);
  if (!complete) {
    auto cycle = findCycle(topo, order);
    throw Error("CycleDetected", "cycle through " + joinIds(cycle));
  }
  std::vector<std::string> ids;
  ids.reserve(order.size());
  for (auto i : order) ids.push_back(topo.ids[i]);
  return ids;
}

namespace {

std::map<std::string, PortRef> exposeNames(const std::vector<PortRef>& ports) {
  std::set<std::string> names;
  bool clash = false;
  for (const auto& p : ports) clash |= !names.insert(p.port).second;
  std::map<std::string, PortRef> out;
  for (const auto& p : ports) out.emplace(clash ? p.node + "_" + p.port : p.port, p);
  return out;
}

} // namespace

PEDescriptorPtr wrapSubgraph(const GraphParts& inner, const std::vector<PortRef>& exposedInputs,
                             const std::vector<PortRef>& exposedOutputs, std::string name, std::string version) {
  GraphParts body = inner;
  body.sourceFeeds.clear();
  auto report = validateGraph(body);
  if (!report.ok) {
    throw Error("InnerGraphInvalid", "cannot wrap invalid graph: " + report.errors().front().message);
  }
  for (const auto& p : exposedInputs) {
    auto it = body.nodes.find(p.node);
    if (it == body.nodes.end() || !it->second.pe->hasInput(p.port)) {
      throw Error("PortNotExposed", "no inner input port " + p.str());
    }
    for (const auto& e : body.edges) {
      if (e.to.node == p.node && e.to.port == p.port) throw Error("PortNotExposed", p.str() + " is connected internally");
    }
  }
  for (const auto& p : exposedOutputs) {
    auto it = body.nodes.find(p.node);
    if (it == body.nodes.end() || !it->second.pe->hasOutput(p.port)) {
      throw Error("PortNotExposed", "no inner output port " + p.str());
    }
    for (const auto& e : body.edges) {
      if (e.from.node == p.node && e.from.port == p.port) throw Error("PortNotExposed", p.str() + " is connected internally");
    }
  }

  bool stateful = false;
  for (const auto& [_, spec] : body.nodes) stateful |= spec.pe->stateful;

  auto inputs = exposeNames(exposedInputs);
  auto outputs = exposeNames(exposedOutputs);
  auto d = std::make_shared<PEDescriptor>();
  d->name = std::move(name);
  d->version = std::move(version);
  d->kind = PEKind::Composite;
  d->stateful = stateful;
  for (const auto& p : exposedInputs)
    for (const auto& [n, ref] : inputs)
      if (ref == p) d->inputPorts.push_back(n);
  for (const auto& p : exposedOutputs)
    for (const auto& [n, ref] : outputs)
      if (ref == p) d->outputPorts.push_back(n);
  for (auto& [_, ref] : inputs) ref.direction = PortDirection::Input;
  for (auto& [_, ref] : outputs) ref.direction = PortDirection::Output;
  d->composite = std::make_shared<CompositeBody>(CompositeBody{buildGraph(std::move(body)), std::move(inputs), std::move(outputs)});
  return d;
}

namespace {

using AliasMap = std::map<std::pair<std::string, std::string>, PortRef>;

PortRef resolveAlias(const AliasMap& aliases, PortRef ref) {
  for (auto it = aliases.find({ref.node, ref.port}); it != aliases.end(); it = aliases.find({ref.node, ref.port})) {
    ref = it->second;
  }
  return ref;
}

void flattenInto(const WorkflowGraph& g, const std::string& prefix, GraphParts& out, AliasMap& inAlias,
                 AliasMap& outAlias) {
  for (const auto& [id, spec] : g.nodes()) {
    const auto full = prefix + id;
    if (spec.pe->kind == PEKind::Atomic) {
      out.addNode(full, spec.pe, spec.params);
      continue;
    }
    const auto& body = *spec.pe->composite;
    flattenInto(body.graph, full + "/", out, inAlias, outAlias);
    for (const auto& [name, ref] : body.inputBindings) {
      inAlias[{full, name}] = resolveAlias(inAlias, PortRef::in(full + "/" + ref.node, ref.port));
    }
    for (const auto& [name, ref] : body.outputBindings) {
      outAlias[{full, name}] = resolveAlias(outAlias, PortRef::out(full + "/" + ref.node, ref.port));
    }
  }
  for (const auto& e : g.edges()) {
    out.edges.push_back({resolveAlias(outAlias, PortRef::out(prefix + e.from.node, e.from.port)),
                         resolveAlias(inAlias, PortRef::in(prefix + e.to.node, e.to.port)), e.bufferCapacity});
  }
}

} // namespace

WorkflowGraph flattenGraph(const WorkflowGraph& g) {
  const bool any = std::any_of(g.nodes().begin(), g.nodes().end(),
                               [](const auto& kv) { return kv.second.pe->kind == PEKind::Composite; });
  if (!any) return g;
  GraphParts out;
  AliasMap inAlias, outAlias;
  flattenInto(g, "", out, inAlias, outAlias);
  for (const auto& [feed, targets] : g.sourceFeeds()) {
    for (const auto& t : targets) out.sourceFeeds[feed].push_back(resolveAlias(inAlias, PortRef::in(t.node, t.port)));
  }
  return buildGraph(std::move(out));
}

} // namespace verce::dataflow
