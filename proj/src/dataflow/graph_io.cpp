#include "verce/dataflow/graph_io.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "verce/hash.hpp"

namespace verce::dataflow {

namespace {

Json portToJson(const PortRef& p) { return {{"node", p.node}, {"port", p.port}}; }

PortRef portFromJson(const Json& j, PortDirection dir) {
  if (!j.is_object() || !j.contains("node") || !j.contains("port")) {
    throw Error("MalformedDocument", "port reference must be {node, port}: " + j.dump());
  }
  return {j.at("node").get<std::string>(), j.at("port").get<std::string>(), dir};
}

Json nodeToJson(const NodeSpec& spec) {
  const auto& d = *spec.pe;
  if (d.kind == PEKind::Atomic) return {{"pe", d.ref()}, {"params", spec.params.is_null() ? Json::object() : spec.params}};
  const auto& body = *d.composite;
  Json inputs = Json::object(), outputs = Json::object();
  for (const auto& [name, ref] : body.inputBindings) inputs[name] = portToJson(ref);
  for (const auto& [name, ref] : body.outputBindings) outputs[name] = portToJson(ref);
  return {{"composite",
           {{"name", d.name},
            {"version", d.version},
            {"graph", graphToJson(body.graph)},
            {"inputPorts", d.inputPorts},
            {"outputPorts", d.outputPorts},
            {"inputs", std::move(inputs)},
            {"outputs", std::move(outputs)}}},
          {"params", Json::object()}};
}

PEDescriptorPtr compositeFromJson(const Json& c, const PeResolver& resolve) {
  auto inner = graphPartsFromJson(c.at("graph"), resolve);
  std::vector<PortRef> ins, outs;
  for (const auto& name : c.at("inputPorts")) ins.push_back(portFromJson(c.at("inputs").at(name.get<std::string>()), PortDirection::Input));
  for (const auto& name : c.at("outputPorts")) outs.push_back(portFromJson(c.at("outputs").at(name.get<std::string>()), PortDirection::Output));
  return wrapSubgraph(inner, ins, outs, c.at("name").get<std::string>(), c.value("version", "1"));
}

} // namespace

Json graphToJson(const GraphParts& parts) {
  Json nodes = Json::object();
  for (const auto& [id, spec] : parts.nodes) nodes[id] = nodeToJson(spec);

  std::vector<const StreamConnection*> sorted;
  for (const auto& e : parts.edges) sorted.push_back(&e);
  std::stable_sort(sorted.begin(), sorted.end(), [](const auto* a, const auto* b) {
    return std::tie(a->from, a->to, a->bufferCapacity) < std::tie(b->from, b->to, b->bufferCapacity);
  });
  Json edges = Json::array();
  for (const auto* e : sorted) {
    edges.push_back({{"from", portToJson(e->from)}, {"to", portToJson(e->to)}, {"bufferCapacity", e->bufferCapacity}});
  }

  Json feeds = Json::object();
  for (const auto& [name, targets] : parts.sourceFeeds) {
    auto sortedTargets = targets;
    std::sort(sortedTargets.begin(), sortedTargets.end());
    Json list = Json::array();
    for (const auto& t : sortedTargets) list.push_back(portToJson(t));
    feeds[name] = std::move(list);
  }
  return {{"format", kGraphFormat}, {"nodes", std::move(nodes)}, {"edges", std::move(edges)}, {"sourceFeeds", std::move(feeds)}};
}

GraphParts graphPartsFromJson(const Json& doc, const PeResolver& resolve) {
  if (!doc.is_object() || doc.value("format", "") != kGraphFormat) {
    throw Error("MalformedDocument", std::string("graph document must declare format ") + kGraphFormat);
  }
  GraphParts parts;
  for (const auto& [id, n] : doc.at("nodes").items()) {
    if (n.contains("composite")) {
      parts.addNode(id, compositeFromJson(n.at("composite"), resolve));
      continue;
    }
    const auto ref = n.at("pe").get<std::string>();
    auto pe = resolve(ref);
    if (!pe) throw Error("NotFound", "unknown PE '" + ref + "' for node '" + id + "'");
    parts.addNode(id, std::move(pe), n.value("params", Json::object()));
  }
  const auto edges = doc.value("edges", Json::array());
  for (const auto& e : edges) {
    parts.edges.push_back({portFromJson(e.at("from"), PortDirection::Output), portFromJson(e.at("to"), PortDirection::Input),
                           e.value("bufferCapacity", kDefaultBufferCapacity)});
  }
  const auto feeds = doc.value("sourceFeeds", Json::object());
  for (const auto& [name, targets] : feeds.items()) {
    for (const auto& t : targets) parts.sourceFeeds[name].push_back(portFromJson(t, PortDirection::Input));
  }
  return parts;
}

WorkflowGraph graphFromJson(const Json& doc, const PeResolver& resolve) {
  return buildGraph(graphPartsFromJson(doc, resolve));
}

std::string canonicalGraphText(const WorkflowGraph& g) { return canonicalDump(graphToJson(g)); }

std::string graphContentHash(const WorkflowGraph& g) { return sha256Hex(canonicalGraphText(g)); }

WorkflowGraph loadGraphFile(const std::filesystem::path& path, const PeResolver& resolve) {
  std::ifstream in(path);
  if (!in) throw Error("PathUnreadable", "cannot read " + path.string());
  Json doc;
  try {
    doc = Json::parse(in);
  } catch (const Json::exception& e) {
    throw Error("MalformedDocument", path.string() + ": " + e.what());
  }
  return graphFromJson(doc, resolve);
}

void saveGraphFile(const std::filesystem::path& path, const WorkflowGraph& g) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("PathUnwritable", "cannot write " + path.string());
  out << canonicalGraphText(g);
}

Json descriptorToJson(const PEDescriptor& d) {
  return {{"name", d.name},
          {"version", d.version},
          {"kind", d.kind == PEKind::Atomic ? "atomic" : "composite"},
          {"inputs", d.inputPorts},
          {"outputs", d.outputPorts},
          {"stateful", d.stateful},
          {"parameters", schemaToJson(d.parameterSchema)},
          {"impl", d.ref()}};
}

} // namespace verce::dataflow
