#pragma once

#include <cstddef>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "verce/dataflow/descriptor.hpp"

namespace verce::dataflow {

inline constexpr std::size_t kDefaultBufferCapacity = 1024;

enum class PortDirection { Input, Output };

struct PortRef {
  std::string node;
  std::string port;
  PortDirection direction = PortDirection::Output;

  static PortRef out(std::string node, std::string port) { return {std::move(node), std::move(port), PortDirection::Output}; }
  static PortRef in(std::string node, std::string port) { return {std::move(node), std::move(port), PortDirection::Input}; }

  std::string str() const { return node + "." + port; }
  friend bool operator==(const PortRef& a, const PortRef& b) { return a.node == b.node && a.port == b.port && a.direction == b.direction; }
  friend auto operator<=>(const PortRef& a, const PortRef& b) {
    if (auto c = a.node <=> b.node; c != 0) return c;
    if (auto c = a.port <=> b.port; c != 0) return c;
    return a.direction <=> b.direction;
  }
};

struct StreamConnection {
  PortRef from;
  PortRef to;
  std::size_t bufferCapacity = kDefaultBufferCapacity;
};

struct NodeSpec {
  PEDescriptorPtr pe;
  Json params = Json::object();
};

using FeedMap = std::map<std::string, std::vector<PortRef>>;

/// Unvalidated graph contents, as assembled by callers.
struct GraphParts {
  std::map<std::string, NodeSpec> nodes;
  std::vector<StreamConnection> edges;
  FeedMap sourceFeeds;

  void addNode(std::string id, PEDescriptorPtr pe, Json params = Json::object()) {
    nodes.insert_or_assign(std::move(id), NodeSpec{std::move(pe), std::move(params)});
  }
  void connect(std::string fromNode, std::string fromPort, std::string toNode, std::string toPort,
               std::size_t capacity = kDefaultBufferCapacity) {
    edges.push_back({PortRef::out(std::move(fromNode), std::move(fromPort)),
                     PortRef::in(std::move(toNode), std::move(toPort)), capacity});
  }
  void feed(const std::string& name, std::string node, std::string port) {
    sourceFeeds[name].push_back(PortRef::in(std::move(node), std::move(port)));
  }
};

enum class Severity { Error, Warning };

struct Issue {
  Severity severity = Severity::Error;
  std::string code;
  std::string message;
  std::string location;
  std::vector<std::string> nodes; ///< cycle members for CycleDetected

  friend bool operator==(const Issue&, const Issue&) = default;
};

struct ValidationReport {
  bool ok = true;
  std::vector<Issue> issues;

  std::vector<Issue> errors() const;
  std::vector<Issue> warnings() const;
  Json toJson() const;
  friend bool operator==(const ValidationReport&, const ValidationReport&) = default;
};

/// Raised by buildGraph; carries the failing report.
class GraphError : public Error {
public:
  GraphError(std::string code, const std::string& message, ValidationReport report)
      : Error(std::move(code), message), report_(std::move(report)) {}
  const ValidationReport& report() const noexcept { return report_; }

private:
  ValidationReport report_;
};

/// A validated, immutable workflow graph. Only buildGraph creates one.
class WorkflowGraph {
public:
  const std::map<std::string, NodeSpec>& nodes() const noexcept { return parts_.nodes; }
  const std::vector<StreamConnection>& edges() const noexcept { return parts_.edges; }
  const FeedMap& sourceFeeds() const noexcept { return parts_.sourceFeeds; }
  const GraphParts& parts() const noexcept { return parts_; }
  std::size_t size() const noexcept { return parts_.nodes.size(); }

  const NodeSpec& node(const std::string& id) const;
  /// Output ports with no outgoing connection; their units are the run's results.
  std::vector<PortRef> unconsumedOutputs() const;

private:
  friend WorkflowGraph buildGraph(GraphParts parts);
  explicit WorkflowGraph(GraphParts parts) : parts_(std::move(parts)) {}
  GraphParts parts_;
};

/// Validates and freezes a graph. Throws GraphError (DanglingPort,
/// CycleDetected, ParameterMismatch) with the full report.
WorkflowGraph buildGraph(GraphParts parts);

ValidationReport validateGraph(const GraphParts& parts);
inline ValidationReport validateGraph(const WorkflowGraph& g) { return validateGraph(g.parts()); }

/// Deterministic topological order, ties broken by lexicographic instance id.
std::vector<std::string> topologicalOrder(const GraphParts& parts);
inline std::vector<std::string> topologicalOrder(const WorkflowGraph& g) { return topologicalOrder(g.parts()); }

/// Packages an inner graph as a composite PE whose ports are the given
/// unconnected inner ports. An exposed port is named after its inner port
/// unless two exposed ports share a name, in which case `node_port` is used.
PEDescriptorPtr wrapSubgraph(const GraphParts& inner, const std::vector<PortRef>& exposedInputs,
                             const std::vector<PortRef>& exposedOutputs, std::string name,
                             std::string version = "1");

struct CompositeBody {
  WorkflowGraph graph;
  std::map<std::string, PortRef> inputBindings;  ///< exposed name -> inner input
  std::map<std::string, PortRef> outputBindings; ///< exposed name -> inner output
};

/// Inlines every composite node (recursively). Inner instance ids become
/// `outer/inner`.
WorkflowGraph flattenGraph(const WorkflowGraph& g);

} // namespace verce::dataflow
