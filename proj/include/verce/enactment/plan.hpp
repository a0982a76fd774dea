#pragma once

#include <map>
#include <string>

#include "verce/dataflow/graph.hpp"

namespace verce::enactment {

/// Assignment of PE instances to workers.
struct ExecutionPlan {
  std::map<std::string, int> partitionOf;
  int workerCount = 1;
  int cutEdges = 0;
  std::map<int, double> loadOf;

  Json toJson() const;
  static ExecutionPlan fromJson(const Json& j);
};

/// Connections whose endpoints sit on different workers, and per-worker
/// weight sums (every worker index appears, empty ones with 0).
int countCutEdges(const dataflow::GraphParts& g, const std::map<std::string, int>& partitionOf);
std::map<int, double> computeLoads(const dataflow::GraphParts& g, const std::map<std::string, int>& partitionOf,
                                   int workerCount, const std::map<std::string, double>& nodeWeights);

/// Fills cutEdges and loadOf from partitionOf. Throws InvalidPlan when a node
/// is missing or a worker index is out of range.
ExecutionPlan makePlan(const dataflow::GraphParts& g, std::map<std::string, int> partitionOf, int workerCount,
                       const std::map<std::string, double>& nodeWeights = {});

/// Node i (in id order) on worker i mod workerCount.
ExecutionPlan roundRobinPlan(const dataflow::GraphParts& g, int workerCount,
                             const std::map<std::string, double>& nodeWeights = {});

/// Greedy edge contraction under a cluster size limit, largest-first packing,
/// then node moves and pairwise swaps that lower the cut. The limit is swept
/// from the load cap downwards and the lowest resulting cut is kept. The round-robin
/// plan is returned instead when it is feasible and cuts fewer connections.
/// Missing weights default to 1. maxLoadPerWorker <= 0 means
/// ceil(total weight / workerCount).
/// Errors: EmptyGraph, InfeasibleLoad, InvalidPlan (workerCount < 1).
ExecutionPlan partitionGraph(const dataflow::GraphParts& g, int workerCount,
                             const std::map<std::string, double>& nodeWeights = {}, double maxLoadPerWorker = 0.0);

} // namespace verce::enactment
