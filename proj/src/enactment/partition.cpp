#include "verce/enactment/plan.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>

namespace verce::enactment {

namespace {

constexpr double kEps = 1e-9;
constexpr int kClusterSweep = 8;

double weightOf(const std::map<std::string, double>& w, const std::string& id) {
  auto it = w.find(id);
  if (it == w.end()) return 1.0;
  if (!(it->second >= 0.0)) throw Error("InvalidPlan", "node weight for " + id + " must be non-negative");
  return it->second;
}

/// Dense view of the graph: node ids in lexicographic order, connection
/// endpoints as indices.
struct Dense {
  std::vector<std::string> ids;
  std::map<std::string, int> index;
  std::vector<double> weight;
  std::vector<std::pair<int, int>> edges;
  std::vector<std::vector<int>> adj; // neighbour per connection, both directions

  Dense(const dataflow::GraphParts& g, const std::map<std::string, double>& w) {
    for (const auto& [id, _] : g.nodes) {
      index[id] = static_cast<int>(ids.size());
      ids.push_back(id);
      weight.push_back(weightOf(w, id));
    }
    adj.resize(ids.size());
    for (const auto& e : g.edges) {
      auto a = index.find(e.from.node), b = index.find(e.to.node);
      if (a == index.end() || b == index.end()) throw Error("InvalidPlan", "connection names an unknown node");
      edges.emplace_back(a->second, b->second);
      adj[a->second].push_back(b->second);
      adj[b->second].push_back(a->second);
    }
  }
};

int connTo(const Dense& d, const std::vector<int>& part, int v, int p) {
  int c = 0;
  for (int u : d.adj[v]) c += part[u] == p;
  return c;
}

int connBetween(const Dense& d, int u, int v) {
  return static_cast<int>(std::count(d.adj[u].begin(), d.adj[u].end(), v));
}

/// Contracts connections while the merged cluster stays within `clusterCap`,
/// then packs clusters onto workers under `cap`.
std::vector<int> contractAndPack(const Dense& d, int workers, double cap, double clusterCap) {
  const int n = static_cast<int>(d.ids.size());
  std::vector<int> clusterOf(n);
  std::iota(clusterOf.begin(), clusterOf.end(), 0);
  std::vector<std::vector<int>> members(n);
  std::vector<double> load(d.weight);
  for (int i = 0; i < n; ++i) members[i] = {i};

  // A cluster's representative is its smallest node index, which is also
  // its index in `members` because merges keep the smaller index.
  for (;;) {
    std::map<std::pair<int, int>, int> between;
    for (const auto& [a, b] : d.edges) {
      int ca = clusterOf[a], cb = clusterOf[b];
      if (ca == cb) continue;
      if (ca > cb) std::swap(ca, cb);
      ++between[{ca, cb}];
    }
    std::pair<int, int> best{-1, -1};
    int bestW = 0;
    for (const auto& [pair, w] : between) {
      if (load[pair.first] + load[pair.second] > clusterCap + kEps) continue;
      if (w > bestW) {
        bestW = w;
        best = pair;
      }
    }
    if (bestW == 0) break;
    const auto [keep, drop] = best;
    for (int v : members[drop]) clusterOf[v] = keep;
    members[keep].insert(members[keep].end(), members[drop].begin(), members[drop].end());
    members[drop].clear();
    load[keep] += load[drop];
    load[drop] = 0.0;
  }

  std::vector<int> clusters;
  for (int c = 0; c < n; ++c)
    if (!members[c].empty()) clusters.push_back(c);
  std::stable_sort(clusters.begin(), clusters.end(), [&](int a, int b) { return load[a] > load[b] + kEps; });

  std::vector<double> workerLoad(workers, 0.0);
  std::vector<int> part(n, -1);
  auto lowestFitting = [&](double w) {
    int best = -1;
    for (int k = 0; k < workers; ++k) {
      if (workerLoad[k] + w > cap + kEps) continue;
      if (best < 0 || workerLoad[k] < workerLoad[best] - kEps) best = k;
    }
    return best;
  };
  for (int c : clusters) {
    if (int k = lowestFitting(load[c]); k >= 0) {
      for (int v : members[c]) part[v] = k;
      workerLoad[k] += load[c];
      continue;
    }
    auto nodes = members[c];
    std::sort(nodes.begin(), nodes.end(), [&](int a, int b) {
      return d.weight[a] != d.weight[b] ? d.weight[a] > d.weight[b] : a < b;
    });
    for (int v : nodes) {
      const int k = lowestFitting(d.weight[v]);
      if (k < 0) throw Error("InfeasibleLoad", "cannot place " + d.ids[v] + " under the per-worker load cap");
      part[v] = k;
      workerLoad[k] += d.weight[v];
    }
  }
  return part;
}

void refine(const Dense& d, std::vector<int>& part, int workers, double cap) {
  const int n = static_cast<int>(d.ids.size());
  std::vector<double> load(workers, 0.0);
  for (int v = 0; v < n; ++v) load[part[v]] += d.weight[v];

  for (int round = 0; round < 64; ++round) {
    bool improved = false;
    for (int v = 0; v < n; ++v) {
      const int from = part[v];
      const int stay = connTo(d, part, v, from);
      int bestGain = 0, bestTo = -1;
      for (int to = 0; to < workers; ++to) {
        if (to == from || load[to] + d.weight[v] > cap + kEps) continue;
        const int gain = connTo(d, part, v, to) - stay;
        if (gain > bestGain) {
          bestGain = gain;
          bestTo = to;
        }
      }
      if (bestTo >= 0) {
        load[from] -= d.weight[v];
        load[bestTo] += d.weight[v];
        part[v] = bestTo;
        improved = true;
      }
    }
    if (improved) continue;

    int bestGain = 0, bu = -1, bv = -1;
    for (int u = 0; u < n; ++u) {
      for (int v = u + 1; v < n; ++v) {
        const int pu = part[u], pv = part[v];
        if (pu == pv) continue;
        if (load[pv] - d.weight[v] + d.weight[u] > cap + kEps) continue;
        if (load[pu] - d.weight[u] + d.weight[v] > cap + kEps) continue;
        const int gain = connTo(d, part, u, pv) - connTo(d, part, u, pu) + connTo(d, part, v, pu) -
                         connTo(d, part, v, pv) - 2 * connBetween(d, u, v);
        if (gain > bestGain) {
          bestGain = gain;
          bu = u;
          bv = v;
        }
      }
    }
    if (bu < 0) break;
    const int pu = part[bu], pv = part[bv];
    load[pu] += d.weight[bv] - d.weight[bu];
    load[pv] += d.weight[bu] - d.weight[bv];
    std::swap(part[bu], part[bv]);
  }
}

int cutOf(const Dense& d, const std::vector<int>& part) {
  int cut = 0;
  for (const auto& [a, b] : d.edges) cut += part[a] != part[b];
  return cut;
}

/// One Fiduccia-Mattheyses style pass: move the best unlocked node even when
/// the gain is negative, then keep the best prefix of the move sequence.
bool moveSequencePass(const Dense& d, std::vector<int>& part, std::vector<double>& load, int workers, double cap) {
  const int n = static_cast<int>(d.ids.size());
  std::vector<bool> locked(n, false);
  std::vector<std::pair<int, int>> history; // (node, previous worker)
  int cur = 0, best = 0;
  std::size_t bestLen = 0;
  for (int step = 0; step < n; ++step) {
    int bv = -1, bt = -1, bg = 0;
    for (int v = 0; v < n; ++v) {
      if (locked[v]) continue;
      const int stay = connTo(d, part, v, part[v]);
      for (int to = 0; to < workers; ++to) {
        if (to == part[v] || load[to] + d.weight[v] > cap + kEps) continue;
        const int gain = connTo(d, part, v, to) - stay;
        if (bv < 0 || gain > bg) {
          bv = v;
          bt = to;
          bg = gain;
        }
      }
    }
    if (bv < 0) break;
    history.emplace_back(bv, part[bv]);
    load[part[bv]] -= d.weight[bv];
    load[bt] += d.weight[bv];
    part[bv] = bt;
    locked[bv] = true;
    cur -= bg;
    if (cur < best) {
      best = cur;
      bestLen = history.size();
    }
  }
  while (history.size() > bestLen) {
    auto [v, prev] = history.back();
    history.pop_back();
    load[part[v]] -= d.weight[v];
    load[prev] += d.weight[v];
    part[v] = prev;
  }
  return bestLen > 0;
}

/// Kernighan-Lin pass over pairwise swaps, for caps too tight to move a
/// single node.
bool swapSequencePass(const Dense& d, std::vector<int>& part, std::vector<double>& load, double cap) {
  const int n = static_cast<int>(d.ids.size());
  std::vector<bool> locked(n, false);
  std::vector<std::pair<int, int>> history;
  int cur = 0, best = 0;
  std::size_t bestLen = 0;
  for (int step = 0; step < n / 2; ++step) {
    int bu = -1, bv = -1, bg = 0;
    for (int u = 0; u < n; ++u) {
      if (locked[u]) continue;
      for (int v = u + 1; v < n; ++v) {
        const int pu = part[u], pv = part[v];
        if (locked[v] || pu == pv) continue;
        if (load[pv] - d.weight[v] + d.weight[u] > cap + kEps) continue;
        if (load[pu] - d.weight[u] + d.weight[v] > cap + kEps) continue;
        const int gain = connTo(d, part, u, pv) - connTo(d, part, u, pu) + connTo(d, part, v, pu) -
                         connTo(d, part, v, pv) - 2 * connBetween(d, u, v);
        if (bu < 0 || gain > bg) {
          bu = u;
          bv = v;
          bg = gain;
        }
      }
    }
    if (bu < 0) break;
    const int pu = part[bu], pv = part[bv];
    load[pu] += d.weight[bv] - d.weight[bu];
    load[pv] += d.weight[bu] - d.weight[bv];
    std::swap(part[bu], part[bv]);
    locked[bu] = locked[bv] = true;
    history.emplace_back(bu, bv);
    cur -= bg;
    if (cur < best) {
      best = cur;
      bestLen = history.size();
    }
  }
  while (history.size() > bestLen) {
    auto [u, v] = history.back();
    history.pop_back();
    const int pu = part[u], pv = part[v];
    load[pu] += d.weight[v] - d.weight[u];
    load[pv] += d.weight[u] - d.weight[v];
    std::swap(part[u], part[v]);
  }
  return bestLen > 0;
}

// Swap sequences cost O(n^3) per pass; larger graphs keep the hill climb.
constexpr std::size_t kSequencePassLimit = 64;

void improve(const Dense& d, std::vector<int>& part, int workers, double cap) {
  refine(d, part, workers, cap);
  if (d.ids.size() > kSequencePassLimit) return;
  std::vector<double> load(workers, 0.0);
  for (std::size_t v = 0; v < d.ids.size(); ++v) load[part[v]] += d.weight[v];
  for (int round = 0; round < 16; ++round) {
    const bool moved = moveSequencePass(d, part, load, workers, cap);
    const bool swapped = swapSequencePass(d, part, load, cap);
    if (!moved && !swapped) break;
  }
}

} // namespace

Json ExecutionPlan::toJson() const {
  Json loads = Json::object();
  for (const auto& [w, l] : loadOf) loads[std::to_string(w)] = l;
  return {{"partitionOf", partitionOf}, {"workerCount", workerCount}, {"cutEdges", cutEdges}, {"loadOf", loads}};
}

ExecutionPlan ExecutionPlan::fromJson(const Json& j) {
  ExecutionPlan p;
  p.partitionOf = j.at("partitionOf").get<std::map<std::string, int>>();
  p.workerCount = j.at("workerCount").get<int>();
  p.cutEdges = j.value("cutEdges", 0);
  const Json loads = j.value("loadOf", Json::object());
  for (const auto& [k, v] : loads.items()) p.loadOf[std::stoi(k)] = v.get<double>();
  return p;
}

int countCutEdges(const dataflow::GraphParts& g, const std::map<std::string, int>& partitionOf) {
  int cut = 0;
  for (const auto& e : g.edges) cut += partitionOf.at(e.from.node) != partitionOf.at(e.to.node);
  return cut;
}

std::map<int, double> computeLoads(const dataflow::GraphParts& g, const std::map<std::string, int>& partitionOf,
                                   int workerCount, const std::map<std::string, double>& nodeWeights) {
  std::map<int, double> loads;
  for (int w = 0; w < workerCount; ++w) loads[w] = 0.0;
  for (const auto& [id, _] : g.nodes) loads[partitionOf.at(id)] += weightOf(nodeWeights, id);
  return loads;
}

ExecutionPlan makePlan(const dataflow::GraphParts& g, std::map<std::string, int> partitionOf, int workerCount,
                       const std::map<std::string, double>& nodeWeights) {
  if (workerCount < 1) throw Error("InvalidPlan", "workerCount must be at least 1");
  for (const auto& [id, _] : g.nodes) {
    auto it = partitionOf.find(id);
    if (it == partitionOf.end()) throw Error("InvalidPlan", "node " + id + " is not assigned");
    if (it->second < 0 || it->second >= workerCount) throw Error("InvalidPlan", "node " + id + " has worker out of range");
  }
  for (const auto& [id, _] : partitionOf)
    if (!g.nodes.count(id)) throw Error("InvalidPlan", "plan names unknown node " + id);
  ExecutionPlan p;
  p.partitionOf = std::move(partitionOf);
  p.workerCount = workerCount;
  p.cutEdges = countCutEdges(g, p.partitionOf);
  p.loadOf = computeLoads(g, p.partitionOf, workerCount, nodeWeights);
  return p;
}

ExecutionPlan roundRobinPlan(const dataflow::GraphParts& g, int workerCount, const std::map<std::string, double>& nodeWeights) {
  if (workerCount < 1) throw Error("InvalidPlan", "workerCount must be at least 1");
  std::map<std::string, int> part;
  int i = 0;
  for (const auto& [id, _] : g.nodes) part[id] = i++ % workerCount;
  return makePlan(g, std::move(part), workerCount, nodeWeights);
}

ExecutionPlan partitionGraph(const dataflow::GraphParts& g, int workerCount, const std::map<std::string, double>& nodeWeights,
                             double maxLoadPerWorker) {
  if (g.nodes.empty()) throw Error("EmptyGraph", "graph has no nodes");
  if (workerCount < 1) throw Error("InvalidPlan", "workerCount must be at least 1");
  const Dense d(g, nodeWeights);
  const double total = std::accumulate(d.weight.begin(), d.weight.end(), 0.0);
  const double cap = maxLoadPerWorker > 0.0 ? maxLoadPerWorker : std::ceil(total / workerCount - kEps);
  if (total > cap * workerCount + kEps) {
    throw Error("InfeasibleLoad", "total weight exceeds workerCount x maxLoadPerWorker");
  }
  for (std::size_t v = 0; v < d.ids.size(); ++v) {
    if (d.weight[v] > cap + kEps) throw Error("InfeasibleLoad", "node " + d.ids[v] + " alone exceeds the load cap");
  }

  // Coarse contraction can leave clusters that pack badly, so the cluster
  // size limit is swept downwards and the lowest cut wins (earliest on ties).
  std::vector<int> part;
  int bestCut = -1;
  std::optional<Error> packFailure;
  for (int step = 0; step < kClusterSweep; ++step) {
    const double clusterCap = cap * (kClusterSweep - step) / kClusterSweep;
    std::vector<int> candidate;
    try {
      candidate = contractAndPack(d, workerCount, cap, clusterCap);
    } catch (const Error& e) {
      if (!packFailure) packFailure = e;
      continue;
    }
    improve(d, candidate, workerCount, cap);
    const int cut = cutOf(d, candidate);
    if (bestCut < 0 || cut < bestCut) {
      bestCut = cut;
      part = std::move(candidate);
    }
  }
  if (bestCut < 0) throw *packFailure;
  std::map<std::string, int> assignment;
  for (std::size_t v = 0; v < d.ids.size(); ++v) assignment[d.ids[v]] = part[v];
  auto plan = makePlan(g, std::move(assignment), workerCount, nodeWeights);

  auto rr = roundRobinPlan(g, workerCount, nodeWeights);
  const bool rrFeasible = std::all_of(rr.loadOf.begin(), rr.loadOf.end(), [&](const auto& kv) { return kv.second <= cap + kEps; });
  if (rrFeasible && rr.cutEdges < plan.cutEdges) return rr;
  return plan;
}

} // namespace verce::enactment
