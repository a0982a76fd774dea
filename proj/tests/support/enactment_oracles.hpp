#pragma once

// Generators and reference answers shared by the enactment unit tests and the
// acceptance suite.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "verce/dataflow/graph.hpp"
#include "verce/dataflow/library.hpp"
#include "verce/enactment/run.hpp"

namespace verce::testing {

using dataflow::DataUnit;
using dataflow::Emitter;
using dataflow::GraphParts;
using dataflow::Payload;
using dataflow::PEDescriptorPtr;

inline std::string nodeName(int i) {
  std::string s = "n";
  if (i < 10) s += '0';
  return s + std::to_string(i);
}

// ---- partitioning -------------------------------------------------------

/// Placeholder PE for graphs that are only partitioned, never run.
inline PEDescriptorPtr shapeOnlyPE() {
  static const auto pe = dataflow::makeAtomicPE("shape", "1", {"i"}, {"o"}, [](const Json&) {
    return dataflow::makeFunctionPE([](const std::string&, const DataUnit&, Emitter&) {});
  });
  return pe;
}

inline GraphParts shapeGraph(int n, const std::vector<std::pair<int, int>>& edges) {
  GraphParts g;
  for (int i = 0; i < n; ++i) g.addNode(nodeName(i), shapeOnlyPE());
  for (auto [a, b] : edges) g.connect(nodeName(a), "o", nodeName(b), "i");
  return g;
}

inline GraphParts chainShape(int n) {
  std::vector<std::pair<int, int>> e;
  for (int i = 0; i + 1 < n; ++i) e.emplace_back(i, i + 1);
  return shapeGraph(n, e);
}

inline GraphParts starShape(int n) {
  std::vector<std::pair<int, int>> e;
  for (int i = 1; i < n; ++i) e.emplace_back(0, i);
  return shapeGraph(n, e);
}

/// Connected DAG: a random spanning tree over 0..n-1 (parents point forward)
/// plus each remaining forward pair with probability `extra`.
inline GraphParts randomConnectedDag(int n, std::uint32_t seed, double extra) {
  std::mt19937 rng(seed);
  std::vector<std::pair<int, int>> e;
  std::vector<std::vector<bool>> has(n, std::vector<bool>(n, false));
  for (int i = 1; i < n; ++i) {
    int p = std::uniform_int_distribution<int>(0, i - 1)(rng);
    e.emplace_back(p, i);
    has[p][i] = true;
  }
  std::bernoulli_distribution coin(extra);
  for (int a = 0; a < n; ++a)
    for (int b = a + 1; b < n; ++b)
      if (!has[a][b] && coin(rng)) e.emplace_back(a, b);
  return shapeGraph(n, e);
}

struct ShapeCase {
  std::string label;
  GraphParts graph;
  bool chainOrStar = false;
};

/// The fixed generator set: chains, stars and seeded random connected DAGs
/// with 2..8 nodes.
inline std::vector<ShapeCase> partitionGeneratorSet() {
  std::vector<ShapeCase> out;
  for (int n = 2; n <= 8; ++n) {
    out.push_back({"chain" + std::to_string(n), chainShape(n), true});
    out.push_back({"star" + std::to_string(n), starShape(n), true});
    for (std::uint32_t s = 0; s < 12; ++s) {
      const double extra = (s % 3) * 0.2;
      out.push_back({"dag" + std::to_string(n) + "_" + std::to_string(s), randomConnectedDag(n, 1000 * n + s, extra), false});
    }
  }
  return out;
}

/// Minimum cut over every assignment of unit-weight nodes to `workers` with
/// at most `cap` nodes per worker. Returns -1 when nothing is feasible.
inline int exhaustiveMinCut(const GraphParts& g, int workers, int cap) {
  std::vector<std::string> ids;
  for (const auto& [id, _] : g.nodes) ids.push_back(id);
  const int n = static_cast<int>(ids.size());
  std::map<std::string, int> idx;
  for (int i = 0; i < n; ++i) idx[ids[i]] = i;
  std::vector<std::pair<int, int>> edges;
  for (const auto& e : g.edges) edges.emplace_back(idx[e.from.node], idx[e.to.node]);

  std::vector<int> part(n, 0);
  int best = -1;
  long long total = 1;
  for (int i = 0; i < n; ++i) total *= workers;
  for (long long code = 0; code < total; ++code) {
    long long c = code;
    std::vector<int> load(workers, 0);
    bool ok = true;
    for (int i = 0; i < n; ++i) {
      part[i] = static_cast<int>(c % workers);
      c /= workers;
      if (++load[part[i]] > cap) ok = false;
    }
    if (!ok) continue;
    int cut = 0;
    for (auto [a, b] : edges) cut += part[a] != part[b];
    if (best < 0 || cut < best) best = cut;
  }
  return best;
}

// ---- randomized runnable graphs -----------------------------------------

/// Sums consecutive pairs; a trailing odd unit is emitted alone at finish.
class PairSum final : public dataflow::ProcessingElement {
public:
  void process(const std::string&, const DataUnit& u, Emitter& out) override {
    const double v = scalarOf(u.payload);
    if (pending_) {
      out.emit("out", *pending_ + v);
      pending_.reset();
    } else {
      pending_ = v;
    }
  }
  void finish(Emitter& out) override {
    if (pending_) out.emit("out", *pending_);
  }

  static double scalarOf(const Payload& p) {
    if (auto d = std::get_if<double>(&p)) return *d;
    if (auto a = std::get_if<dataflow::Array>(&p)) {
      double s = 0.0;
      for (double x : *a) s += x;
      return s;
    }
    return 0.0;
  }

private:
  std::optional<double> pending_;
};

inline const dataflow::PeLibrary& randomGraphPEs() {
  static const dataflow::PeLibrary lib = [] {
    dataflow::PeLibrary l;
    dataflow::addGenericPEs(l);
    l.add(dataflow::makeAtomicPE("pair_sum", "1", {"in"}, {"out"}, [](const Json&) { return std::make_unique<PairSum>(); },
                                 {}, true));
    // Routes each unit by the parity of its position on the incoming stream.
    l.add(dataflow::makeAtomicPE("split_parity", "1", {"in"}, {"even", "odd"}, [](const Json&) {
      return dataflow::makeFunctionPE([](const std::string&, const DataUnit& u, Emitter& out) {
        out.emit(u.seq % 2 == 0 ? "even" : "odd", u.payload, u.metadata);
      });
    }));
    // Emits each array element as its own scalar unit.
    l.add(dataflow::makeAtomicPE("explode", "1", {"in"}, {"out"}, [](const Json&) {
      return dataflow::makeFunctionPE([](const std::string&, const DataUnit& u, Emitter& out) {
        if (auto a = std::get_if<dataflow::Array>(&u.payload)) {
          for (double x : *a) out.emit("out", x);
        } else {
          out.emit("out", u.payload);
        }
      });
    }));
    return l;
  }();
  return lib;
}

struct RandomRunCase {
  GraphParts parts;
  enactment::InputFeeds feeds;
  std::size_t unitCount = 0;
};

/// Merge-free random graph: every node has at most one incoming connection,
/// roots read from their own feed. Up to `maxNodes` PEs and `maxUnits` feed
/// units in total.
inline RandomRunCase randomMergeFreeCase(std::uint32_t seed, int maxNodes = 12, int maxUnits = 500) {
  std::mt19937 rng(seed);
  auto pick = [&](int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); };
  const auto& lib = randomGraphPEs();
  static const std::vector<std::string> kinds = {"identity", "scale", "offset", "accumulate", "pair_sum", "split_parity",
                                                 "explode", "identity", "scale", "offset"};
  RandomRunCase rc;
  const int n = pick(2, maxNodes);
  std::vector<std::pair<int, std::string>> outPorts; // (node, port) available as parents
  std::vector<int> roots;
  for (int i = 0; i < n; ++i) {
    const auto& kind = kinds[pick(0, static_cast<int>(kinds.size()) - 1)];
    Json params = Json::object();
    if (kind == "scale") params["factor"] = pick(-4, 4) * 0.5;
    if (kind == "offset") params["delta"] = pick(-10, 10) * 0.25;
    rc.parts.addNode(nodeName(i), lib.find(kind), params);
    if (i == 0 || outPorts.empty() || pick(0, 3) == 0) {
      roots.push_back(i);
    } else {
      const auto& [p, port] = outPorts[pick(0, static_cast<int>(outPorts.size()) - 1)];
      rc.parts.connect(nodeName(p), port, nodeName(i), "in", static_cast<std::size_t>(pick(1, 16)));
    }
    for (const auto& port : lib.find(kind)->outputPorts) outPorts.emplace_back(i, port);
  }
  const int total = pick(static_cast<int>(roots.size()), maxUnits);
  std::normal_distribution<double> gauss(0.0, 3.0);
  for (std::size_t r = 0; r < roots.size(); ++r) {
    const std::string feed = "f" + std::to_string(r);
    rc.parts.feed(feed, nodeName(roots[r]), "in");
    const int count = total / static_cast<int>(roots.size());
    auto& units = rc.feeds[feed];
    for (int k = 0; k < count; ++k) {
      Payload p;
      if (pick(0, 2) == 0) {
        dataflow::Array a(static_cast<std::size_t>(pick(1, 6)));
        for (auto& x : a) x = std::round(gauss(rng) * 64.0) / 64.0;
        p = std::move(a);
      } else {
        p = std::round(gauss(rng) * 64.0) / 64.0;
      }
      units.push_back({std::move(p), {{"k", k}}, {}, 0});
    }
    rc.unitCount += units.size();
  }
  return rc;
}

/// Output payload sequences per "node.port" key.
inline std::map<std::string, std::vector<Payload>> outputPayloads(const enactment::RunRecord& r) {
  std::map<std::string, std::vector<Payload>> out;
  for (const auto& [key, units] : r.outputs)
    for (const auto& u : units) out[key].push_back(u.payload);
  return out;
}

inline bool samePayloadSequences(const std::map<std::string, std::vector<Payload>>& a,
                                  const std::map<std::string, std::vector<Payload>>& b) {
  if (a.size() != b.size()) return false;
  for (const auto& [k, va] : a) {
    auto it = b.find(k);
    if (it == b.end() || it->second.size() != va.size()) return false;
    for (std::size_t i = 0; i < va.size(); ++i)
      if (!dataflow::samePayload(va[i], it->second[i])) return false;
  }
  return true;
}

} // namespace verce::testing
