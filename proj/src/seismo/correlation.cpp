#include "verce/seismo/correlation.hpp"

#include <cmath>

#include "verce/seismo/pes.hpp"

namespace verce::seismo {

namespace {

bool sameDt(double a, double b) { return std::fabs(a - b) <= 1e-9 * std::max(std::fabs(a), std::fabs(b)); }

} // namespace

CorrelationResult crossCorrelate(const Trace& a, const Trace& b, int maxLag) {
  a.validate();
  b.validate();
  if (maxLag < 0) throw Error("BadParams", "maxLagSamples must be non-negative");
  if (!sameDt(a.dt, b.dt)) throw Error("DtMismatch", "cannot correlate traces with dt " + std::to_string(a.dt) + " and " + std::to_string(b.dt));
  const auto na = static_cast<long long>(a.samples.size()), nb = static_cast<long long>(b.samples.size());
  if (na <= maxLag || nb <= maxLag) {
    throw Error("TooShort", "traces must be longer than maxLag (" + std::to_string(maxLag) + " samples)");
  }
  CorrelationResult r;
  r.pairA = a.id();
  r.pairB = b.id();
  r.dt = a.dt;
  r.lags = CorrelationResult::lagGrid(maxLag, a.dt);
  r.values.assign(static_cast<std::size_t>(2 * maxLag + 1), 0.0);
  for (long long l = -maxLag; l <= maxLag; ++l) {
    const long long t0 = std::max(0LL, -l), t1 = std::min(na, nb - l);
    double s = 0.0;
    for (long long t = t0; t < t1; ++t) s += a.samples[static_cast<std::size_t>(t)] * b.samples[static_cast<std::size_t>(t + l)];
    r.values[static_cast<std::size_t>(l + maxLag)] = s;
  }
  return r;
}

CorrelationResult stackCorrelations(const std::vector<CorrelationResult>& results) {
  if (results.empty()) throw Error("EmptyList", "nothing to stack");
  const auto& first = results.front();
  CorrelationResult out = first;
  out.windowCount = 0;
  std::fill(out.values.begin(), out.values.end(), 0.0);
  for (const auto& r : results) {
    if (r.pairA != first.pairA || r.pairB != first.pairB) {
      throw Error("MixedPairs", "cannot stack " + r.pairA + "/" + r.pairB + " with " + first.pairA + "/" + first.pairB);
    }
    if (r.values.size() != first.values.size() || r.lags != first.lags || !sameDt(r.dt, first.dt)) {
      throw Error("MixedLagGrids", "correlations to stack must share lags and dt");
    }
    for (std::size_t k = 0; k < out.values.size(); ++k) out.values[k] += r.values[k];
    out.windowCount += r.windowCount;
  }
  const double n = static_cast<double>(results.size());
  for (double& v : out.values) v /= n;
  return out;
}

std::vector<Trace> splitWindows(const Trace& t, double windowSeconds) {
  t.validate();
  if (!(windowSeconds > 0.0) || !std::isfinite(windowSeconds)) throw Error("BadParams", "windowSeconds must be positive");
  const auto w = static_cast<std::size_t>(std::llround(windowSeconds / t.dt));
  if (w == 0) throw Error("BadParams", "window shorter than one sample");
  if (t.samples.size() < w) throw Error("TooShort", "trace " + t.id() + " is shorter than one window");
  std::vector<Trace> out;
  for (std::size_t k = 0; (k + 1) * w <= t.samples.size(); ++k) {
    Trace win = t;
    win.samples.assign(t.samples.begin() + static_cast<std::ptrdiff_t>(k * w), t.samples.begin() + static_cast<std::ptrdiff_t>((k + 1) * w));
    win.startTime = t.startTime + static_cast<double>(k * w) * t.dt;
    out.push_back(std::move(win));
  }
  return out;
}

std::string windowNode(std::size_t i) { return "win_" + std::to_string(i); }
std::string prepNode(std::size_t i) { return "prep_" + std::to_string(i); }
std::string xcorrNode(std::size_t i, std::size_t j) { return "xcorr_" + std::to_string(i) + "_" + std::to_string(j); }
std::string stackNode(std::size_t i, std::size_t j) { return "stack_" + std::to_string(i) + "_" + std::to_string(j); }
std::string channelFeed(std::size_t i) { return "ch_" + std::to_string(i); }

dataflow::WorkflowGraph buildAllPairsGraph(const std::vector<Trace>& traces, const PrepDescriptor& prep, int maxLag,
                                           double windowSeconds) {
  const std::size_t n = traces.size();
  if (n < 2) throw Error("TooFewChannels", "all-pairs correlation needs at least 2 channels, got " + std::to_string(n));
  for (const auto& t : traces) {
    t.validate();
    if (!sameDt(t.dt, traces.front().dt)) throw Error("DtMismatch", "all channels must share dt");
  }
  if (maxLag < 0) throw Error("BadParams", "maxLagSamples must be non-negative");
  const auto& lib = seismoPEs();
  const auto windowPE = lib.find("trace_window"), prepPE = lib.find("trace_prep"), xcorrPE = lib.find("xcorr"),
             stackPE = lib.find("stack");
  const Json windowParams = {{"windowSeconds", windowSeconds}};
  const Json prepParams = {{"steps", prepToJson(prep)}};
  const Json xcorrParams = {{"maxLag", maxLag}};

  dataflow::GraphParts parts;
  parts.edges.reserve(3 * pairCount(n) + n);
  for (std::size_t i = 0; i < n; ++i) {
    parts.addNode(windowNode(i), windowPE, windowParams);
    parts.addNode(prepNode(i), prepPE, prepParams);
    parts.connect(windowNode(i), "out", prepNode(i), "in");
    parts.feed(channelFeed(i), windowNode(i), "in");
  }
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      parts.addNode(xcorrNode(i, j), xcorrPE, xcorrParams);
      parts.addNode(stackNode(i, j), stackPE);
      parts.connect(prepNode(i), "out", xcorrNode(i, j), "a");
      parts.connect(prepNode(j), "out", xcorrNode(i, j), "b");
      parts.connect(xcorrNode(i, j), "out", stackNode(i, j), "in");
    }
  }
  return dataflow::buildGraph(std::move(parts));
}

std::map<std::string, std::vector<dataflow::DataUnit>> allPairsFeeds(const std::vector<Trace>& traces) {
  std::map<std::string, std::vector<dataflow::DataUnit>> feeds;
  for (std::size_t i = 0; i < traces.size(); ++i) feeds[channelFeed(i)].push_back(traces[i].toUnit());
  return feeds;
}

} // namespace verce::seismo
