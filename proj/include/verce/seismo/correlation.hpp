#pragma once

#include <map>
#include <string>
#include <vector>

#include "verce/dataflow/graph.hpp"
#include "verce/seismo/transforms.hpp"

namespace verce::seismo {

/// values[l + maxLag] = sum over t (ascending) of a[t] * b[t + l], with
/// samples outside either trace treated as zero.
/// Errors: DtMismatch, TooShort (a length not above maxLag), BadParams.
CorrelationResult crossCorrelate(const Trace& a, const Trace& b, int maxLagSamples);

/// Element-wise mean of the values (summed in list order); windowCount is
/// the sum. Errors: EmptyList, MixedPairs, MixedLagGrids.
CorrelationResult stackCorrelations(const std::vector<CorrelationResult>& results);

/// Consecutive windows of round(windowSeconds / dt) samples; a trailing
/// partial window is dropped. Errors: BadParams, TooShort (no full window).
std::vector<Trace> splitWindows(const Trace& t, double windowSeconds);

inline std::size_t pairCount(std::size_t n) { return n * (n - 1) / 2; }

/// Node ids used by the all-pairs graph.
std::string windowNode(std::size_t i);
std::string prepNode(std::size_t i);
std::string xcorrNode(std::size_t i, std::size_t j);
std::string stackNode(std::size_t i, std::size_t j);
std::string channelFeed(std::size_t i);

/// Per channel: window -> prep; per unordered pair i < j: xcorr fed by both
/// preps, then a stacker whose output is the pair's result.
/// Errors: TooFewChannels, DtMismatch, BadParams.
dataflow::WorkflowGraph buildAllPairsGraph(const std::vector<Trace>& traces, const PrepDescriptor& prep, int maxLagSamples,
                                           double windowSeconds);

/// Feed name -> the channel's trace as a single unit.
std::map<std::string, std::vector<dataflow::DataUnit>> allPairsFeeds(const std::vector<Trace>& traces);

} // namespace verce::seismo
