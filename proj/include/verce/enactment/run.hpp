#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "verce/dataflow/payload.hpp"
#include "verce/enactment/plan.hpp"

namespace verce::enactment {

enum class BackendKind { Sequential, Threaded, Multiprocess };
enum class RunStatus { Pending, Running, Completed, Failed, Cancelled };

std::string_view backendName(BackendKind b);
BackendKind backendFromName(std::string_view s);
std::string_view statusName(RunStatus s);
RunStatus statusFromName(std::string_view s);
bool isTerminal(RunStatus s);

/// Seconds since the epoch. Every run timestamp comes from one of these.
using Clock = std::function<double()>;
Clock systemClock();

/// Input streams by feed name. The runtime assigns seq 1..n per feed.
using InputFeeds = std::map<std::string, std::vector<dataflow::DataUnit>>;
InputFeeds feedsFromPayloads(const std::map<std::string, std::vector<dataflow::Payload>>& payloads);
/// Feeds document: {feed: [unit, ...]} where a unit is a payload document
/// (or bare number / number list) or {"payload": ..., "metadata": {...}}.
/// Errors: MalformedFeeds.
InputFeeds feedsFromJson(const Json& j);

struct ErrorEntry {
  std::string peInstance;
  std::string message;
  std::uint64_t seq = 0;
  std::string code;
};

enum class EventKind { StateChange, UnitProcessed, Error, TriggerFired };
std::string_view eventKindName(EventKind k);

struct RunEvent {
  std::string runId;
  EventKind kind = EventKind::StateChange;
  std::string peInstance;
  std::uint64_t seq = 0; ///< per-run event counter, from 1
  double timestamp = 0.0;
  Json detail = Json::object();

  Json toJson() const;
};

struct RunRecord {
  std::string runId;
  std::string graphRef;
  BackendKind backend = BackendKind::Sequential;
  ExecutionPlan plan;
  RunStatus status = RunStatus::Pending;
  double startedAt = 0.0;
  std::optional<double> endedAt;
  std::vector<std::string> activityIds;
  /// "instance.port" of every unconsumed output -> entity ids (or
  /// "<runId>/<port>/<seq>" when provenance is off).
  std::map<std::string, std::vector<std::string>> outputRefs;
  std::vector<ErrorEntry> errorLog;
  std::uint64_t unitsProcessed = 0;
  std::uint64_t feedUnitsDelivered = 0;
  /// Units on unconsumed outputs, kept in memory for callers and tests.
  std::map<std::string, std::vector<dataflow::DataUnit>> outputs;

  /// Without the in-memory outputs.
  Json toJson() const;
};

struct RunOptions {
  bool provenance = false;
  bool spill = false;
  /// Bytes a run may spill before failing with SpillExhausted.
  std::uint64_t spillQuotaBytes = 256ull << 20;
  int workers = 2;
  double maxLoad = 0.0;
  std::map<std::string, double> nodeWeights;
  /// Copy every recorded payload into the blob store so it can be downloaded.
  bool retainPayloads = false;
  std::string runId; ///< generated when empty
  std::string agentId = "anonymous";
  Json metadata = Json::object();
};

} // namespace verce::enactment
