#include "verce/enactment/run.hpp"

#include <chrono>

namespace verce::enactment {

std::string_view backendName(BackendKind b) {
  switch (b) {
  case BackendKind::Sequential: return "sequential";
  case BackendKind::Threaded: return "threaded";
  case BackendKind::Multiprocess: return "multiprocess";
  }
  return "sequential";
}

BackendKind backendFromName(std::string_view s) {
  if (s == "sequential") return BackendKind::Sequential;
  if (s == "threaded") return BackendKind::Threaded;
  if (s == "multiprocess") return BackendKind::Multiprocess;
  throw Error("UnknownBackend", "unknown backend '" + std::string(s) + "'");
}

std::string_view statusName(RunStatus s) {
  switch (s) {
  case RunStatus::Pending: return "pending";
  case RunStatus::Running: return "running";
  case RunStatus::Completed: return "completed";
  case RunStatus::Failed: return "failed";
  case RunStatus::Cancelled: return "cancelled";
  }
  return "pending";
}

RunStatus statusFromName(std::string_view s) {
  for (auto st : {RunStatus::Pending, RunStatus::Running, RunStatus::Completed, RunStatus::Failed, RunStatus::Cancelled})
    if (statusName(st) == s) return st;
  throw Error("UnknownStatus", "unknown run status '" + std::string(s) + "'");
}

bool isTerminal(RunStatus s) {
  return s == RunStatus::Completed || s == RunStatus::Failed || s == RunStatus::Cancelled;
}

Clock systemClock() {
  return [] {
    return std::chrono::duration<double>(std::chrono::system_clock::now().time_since_epoch()).count();
  };
}

InputFeeds feedsFromPayloads(const std::map<std::string, std::vector<dataflow::Payload>>& payloads) {
  InputFeeds feeds;
  for (const auto& [name, list] : payloads) {
    auto& units = feeds[name];
    for (const auto& p : list) units.push_back({p, Json::object(), {}, 0});
  }
  return feeds;
}

InputFeeds feedsFromJson(const Json& j) {
  if (!j.is_object()) throw Error("MalformedFeeds", "feeds must map feed names to lists of units");
  InputFeeds feeds;
  for (const auto& [name, list] : j.items()) {
    if (!list.is_array()) throw Error("MalformedFeeds", "feed '" + name + "' must be a list");
    auto& units = feeds[name];
    for (const auto& u : list) {
      try {
        if (u.is_object() && u.contains("payload")) {
          Json meta = u.value("metadata", Json::object());
          if (!meta.is_object()) throw Error("MalformedFeeds", "unit metadata must be an object");
          units.push_back({dataflow::payloadFromJson(u.at("payload")), std::move(meta), {}, 0});
        } else {
          units.push_back({dataflow::payloadFromJson(u), Json::object(), {}, 0});
        }
      } catch (const Error& e) {
        throw Error("MalformedFeeds", "feed '" + name + "': " + e.what());
      }
    }
  }
  return feeds;
}

std::string_view eventKindName(EventKind k) {
  switch (k) {
  case EventKind::StateChange: return "stateChange";
  case EventKind::UnitProcessed: return "unitProcessed";
  case EventKind::Error: return "error";
  case EventKind::TriggerFired: return "triggerFired";
  }
  return "stateChange";
}

Json RunEvent::toJson() const {
  Json j = {{"runId", runId}, {"kind", eventKindName(kind)}, {"seq", seq}, {"timestamp", timestamp}, {"detail", detail}};
  j["peInstance"] = peInstance.empty() ? Json(nullptr) : Json(peInstance);
  return j;
}

Json RunRecord::toJson() const {
  Json errors = Json::array();
  for (const auto& e : errorLog) {
    errors.push_back({{"peInstance", e.peInstance}, {"message", e.message}, {"seq", e.seq}, {"code", e.code}});
  }
  Json j = {{"runId", runId},
            {"graphRef", graphRef},
            {"backend", backendName(backend)},
            {"plan", plan.toJson()},
            {"status", statusName(status)},
            {"startedAt", startedAt},
            {"activityIds", activityIds},
            {"outputRefs", outputRefs},
            {"errorLog", errors},
            {"unitsProcessed", unitsProcessed},
            {"feedUnitsDelivered", feedUnitsDelivered}};
  j["endedAt"] = endedAt ? Json(*endedAt) : Json(nullptr);
  return j;
}

} // namespace verce::enactment
