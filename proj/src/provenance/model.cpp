#include "verce/provenance/model.hpp"

namespace verce::provenance {

Json toJson(const ProvEntity& e) {
  return {{"entityId", e.entityId},
          {"payloadDigest", e.payloadDigest},
          {"metadata", e.metadata},
          {"generatedBy", e.generatedBy},
          {"atTime", e.atTime}};
}

Json toJson(const ProvActivity& a) {
  Json j = {{"activityId", a.activityId},
            {"runId", a.runId},
            {"peInstanceId", a.peInstanceId},
            {"peName", a.peName},
            {"peVersion", a.peVersion},
            {"parameters", a.parameters},
            {"startedAt", a.startedAt},
            {"endedAt", a.endedAt},
            {"status", a.status == ActivityStatus::Ok ? "ok" : "error"}};
  if (a.errorMessage) j["errorMessage"] = *a.errorMessage;
  return j;
}

Json toJson(const DerivationEdge& d) {
  return {{"derived", d.derived}, {"source", d.source}, {"activityId", d.activityId}};
}

Json toJson(const ProvAgent& a) {
  return {{"agentId", a.agentId}, {"displayName", a.displayName}, {"runs", a.runs}};
}

Json toJson(const RunSummary& r) {
  Json j = {{"runId", r.runId},         {"agentId", r.agentId},     {"graphRef", r.graphRef},
            {"backend", r.backend},     {"status", r.status},       {"startedAt", r.startedAt},
            {"metadata", r.metadata}};
  j["endedAt"] = r.endedAt ? Json(*r.endedAt) : Json(nullptr);
  return j;
}

ProvEntity entityFromJson(const Json& j) {
  return {j.at("entityId").get<std::string>(), j.at("payloadDigest").get<std::string>(), j.value("metadata", Json::object()),
          j.at("generatedBy").get<std::string>(), j.value("atTime", 0.0)};
}

ProvActivity activityFromJson(const Json& j) {
  ProvActivity a;
  a.activityId = j.at("activityId").get<std::string>();
  a.runId = j.at("runId").get<std::string>();
  a.peInstanceId = j.value("peInstanceId", "");
  a.peName = j.value("peName", "");
  a.peVersion = j.value("peVersion", "");
  a.parameters = j.value("parameters", Json::object());
  a.startedAt = j.value("startedAt", 0.0);
  a.endedAt = j.value("endedAt", 0.0);
  a.status = j.value("status", "ok") == "error" ? ActivityStatus::Error : ActivityStatus::Ok;
  if (j.contains("errorMessage")) a.errorMessage = j.at("errorMessage").get<std::string>();
  return a;
}

DerivationEdge derivationFromJson(const Json& j) {
  return {j.at("derived").get<std::string>(), j.at("source").get<std::string>(), j.at("activityId").get<std::string>()};
}

ProvAgent agentFromJson(const Json& j) {
  return {j.at("agentId").get<std::string>(), j.value("displayName", ""), j.value("runs", std::vector<std::string>{})};
}

RunSummary runFromJson(const Json& j) {
  RunSummary r;
  r.runId = j.at("runId").get<std::string>();
  r.agentId = j.value("agentId", "");
  r.graphRef = j.value("graphRef", "");
  r.backend = j.value("backend", "");
  r.status = j.value("status", "pending");
  r.startedAt = j.value("startedAt", 0.0);
  if (j.contains("endedAt") && !j.at("endedAt").is_null()) r.endedAt = j.at("endedAt").get<double>();
  r.metadata = j.value("metadata", Json::object());
  return r;
}

} // namespace verce::provenance
