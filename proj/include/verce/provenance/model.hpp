#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "verce/common.hpp"

namespace verce::provenance {

struct ProvEntity {
  std::string entityId;
  std::string payloadDigest;
  Json metadata = Json::object();
  std::string generatedBy;
  double atTime = 0.0;
};

enum class ActivityStatus { Ok, Error };

struct ProvActivity {
  std::string activityId;
  std::string runId;
  std::string peInstanceId;
  std::string peName;
  std::string peVersion;
  Json parameters = Json::object();
  double startedAt = 0.0;
  double endedAt = 0.0;
  ActivityStatus status = ActivityStatus::Ok;
  std::optional<std::string> errorMessage;
};

struct DerivationEdge {
  std::string derived;
  std::string source;
  std::string activityId;
};

struct ProvAgent {
  std::string agentId;
  std::string displayName;
  std::vector<std::string> runs;
};

/// Run-level summary held by the provenance store.
struct RunSummary {
  std::string runId;
  std::string agentId;
  std::string graphRef;
  std::string backend;
  std::string status = "pending";
  double startedAt = 0.0;
  std::optional<double> endedAt;
  Json metadata = Json::object();
};

Json toJson(const ProvEntity& e);
Json toJson(const ProvActivity& a);
Json toJson(const DerivationEdge& d);
Json toJson(const ProvAgent& a);
Json toJson(const RunSummary& r);

ProvEntity entityFromJson(const Json& j);
ProvActivity activityFromJson(const Json& j);
DerivationEdge derivationFromJson(const Json& j);
ProvAgent agentFromJson(const Json& j);
RunSummary runFromJson(const Json& j);

template <typename T>
Json toJsonList(const std::vector<T>& items) {
  Json out = Json::array();
  for (const auto& i : items) out.push_back(toJson(i));
  return out;
}

} // namespace verce::provenance
