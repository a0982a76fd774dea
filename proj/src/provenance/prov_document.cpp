#include "verce/provenance/prov_document.hpp"

#include <algorithm>

namespace verce::provenance {

namespace {

constexpr const char* kNs = "urn:verce:";

/// Relation ids sort by their numeric suffix, not lexically.
std::vector<std::pair<long, const Json*>> relationsInOrder(const Json& section) {
  std::vector<std::pair<long, const Json*>> out;
  for (const auto& [id, rel] : section.items()) {
    const auto pos = id.find_first_of("0123456789");
    if (pos == std::string::npos) throw Error("MalformedDocument", "relation id without index: " + id);
    out.emplace_back(std::stol(id.substr(pos)), &rel);
  }
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  return out;
}

const Json& section(const Json& doc, const char* key) {
  static const Json empty = Json::object();
  auto it = doc.find(key);
  if (it == doc.end()) return empty;
  if (!it->is_object()) throw Error("MalformedDocument", std::string(key) + " must be an object");
  return *it;
}

/// "e2" before "e10".
bool idLess(const std::string& a, const std::string& b) {
  return a.size() != b.size() ? a.size() < b.size() : a < b;
}

} // namespace

ProvDocument exportProvDocument(const ProvStore& store, const std::string& runId) {
  const auto run = store.run(runId);
  if (!run) throw Error("UnknownRun", "no run " + runId);
  const auto agent = store.agent(run->agentId);

  Json doc = {{"prefix", {{"verce", kNs}, {"prov", "http://www.w3.org/ns/prov#"}}},
              {"prov:entity", Json::object()},
              {"prov:activity", Json::object()},
              {"prov:agent", Json::object()},
              {"prov:wasGeneratedBy", Json::object()},
              {"prov:wasDerivedFrom", Json::object()},
              {"prov:wasAssociatedWith", Json::object()}};

  Json runJson = toJson(*run);
  doc["verce:run"] = runJson;
  doc["prov:agent"][run->agentId] = {{"prov:type", "prov:Person"},
                                     {"verce:displayName", agent ? agent->displayName : run->agentId}};

  auto activities = store.activitiesOfRun(runId);
  std::sort(activities.begin(), activities.end(), [](const auto& a, const auto& b) { return idLess(a.activityId, b.activityId); });
  std::size_t w = 0;
  for (const auto& a : activities) {
    Json rec = {{"prov:startTime", a.startedAt},
                {"prov:endTime", a.endedAt},
                {"verce:runId", a.runId},
                {"verce:peInstanceId", a.peInstanceId},
                {"verce:peName", a.peName},
                {"verce:peVersion", a.peVersion},
                {"verce:parameters", a.parameters},
                {"verce:status", a.status == ActivityStatus::Ok ? "ok" : "error"}};
    if (a.errorMessage) rec["verce:errorMessage"] = *a.errorMessage;
    doc["prov:activity"][a.activityId] = std::move(rec);
    doc["prov:wasAssociatedWith"]["_:w" + std::to_string(++w)] = {{"prov:activity", a.activityId},
                                                                  {"prov:agent", run->agentId}};
  }

  auto entities = store.entitiesOfRun(runId);
  std::sort(entities.begin(), entities.end(), [](const auto& a, const auto& b) { return idLess(a.entityId, b.entityId); });
  std::size_t g = 0;
  for (const auto& e : entities) {
    doc["prov:entity"][e.entityId] = {{"verce:payloadDigest", e.payloadDigest}, {"verce:metadata", e.metadata}};
    doc["prov:wasGeneratedBy"]["_:g" + std::to_string(++g)] = {
        {"prov:entity", e.entityId}, {"prov:activity", e.generatedBy}, {"prov:time", e.atTime}};
  }

  auto derivations = store.derivationsOfRun(runId);
  std::sort(derivations.begin(), derivations.end(), [](const auto& a, const auto& b) {
    if (a.derived != b.derived) return idLess(a.derived, b.derived);
    return idLess(a.source, b.source);
  });
  std::size_t d = 0;
  for (const auto& edge : derivations) {
    doc["prov:wasDerivedFrom"]["_:d" + std::to_string(++d)] = {
        {"prov:generatedEntity", edge.derived}, {"prov:usedEntity", edge.source}, {"prov:activity", edge.activityId}};
  }
  return doc;
}

void importProvDocument(ProvStore& store, const ProvDocument& doc) {
  if (!doc.is_object() || !doc.contains("verce:run")) throw Error("MalformedDocument", "missing verce:run");
  try {
    const RunSummary run = runFromJson(doc.at("verce:run"));
    const auto& agents = section(doc, "prov:agent");
    if (agents.size() != 1) throw Error("MalformedDocument", "expected exactly one agent");
    const auto& [agentId, agentRec] = *agents.items().begin();
    ProvAgent agent{agentId, agentRec.value("verce:displayName", agentId), {}};

    std::vector<ProvActivity> activities;
    for (const auto& [id, rec] : section(doc, "prov:activity").items()) {
      ProvActivity a;
      a.activityId = id;
      a.runId = rec.value("verce:runId", run.runId);
      a.peInstanceId = rec.value("verce:peInstanceId", "");
      a.peName = rec.value("verce:peName", "");
      a.peVersion = rec.value("verce:peVersion", "");
      a.parameters = rec.value("verce:parameters", Json::object());
      a.startedAt = rec.value("prov:startTime", 0.0);
      a.endedAt = rec.value("prov:endTime", 0.0);
      a.status = rec.value("verce:status", "ok") == "error" ? ActivityStatus::Error : ActivityStatus::Ok;
      if (rec.contains("verce:errorMessage")) a.errorMessage = rec.at("verce:errorMessage").get<std::string>();
      activities.push_back(std::move(a));
    }
    std::sort(activities.begin(), activities.end(), [](const auto& a, const auto& b) { return idLess(a.activityId, b.activityId); });

    std::map<std::string, std::pair<std::string, double>> generation;
    for (const auto& [_, rel] : relationsInOrder(section(doc, "prov:wasGeneratedBy"))) {
      generation[rel->at("prov:entity").get<std::string>()] = {rel->at("prov:activity").get<std::string>(),
                                                               rel->value("prov:time", 0.0)};
    }
    std::vector<ProvEntity> entities;
    for (const auto& [id, rec] : section(doc, "prov:entity").items()) {
      auto it = generation.find(id);
      if (it == generation.end()) throw Error("MalformedDocument", "entity " + id + " has no generation");
      entities.push_back({id, rec.at("verce:payloadDigest").get<std::string>(), rec.value("verce:metadata", Json::object()),
                          it->second.first, it->second.second});
    }
    std::sort(entities.begin(), entities.end(), [](const auto& a, const auto& b) { return idLess(a.entityId, b.entityId); });

    std::vector<DerivationEdge> derivations;
    for (const auto& [_, rel] : relationsInOrder(section(doc, "prov:wasDerivedFrom"))) {
      derivations.push_back({rel->at("prov:generatedEntity").get<std::string>(), rel->at("prov:usedEntity").get<std::string>(),
                             rel->at("prov:activity").get<std::string>()});
    }
    store.importRecords(run, agent, activities, entities, derivations);
  } catch (const Json::exception& e) {
    throw Error("MalformedDocument", e.what());
  } catch (const std::logic_error& e) {
    throw Error("MalformedDocument", e.what());
  }
}

} // namespace verce::provenance
