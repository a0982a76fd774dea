#include "verce/provenance/store.hpp"

#include <algorithm>
#include <deque>
#include <functional>
#include <map>
#include <mutex>
#include <sstream>

namespace fs = std::filesystem;

namespace verce::provenance {

namespace {

std::uint64_t fnv1a(std::uint64_t h, std::string_view s) {
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

} // namespace

Json LineageSlice::toJson() const {
  Json f = Json::array();
  for (const auto& id : frontier) f.push_back(id);
  return {{"root", root},
          {"direction", direction == LineageDirection::Ancestors ? "ancestors" : "descendants"},
          {"maxDepth", maxDepth},
          {"entities", toJsonList(entities)},
          {"edges", toJsonList(edges)},
          {"frontier", std::move(f)}};
}

Json AncestorMatch::toJson() const {
  Json j = {{"found", found}};
  j["witness"] = found ? Json(witness) : Json(nullptr);
  return j;
}

ProvStore::ProvStore() = default;

ProvStore::ProvStore(fs::path logPath) : logPath_(std::move(logPath)) {
  if (logPath_.has_parent_path()) fs::create_directories(logPath_.parent_path());
  replay();
  log_.open(logPath_, std::ios::app | std::ios::binary);
  if (!log_) throw Error("PathUnwritable", "cannot open provenance log " + logPath_.string());
}

void ProvStore::replay() {
  std::ifstream in(logPath_, std::ios::binary);
  if (!in) return;
  replaying_ = true;
  std::string line;
  std::size_t lineNo = 0;
  while (std::getline(in, line)) {
    ++lineNo;
    if (line.empty()) continue;
    try {
      apply(Json::parse(line));
    } catch (const Json::exception& e) {
      replaying_ = false;
      throw Error("CorruptLog", logPath_.string() + ":" + std::to_string(lineNo) + ": " + e.what());
    }
    digest_ = fnv1a(digest_, line);
  }
  replaying_ = false;
}

void ProvStore::apply(const Json& rec) {
  const auto type = rec.at("t").get<std::string>();
  const auto& body = rec.at("r");
  if (type == "agent") {
    addAgentLocked(agentFromJson(body));
  } else if (type == "run") {
    addRunLocked(runFromJson(body));
  } else if (type == "runStatus") {
    auto& r = runs_.at(runIndex_.at(body.at("runId").get<std::string>()));
    r.status = body.at("status").get<std::string>();
    if (!body.at("endedAt").is_null()) r.endedAt = body.at("endedAt").get<double>();
  } else if (type == "activity") {
    addActivityLocked(activityFromJson(body));
  } else if (type == "entity") {
    addEntityLocked(entityFromJson(body));
  } else if (type == "derivation") {
    addDerivationLocked(derivationFromJson(body));
  } else if (type == "keys") {
    for (const auto& k : body) declared_.insert(k.get<std::string>());
  } else if (type == "ship") {
    ships_.push_back(body);
  }
}

void ProvStore::append(const Json& rec) {
  const auto line = canonicalDump(rec);
  digest_ = fnv1a(digest_, line);
  if (log_.is_open()) log_ << line << '\n';
}

void ProvStore::flush() {
  if (log_.is_open()) log_.flush();
}

void ProvStore::addAgentLocked(const ProvAgent& a) {
  if (auto it = agentIndex_.find(a.agentId); it != agentIndex_.end()) {
    auto& existing = agents_[it->second];
    for (const auto& r : a.runs)
      if (std::find(existing.runs.begin(), existing.runs.end(), r) == existing.runs.end()) existing.runs.push_back(r);
    return;
  }
  agentIndex_.emplace(a.agentId, agents_.size());
  agents_.push_back(a);
}

void ProvStore::addRunLocked(const RunSummary& r) {
  runIndex_.emplace(r.runId, runs_.size());
  runs_.push_back(r);
  auto it = agentIndex_.find(r.agentId);
  if (it != agentIndex_.end()) {
    auto& runs = agents_[it->second].runs;
    if (std::find(runs.begin(), runs.end(), r.runId) == runs.end()) runs.push_back(r.runId);
  }
}

void ProvStore::addActivityLocked(const ProvActivity& a) {
  activityIndex_.emplace(a.activityId, activities_.size());
  activities_.push_back(a);
  ++nextActivity_;
}

void ProvStore::addEntityLocked(const ProvEntity& e) {
  const auto idx = entities_.size();
  entityIndex_.emplace(e.entityId, idx);
  entities_.push_back(e);
  for (const auto& [k, _] : e.metadata.items()) byKey_[k].push_back(idx);
  byDigest_[e.payloadDigest].push_back(idx);
  if (auto a = activityIndex_.find(e.generatedBy); a != activityIndex_.end()) {
    entitiesByRun_[activities_[a->second].runId].push_back(idx);
  }
  ++nextEntity_;
}

void ProvStore::addDerivationLocked(const DerivationEdge& d) {
  const auto derived = entityIndex_.at(d.derived);
  const auto source = entityIndex_.at(d.source);
  // Sources always predate what is derived from them, which keeps the graph acyclic.
  if (source >= derived) throw Error("LineageCycle", "derivation " + d.derived + " <- " + d.source + " would not be acyclic");
  const auto idx = derivations_.size();
  derivations_.push_back(d);
  parents_[derived].push_back(idx);
  children_[source].push_back(idx);
}

std::string ProvStore::nextId(char prefix, std::uint64_t& counter, const std::unordered_map<std::string, std::size_t>& taken) {
  std::string id;
  do {
    id = std::string(1, prefix) + std::to_string(counter++);
  } while (taken.count(id));
  return id;
}

void ProvStore::beginRun(RunSummary run, const std::string& agentDisplayName) {
  std::unique_lock lock(mu_);
  if (runIndex_.count(run.runId)) throw Error("DuplicateRun", "run " + run.runId + " already recorded");
  if (run.agentId.empty()) run.agentId = "anonymous";
  if (!agentIndex_.count(run.agentId)) {
    ProvAgent a{run.agentId, agentDisplayName.empty() ? run.agentId : agentDisplayName, {}};
    addAgentLocked(a);
    append({{"t", "agent"}, {"r", toJson(a)}});
  }
  addRunLocked(run);
  append({{"t", "run"}, {"r", toJson(run)}});
  flush();
}

void ProvStore::updateRunStatus(const std::string& runId, const std::string& status, std::optional<double> endedAt) {
  std::unique_lock lock(mu_);
  auto it = runIndex_.find(runId);
  if (it == runIndex_.end()) throw Error("UnknownRun", "no run " + runId);
  auto& r = runs_[it->second];
  r.status = status;
  if (endedAt) r.endedAt = endedAt;
  append({{"t", "runStatus"},
          {"r", {{"runId", runId}, {"status", status}, {"endedAt", endedAt ? Json(*endedAt) : Json(nullptr)}}}});
  flush();
}

bool ProvStore::hasRun(const std::string& runId) const {
  std::shared_lock lock(mu_);
  return runIndex_.count(runId) > 0;
}

StepResult ProvStore::recordStep(const std::string& runId, ProvActivity activity, const std::vector<std::string>& inputEntityIds,
                                 std::vector<OutputRecord> outputs) {
  StepResult result;
  ProvActivity recordedActivity;
  std::vector<ProvEntity> fresh;
  {
    std::unique_lock lock(mu_);
    if (!runIndex_.count(runId)) throw Error("UnknownRun", "no run " + runId);
    for (const auto& id : inputEntityIds) {
      if (!entityIndex_.count(id)) throw Error("UnknownEntity", "no entity " + id);
    }
    for (const auto& o : outputs) {
      if (!o.derivedFrom) continue;
      for (const auto& id : *o.derivedFrom) {
        if (!entityIndex_.count(id)) throw Error("UnknownEntity", "no entity " + id);
      }
    }
    activity.runId = runId;
    activity.activityId = nextId('a', nextActivity_, activityIndex_);
    --nextActivity_; // addActivityLocked advances it again
    if (activity.status == ActivityStatus::Error && !activity.errorMessage) activity.errorMessage = "error";
    if (activity.endedAt < activity.startedAt) activity.endedAt = activity.startedAt;
    addActivityLocked(activity);
    append({{"t", "activity"}, {"r", toJson(activity)}});
    result.activityId = activity.activityId;

    for (auto& o : outputs) {
      ProvEntity e;
      e.entityId = nextId('e', nextEntity_, entityIndex_);
      --nextEntity_;
      e.payloadDigest = o.payloadDigest;
      e.metadata = o.metadata.is_object() ? o.metadata : Json::object();
      e.metadata["pe"] = activity.peInstanceId;
      e.metadata["peName"] = activity.peName;
      e.metadata["port"] = o.port;
      e.metadata["runId"] = runId;
      e.generatedBy = activity.activityId;
      e.atTime = activity.endedAt;
      addEntityLocked(e);
      append({{"t", "entity"}, {"r", toJson(e)}});
      const auto& sources = o.derivedFrom ? *o.derivedFrom : inputEntityIds;
      std::set<std::string> seen;
      for (const auto& src : sources) {
        if (!seen.insert(src).second) continue;
        DerivationEdge d{e.entityId, src, activity.activityId};
        addDerivationLocked(d);
        append({{"t", "derivation"}, {"r", toJson(d)}});
      }
      result.outputEntityIds.push_back(e.entityId);
      fresh.push_back(std::move(e));
    }
    flush();
    recordedActivity = activity;
  }

  FreshRecord rec{&recordedActivity, {}};
  for (std::size_t i = 0; i < fresh.size(); ++i) rec.entities.push_back({&fresh[i], outputs[i].payload});
  result.fired = triggers_.evaluate(rec);
  return result;
}

void ProvStore::declareKeys(const std::set<std::string>& keys) {
  std::unique_lock lock(mu_);
  Json list = Json::array();
  for (const auto& k : keys)
    if (declared_.insert(k).second) list.push_back(k);
  if (!list.empty()) {
    append({{"t", "keys"}, {"r", list}});
    flush();
  }
}

std::set<std::string> ProvStore::declaredKeys() const {
  std::shared_lock lock(mu_);
  auto keys = declared_;
  for (const auto& [k, _] : byKey_) keys.insert(k);
  return keys;
}

void ProvStore::registerTrigger(TriggerRule rule) {
  triggers_.registerTrigger(std::move(rule), declaredKeys());
  std::call_once(shipHookOnce_, [this] {
    triggers_.setShipRecorder([this](const FiredAction& f, const fs::path& written) {
      std::unique_lock lock(mu_);
      Json ev = {{"ruleId", f.ruleId}, {"runId", f.runId}, {"entityId", f.recordId}, {"sink", f.action.target},
                 {"path", written.string()}};
      ships_.push_back(ev);
      append({{"t", "ship"}, {"r", ev}});
      flush();
    });
  });
}

std::vector<RunSummary> ProvStore::queryRuns(const Criteria& criteria) const {
  std::shared_lock lock(mu_);
  std::vector<std::size_t> hits;
  for (std::size_t i = 0; i < runs_.size(); ++i)
    if (criteria.matches(runs_[i].metadata)) hits.push_back(i);
  std::stable_sort(hits.begin(), hits.end(), [&](std::size_t a, std::size_t b) {
    if (runs_[a].startedAt != runs_[b].startedAt) return runs_[a].startedAt > runs_[b].startedAt;
    return a > b;
  });
  std::vector<RunSummary> out;
  out.reserve(hits.size());
  for (auto i : hits) out.push_back(runs_[i]);
  return out;
}

std::vector<ProvEntity> ProvStore::queryEntities(const Criteria& criteria) const {
  std::shared_lock lock(mu_);
  std::vector<ProvEntity> out;
  if (criteria.empty()) {
    out.assign(entities_.rbegin(), entities_.rend());
    return out;
  }
  const std::vector<std::size_t>* narrowest = nullptr;
  for (const auto& [key, _] : criteria.conditions()) {
    auto it = byKey_.find(key);
    if (it == byKey_.end()) return out;
    if (!narrowest || it->second.size() < narrowest->size()) narrowest = &it->second;
  }
  for (auto it = narrowest->rbegin(); it != narrowest->rend(); ++it) {
    if (criteria.matches(entities_[*it].metadata)) out.push_back(entities_[*it]);
  }
  return out;
}

LineageSlice ProvStore::traceLineage(const std::string& entityId, LineageDirection dir, int maxDepth) const {
  if (maxDepth < 1) throw Error("BadDepth", "maxDepth must be at least 1");
  std::shared_lock lock(mu_);
  auto root = entityIndex_.find(entityId);
  if (root == entityIndex_.end()) throw Error("UnknownEntity", "no entity " + entityId);
  const auto& adjacency = dir == LineageDirection::Ancestors ? parents_ : children_;
  auto neighbours = [&](std::size_t n) {
    std::vector<std::pair<std::size_t, std::size_t>> out; // (entity, edge)
    if (auto it = adjacency.find(n); it != adjacency.end()) {
      for (auto e : it->second) {
        const auto& d = derivations_[e];
        out.emplace_back(entityIndex_.at(dir == LineageDirection::Ancestors ? d.source : d.derived), e);
      }
    }
    std::sort(out.begin(), out.end());
    return out;
  };

  LineageSlice slice;
  slice.root = entityId;
  slice.direction = dir;
  slice.maxDepth = maxDepth;
  std::unordered_map<std::size_t, int> depth{{root->second, 0}};
  std::vector<std::size_t> order{root->second};
  for (std::size_t head = 0; head < order.size(); ++head) {
    const auto n = order[head];
    if (depth[n] == maxDepth) continue;
    for (const auto& [m, _] : neighbours(n)) {
      if (depth.emplace(m, depth[n] + 1).second) order.push_back(m);
    }
  }
  // Edges are those with both ends in the slice; a node is expandable when
  // it has a neighbour outside it.
  for (const auto n : order) {
    slice.entities.push_back(entities_[n]);
    bool expandable = false;
    for (const auto& [m, e] : neighbours(n)) {
      if (depth.count(m)) {
        slice.edges.push_back(derivations_[e]);
      } else {
        expandable = true;
      }
    }
    if (expandable) slice.frontier.push_back(entities_[n].entityId);
  }
  return slice;
}

AncestorMatch ProvStore::hasAncestorMatching(const std::string& entityId, const Criteria& criteria) const {
  std::shared_lock lock(mu_);
  auto root = entityIndex_.find(entityId);
  if (root == entityIndex_.end()) throw Error("UnknownEntity", "no entity " + entityId);
  std::vector<bool> seen(entities_.size(), false);
  std::deque<std::size_t> queue{root->second};
  seen[root->second] = true;
  while (!queue.empty()) {
    const auto n = queue.front();
    queue.pop_front();
    auto it = parents_.find(n);
    if (it == parents_.end()) continue;
    std::vector<std::size_t> ps;
    for (auto e : it->second) ps.push_back(entityIndex_.at(derivations_[e].source));
    std::sort(ps.begin(), ps.end());
    for (auto p : ps) {
      if (seen[p]) continue;
      seen[p] = true;
      if (criteria.matches(entities_[p].metadata)) return {true, entities_[p].entityId};
      queue.push_back(p);
    }
  }
  return {};
}

std::optional<ProvEntity> ProvStore::entity(const std::string& id) const {
  std::shared_lock lock(mu_);
  auto it = entityIndex_.find(id);
  if (it == entityIndex_.end()) return std::nullopt;
  return entities_[it->second];
}

std::optional<ProvActivity> ProvStore::activity(const std::string& id) const {
  std::shared_lock lock(mu_);
  auto it = activityIndex_.find(id);
  if (it == activityIndex_.end()) return std::nullopt;
  return activities_[it->second];
}

std::optional<RunSummary> ProvStore::run(const std::string& id) const {
  std::shared_lock lock(mu_);
  auto it = runIndex_.find(id);
  if (it == runIndex_.end()) return std::nullopt;
  return runs_[it->second];
}

std::optional<ProvAgent> ProvStore::agent(const std::string& id) const {
  std::shared_lock lock(mu_);
  auto it = agentIndex_.find(id);
  if (it == agentIndex_.end()) return std::nullopt;
  return agents_[it->second];
}

std::vector<ProvEntity> ProvStore::entitiesOfRun(const std::string& runId) const {
  std::shared_lock lock(mu_);
  std::vector<ProvEntity> out;
  if (auto it = entitiesByRun_.find(runId); it != entitiesByRun_.end())
    for (auto i : it->second) out.push_back(entities_[i]);
  return out;
}

std::vector<ProvActivity> ProvStore::activitiesOfRun(const std::string& runId) const {
  std::shared_lock lock(mu_);
  std::vector<ProvActivity> out;
  for (const auto& a : activities_)
    if (a.runId == runId) out.push_back(a);
  return out;
}

std::vector<DerivationEdge> ProvStore::derivationsOfRun(const std::string& runId) const {
  std::shared_lock lock(mu_);
  std::vector<DerivationEdge> out;
  for (const auto& d : derivations_) {
    const auto& a = activities_[activityIndex_.at(d.activityId)];
    if (a.runId == runId) out.push_back(d);
  }
  return out;
}

std::vector<std::string> ProvStore::entitiesWithDigest(const std::string& digest) const {
  std::shared_lock lock(mu_);
  std::vector<std::string> out;
  if (auto it = byDigest_.find(digest); it != byDigest_.end())
    for (auto i : it->second) out.push_back(entities_[i].entityId);
  return out;
}

std::vector<Json> ProvStore::shipEvents() const {
  std::shared_lock lock(mu_);
  return ships_;
}

std::size_t ProvStore::entityCount() const {
  std::shared_lock lock(mu_);
  return entities_.size();
}

std::size_t ProvStore::activityCount() const {
  std::shared_lock lock(mu_);
  return activities_.size();
}

std::size_t ProvStore::derivationCount() const {
  std::shared_lock lock(mu_);
  return derivations_.size();
}

std::string ProvStore::stateDigest() const {
  std::shared_lock lock(mu_);
  std::ostringstream ss;
  ss << std::hex << digest_ << '-' << std::dec << entities_.size() << '-' << activities_.size() << '-'
     << derivations_.size() << '-' << runs_.size();
  return ss.str();
}

void ProvStore::importRecords(const RunSummary& run, const ProvAgent& agent, const std::vector<ProvActivity>& activities,
                              const std::vector<ProvEntity>& entities, const std::vector<DerivationEdge>& derivations) {
  std::unique_lock lock(mu_);
  if (runIndex_.count(run.runId)) throw Error("DuplicateId", "run " + run.runId + " already present");
  for (const auto& a : activities)
    if (activityIndex_.count(a.activityId)) throw Error("DuplicateId", "activity " + a.activityId + " already present");
  std::set<std::string> newEntities;
  for (const auto& e : entities) {
    if (entityIndex_.count(e.entityId) || !newEntities.insert(e.entityId).second) {
      throw Error("DuplicateId", "entity " + e.entityId + " already present");
    }
  }
  std::set<std::string> newActivities;
  for (const auto& a : activities) newActivities.insert(a.activityId);
  for (const auto& e : entities)
    if (!newActivities.count(e.generatedBy)) throw Error("UnknownActivity", "entity " + e.entityId + " has unknown generator");
  for (const auto& d : derivations) {
    if (!newEntities.count(d.derived)) throw Error("UnknownEntity", "derivation of unknown entity " + d.derived);
    if (!newEntities.count(d.source) && !entityIndex_.count(d.source)) throw Error("UnknownEntity", "unknown source " + d.source);
  }

  if (!agentIndex_.count(agent.agentId)) {
    ProvAgent a{agent.agentId, agent.displayName, {}};
    addAgentLocked(a);
    append({{"t", "agent"}, {"r", toJson(a)}});
  }
  addRunLocked(run);
  append({{"t", "run"}, {"r", toJson(run)}});
  for (const auto& a : activities) {
    addActivityLocked(a);
    append({{"t", "activity"}, {"r", toJson(a)}});
  }
  // Entities must precede their derivations' sources in store order.
  std::map<std::string, int> rank;
  std::vector<ProvEntity> ordered = entities;
  {
    std::map<std::string, std::vector<std::string>> parentsOf;
    for (const auto& d : derivations) parentsOf[d.derived].push_back(d.source);
    std::function<int(const std::string&)> depthOf = [&](const std::string& id) -> int {
      if (auto it = rank.find(id); it != rank.end()) return it->second;
      int r = 0;
      for (const auto& p : parentsOf[id])
        if (newEntities.count(p)) r = std::max(r, depthOf(p) + 1);
      return rank[id] = r;
    };
    for (const auto& e : ordered) depthOf(e.entityId);
    std::stable_sort(ordered.begin(), ordered.end(),
                     [&](const ProvEntity& a, const ProvEntity& b) { return rank[a.entityId] < rank[b.entityId]; });
  }
  for (const auto& e : ordered) {
    addEntityLocked(e);
    append({{"t", "entity"}, {"r", toJson(e)}});
  }
  for (const auto& d : derivations) {
    addDerivationLocked(d);
    append({{"t", "derivation"}, {"r", toJson(d)}});
  }
  flush();
}

std::string bulkDownloadScript(const std::vector<ProvEntity>& entities, const std::string& baseUrl) {
  std::ostringstream s;
  s << "#!/bin/sh\n"
    << "# bulk download manifest: one fetch line per entity (url, sha256 of payload, destination)\n"
    << "# entries: " << entities.size() << "\n"
    << "set -e\n"
    << "fetch() {\n"
    << "  curl -fsS -o \"$3\" \"$1\"\n"
    << "  echo \"$2  $3\" | sha256sum -c - >/dev/null\n"
    << "}\n";
  for (const auto& e : entities) {
    s << "fetch '" << baseUrl << "/blobs/" << e.payloadDigest << "' '" << e.payloadDigest << "' '" << e.entityId
      << ".bin'\n";
  }
  return s.str();
}

} // namespace verce::provenance
