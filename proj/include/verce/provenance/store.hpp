#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <mutex>
#include <shared_mutex>
#include <string>
#include <unordered_map>
#include <vector>

#include "verce/dataflow/payload.hpp"
#include "verce/provenance/criteria.hpp"
#include "verce/provenance/model.hpp"
#include "verce/provenance/triggers.hpp"

namespace verce::provenance {

/// One unit emitted by a step, as seen by the store.
struct OutputRecord {
  std::string port;
  std::string payloadDigest;
  Json metadata = Json::object();
  /// Inputs this output was computed from; all step inputs when unset.
  std::optional<std::vector<std::string>> derivedFrom;
  /// Payload for trigger evaluation; not retained.
  const dataflow::Payload* payload = nullptr;
};

struct StepResult {
  std::string activityId;
  std::vector<std::string> outputEntityIds;
  std::vector<FiredAction> fired;
};

enum class LineageDirection { Ancestors, Descendants };

struct LineageSlice {
  std::string root;
  LineageDirection direction = LineageDirection::Ancestors;
  int maxDepth = 1;
  std::vector<ProvEntity> entities; ///< breadth-first, root first
  std::vector<DerivationEdge> edges;
  std::vector<std::string> frontier; ///< entities with unexplored hops beyond maxDepth

  Json toJson() const;
};

struct AncestorMatch {
  bool found = false;
  std::string witness;

  Json toJson() const;
};

/// Append-only lineage store: a single JSON-lines log plus in-memory indexes
/// (by id, by metadata key, by payload digest, by derivation adjacency) that
/// are rebuilt from the log on open. With no path the store is memory-only.
///
/// Appends are serialized; queries take a shared lock and see a consistent
/// prefix of the log.
class ProvStore {
public:
  ProvStore();
  explicit ProvStore(std::filesystem::path logPath);
  ProvStore(const ProvStore&) = delete;
  ProvStore& operator=(const ProvStore&) = delete;

  const std::filesystem::path& logPath() const noexcept { return logPath_; }

  /// Registers the run (and its agent, if new). Re-registering a run is an error.
  void beginRun(RunSummary run, const std::string& agentDisplayName = {});
  void updateRunStatus(const std::string& runId, const std::string& status, std::optional<double> endedAt);
  bool hasRun(const std::string& runId) const;

  /// Appends one activity, one entity per output and one derivation edge per
  /// (output, source) pair, then evaluates triggers synchronously.
  /// Errors: UnknownRun, UnknownEntity.
  StepResult recordStep(const std::string& runId, ProvActivity activity, const std::vector<std::string>& inputEntityIds,
                        std::vector<OutputRecord> outputs);

  void declareKeys(const std::set<std::string>& keys);
  std::set<std::string> declaredKeys() const;
  /// Errors: InvalidPredicateKey, UnknownSink.
  void registerTrigger(TriggerRule rule);
  TriggerEngine& triggers() noexcept { return triggers_; }

  std::vector<RunSummary> queryRuns(const Criteria& criteria) const;
  std::vector<ProvEntity> queryEntities(const Criteria& criteria) const;
  LineageSlice traceLineage(const std::string& entityId, LineageDirection dir, int maxDepth) const;
  AncestorMatch hasAncestorMatching(const std::string& entityId, const Criteria& criteria) const;

  std::optional<ProvEntity> entity(const std::string& id) const;
  std::optional<ProvActivity> activity(const std::string& id) const;
  std::optional<RunSummary> run(const std::string& id) const;
  std::optional<ProvAgent> agent(const std::string& id) const;
  std::vector<ProvEntity> entitiesOfRun(const std::string& runId) const;
  std::vector<ProvActivity> activitiesOfRun(const std::string& runId) const;
  std::vector<DerivationEdge> derivationsOfRun(const std::string& runId) const;
  std::vector<std::string> entitiesWithDigest(const std::string& digest) const;
  std::vector<Json> shipEvents() const;

  std::size_t entityCount() const;
  std::size_t activityCount() const;
  std::size_t derivationCount() const;

  /// Changes whenever a record is appended.
  std::string stateDigest() const;

  /// Bulk insert of records carrying their own ids (document import).
  /// Errors: DuplicateId, UnknownEntity, UnknownRun.
  void importRecords(const RunSummary& run, const ProvAgent& agent, const std::vector<ProvActivity>& activities,
                     const std::vector<ProvEntity>& entities, const std::vector<DerivationEdge>& derivations);

private:
  void replay();
  void apply(const Json& rec);
  void append(const Json& rec);
  void flush();
  void addAgentLocked(const ProvAgent& a);
  void addRunLocked(const RunSummary& r);
  void addActivityLocked(const ProvActivity& a);
  void addEntityLocked(const ProvEntity& e);
  void addDerivationLocked(const DerivationEdge& d);
  std::string nextId(char prefix, std::uint64_t& counter, const std::unordered_map<std::string, std::size_t>& taken);

  std::filesystem::path logPath_;
  std::ofstream log_;
  mutable std::shared_mutex mu_;

  std::vector<ProvEntity> entities_;
  std::unordered_map<std::string, std::size_t> entityIndex_;
  std::vector<ProvActivity> activities_;
  std::unordered_map<std::string, std::size_t> activityIndex_;
  std::vector<DerivationEdge> derivations_;
  std::unordered_map<std::size_t, std::vector<std::size_t>> parents_;  ///< entity -> edges where it is derived
  std::unordered_map<std::size_t, std::vector<std::size_t>> children_; ///< entity -> edges where it is source
  std::unordered_map<std::string, std::vector<std::size_t>> byKey_;
  std::unordered_map<std::string, std::vector<std::size_t>> byDigest_;
  std::vector<RunSummary> runs_;
  std::unordered_map<std::string, std::size_t> runIndex_;
  std::unordered_map<std::string, std::vector<std::size_t>> entitiesByRun_;
  std::vector<ProvAgent> agents_;
  std::unordered_map<std::string, std::size_t> agentIndex_;
  std::set<std::string> declared_;
  std::vector<Json> ships_;
  std::uint64_t nextEntity_ = 1;
  std::uint64_t nextActivity_ = 1;
  std::uint64_t digest_ = 1469598103934665603ull;
  bool replaying_ = false;
  std::once_flag shipHookOnce_;

  TriggerEngine triggers_;
};

/// Shell script that fetches each entity's payload from `baseUrl/blobs/<digest>`
/// and checks its digest. One `fetch` line per entity after a fixed header.
std::string bulkDownloadScript(const std::vector<ProvEntity>& entities, const std::string& baseUrl);

} // namespace verce::provenance
