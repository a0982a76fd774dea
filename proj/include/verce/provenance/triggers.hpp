#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "verce/dataflow/payload.hpp"
#include "verce/provenance/model.hpp"

namespace verce::provenance {

/// Condition on one freshly recorded entity (or, for failed steps with no
/// outputs, the activity). `key` is either a metadata key or one of the
/// payload statistics `payload.max`, `payload.min`, `payload.mean`,
/// `payload.length`. Statistics over arrays propagate NaN.
struct Predicate {
  enum class Op { Eq, Lt, Gt, Range, IsNaN, Matches };
  std::string key;
  Op op = Op::Eq;
  Json value;          ///< Eq / Lt / Gt operand; Matches pattern (ECMAScript regex)
  double lo = 0.0;     ///< Range
  double hi = 0.0;     ///< Range
};

struct TriggerAction {
  enum class Kind { CancelRun, ShipEntity, Notify };
  Kind kind = Kind::Notify;
  std::string target; ///< sink name (ShipEntity) or channel (Notify)
};

struct TriggerRule {
  std::string ruleId;
  std::optional<std::string> runId;  ///< scope: one run
  std::optional<std::string> peName; ///< scope: activities of one PE
  Predicate predicate;
  TriggerAction action;
};

struct FiredAction {
  std::string ruleId;
  TriggerAction action;
  std::string runId;
  std::string recordId; ///< entity id, or activity id for failed steps
};

/// One entity just appended, together with the payload it digests.
struct FreshEntity {
  const ProvEntity* entity = nullptr;
  const dataflow::Payload* payload = nullptr;
};

struct FreshRecord {
  const ProvActivity* activity = nullptr;
  std::vector<FreshEntity> entities;
};

Json toJson(const TriggerRule& r);
TriggerRule triggerRuleFromJson(const Json& j);
Json toJson(const FiredAction& f);

std::optional<double> payloadStatistic(const dataflow::Payload& p, const std::string& stat);

/// Holds rules and sinks, evaluates rules against fresh records and carries
/// out their actions. Owned by the provenance store, which calls `evaluate`
/// synchronously from recordStep.
class TriggerEngine {
public:
  using CancelHandler = std::function<void(const std::string& runId, const std::string& reason)>;
  using FiredHandler = std::function<void(const FiredAction&)>;
  using ShipRecorder = std::function<void(const FiredAction&, const std::filesystem::path& written)>;

  /// `declaredKeys` are the metadata keys a predicate may reference.
  void registerTrigger(TriggerRule rule, const std::set<std::string>& declaredKeys);
  void removeTrigger(const std::string& ruleId);
  std::vector<TriggerRule> rules() const;

  void addSink(const std::string& name, std::filesystem::path dir);

  void setCancelHandler(CancelHandler h);
  void setFiredHandler(FiredHandler h);
  void setShipRecorder(ShipRecorder h);

  std::vector<FiredAction> evaluate(const FreshRecord& record);

private:
  bool inScope(const TriggerRule& r, const ProvActivity& a) const;

  mutable std::mutex mu_;
  std::map<std::string, TriggerRule> rules_;
  std::map<std::string, std::filesystem::path> sinks_;
  CancelHandler onCancel_;
  FiredHandler onFired_;
  ShipRecorder onShip_;
};

} // namespace verce::provenance
