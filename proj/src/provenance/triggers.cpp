#include "verce/provenance/triggers.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <regex>

namespace verce::provenance {

namespace {

const std::set<std::string> kBuiltinKeys = {"pe", "peName", "port", "runId", "status", "errorMessage"};

bool isPayloadKey(const std::string& key) { return key.rfind("payload.", 0) == 0; }

std::string opName(Predicate::Op op) {
  switch (op) {
  case Predicate::Op::Eq: return "eq";
  case Predicate::Op::Lt: return "lt";
  case Predicate::Op::Gt: return "gt";
  case Predicate::Op::Range: return "range";
  case Predicate::Op::IsNaN: return "isNaN";
  case Predicate::Op::Matches: return "matches";
  }
  return "eq";
}

Predicate::Op opFromName(const std::string& s) {
  if (s == "eq") return Predicate::Op::Eq;
  if (s == "lt") return Predicate::Op::Lt;
  if (s == "gt") return Predicate::Op::Gt;
  if (s == "range") return Predicate::Op::Range;
  if (s == "isNaN") return Predicate::Op::IsNaN;
  if (s == "matches") return Predicate::Op::Matches;
  throw Error("InvalidPredicate", "unknown predicate op '" + s + "'");
}

std::string actionName(TriggerAction::Kind k) {
  switch (k) {
  case TriggerAction::Kind::CancelRun: return "cancelRun";
  case TriggerAction::Kind::ShipEntity: return "shipEntity";
  case TriggerAction::Kind::Notify: return "notify";
  }
  return "notify";
}

TriggerAction::Kind actionFromName(const std::string& s) {
  if (s == "cancelRun") return TriggerAction::Kind::CancelRun;
  if (s == "shipEntity") return TriggerAction::Kind::ShipEntity;
  if (s == "notify") return TriggerAction::Kind::Notify;
  throw Error("InvalidAction", "unknown trigger action '" + s + "'");
}

bool test(const Predicate& p, const Json& v) {
  const bool numeric = v.is_number();
  const double x = numeric ? v.get<double>() : std::numeric_limits<double>::quiet_NaN();
  switch (p.op) {
  case Predicate::Op::IsNaN: return numeric ? std::isnan(x) : v.is_string() && v.get<std::string>() == "NaN";
  case Predicate::Op::Lt: return numeric && p.value.is_number() && x < p.value.get<double>();
  case Predicate::Op::Gt: return numeric && p.value.is_number() && x > p.value.get<double>();
  case Predicate::Op::Range: return numeric && x >= p.lo && x <= p.hi;
  case Predicate::Op::Matches:
    return v.is_string() && std::regex_search(v.get<std::string>(), std::regex(p.value.get<std::string>()));
  case Predicate::Op::Eq:
    if (numeric && p.value.is_number()) return x == p.value.get<double>();
    return v == p.value;
  }
  return false;
}

/// JSON cannot carry NaN, so statistics are compared through a tagged value.
Json statisticValue(const std::optional<double>& s) {
  if (!s) return nullptr;
  if (std::isnan(*s)) return "NaN";
  return *s;
}

} // namespace

std::optional<double> payloadStatistic(const dataflow::Payload& p, const std::string& stat) {
  std::vector<double> values;
  if (const auto* s = std::get_if<double>(&p)) {
    values.push_back(*s);
  } else if (const auto* a = std::get_if<dataflow::Array>(&p)) {
    values = *a;
  } else {
    return std::nullopt;
  }
  if (stat == "length") return static_cast<double>(values.size());
  if (values.empty()) return std::nullopt;
  const double nan = std::numeric_limits<double>::quiet_NaN();
  bool hasNaN = false;
  double mx = -std::numeric_limits<double>::infinity(), mn = std::numeric_limits<double>::infinity(), sum = 0.0;
  for (double v : values) {
    hasNaN |= std::isnan(v);
    mx = std::max(mx, v);
    mn = std::min(mn, v);
    sum += v;
  }
  if (stat == "max") return hasNaN ? nan : mx;
  if (stat == "min") return hasNaN ? nan : mn;
  if (stat == "mean") return hasNaN ? nan : sum / static_cast<double>(values.size());
  return std::nullopt;
}

Json toJson(const TriggerRule& r) {
  Json scope = Json::object();
  if (r.runId) scope["runId"] = *r.runId;
  if (r.peName) scope["peName"] = *r.peName;
  Json pred = {{"key", r.predicate.key}, {"op", opName(r.predicate.op)}};
  if (r.predicate.op == Predicate::Op::Range) {
    pred["range"] = {r.predicate.lo, r.predicate.hi};
  } else if (r.predicate.op != Predicate::Op::IsNaN) {
    pred["value"] = r.predicate.value;
  }
  return {{"ruleId", r.ruleId},
          {"scope", scope},
          {"predicate", pred},
          {"action", {{"kind", actionName(r.action.kind)}, {"target", r.action.target}}}};
}

TriggerRule triggerRuleFromJson(const Json& j) {
  TriggerRule r;
  r.ruleId = j.at("ruleId").get<std::string>();
  const auto scope = j.value("scope", Json::object());
  if (scope.contains("runId")) r.runId = scope.at("runId").get<std::string>();
  if (scope.contains("peName")) r.peName = scope.at("peName").get<std::string>();
  const auto& p = j.at("predicate");
  r.predicate.key = p.at("key").get<std::string>();
  r.predicate.op = opFromName(p.at("op").get<std::string>());
  if (r.predicate.op == Predicate::Op::Range) {
    r.predicate.lo = p.at("range").at(0).get<double>();
    r.predicate.hi = p.at("range").at(1).get<double>();
  } else if (p.contains("value")) {
    r.predicate.value = p.at("value");
  }
  const auto& a = j.at("action");
  r.action.kind = actionFromName(a.at("kind").get<std::string>());
  r.action.target = a.value("target", "");
  return r;
}

Json toJson(const FiredAction& f) {
  return {{"ruleId", f.ruleId},
          {"action", actionName(f.action.kind)},
          {"target", f.action.target},
          {"runId", f.runId},
          {"recordId", f.recordId}};
}

void TriggerEngine::registerTrigger(TriggerRule rule, const std::set<std::string>& declaredKeys) {
  const auto& key = rule.predicate.key;
  const bool known = kBuiltinKeys.count(key) || declaredKeys.count(key) ||
                     (isPayloadKey(key) && payloadStatistic(dataflow::Array{0.0}, key.substr(8)).has_value());
  if (!known) throw Error("InvalidPredicateKey", "predicate references undeclared key '" + key + "'");
  if (rule.predicate.op == Predicate::Op::Range && rule.predicate.lo > rule.predicate.hi) {
    throw Error("MalformedRange", "trigger range has lo > hi");
  }
  if (rule.predicate.op == Predicate::Op::Matches) {
    if (!rule.predicate.value.is_string()) throw Error("InvalidPredicate", "matches needs a pattern string");
    try {
      std::regex check(rule.predicate.value.get<std::string>());
    } catch (const std::regex_error& e) {
      throw Error("InvalidPredicate", std::string("bad pattern: ") + e.what());
    }
  }
  std::lock_guard lock(mu_);
  if (rule.action.kind == TriggerAction::Kind::ShipEntity && !sinks_.count(rule.action.target)) {
    throw Error("UnknownSink", "no sink named '" + rule.action.target + "'");
  }
  auto id = rule.ruleId;
  rules_.insert_or_assign(std::move(id), std::move(rule));
}

void TriggerEngine::removeTrigger(const std::string& ruleId) {
  std::lock_guard lock(mu_);
  rules_.erase(ruleId);
}

std::vector<TriggerRule> TriggerEngine::rules() const {
  std::lock_guard lock(mu_);
  std::vector<TriggerRule> out;
  for (const auto& [_, r] : rules_) out.push_back(r);
  return out;
}

void TriggerEngine::addSink(const std::string& name, std::filesystem::path dir) {
  std::lock_guard lock(mu_);
  sinks_[name] = std::move(dir);
}

void TriggerEngine::setCancelHandler(CancelHandler h) {
  std::lock_guard lock(mu_);
  onCancel_ = std::move(h);
}

void TriggerEngine::setFiredHandler(FiredHandler h) {
  std::lock_guard lock(mu_);
  onFired_ = std::move(h);
}

void TriggerEngine::setShipRecorder(ShipRecorder h) {
  std::lock_guard lock(mu_);
  onShip_ = std::move(h);
}

bool TriggerEngine::inScope(const TriggerRule& r, const ProvActivity& a) const {
  if (r.runId && *r.runId != a.runId) return false;
  if (r.peName && *r.peName != a.peName) return false;
  return true;
}

std::vector<FiredAction> TriggerEngine::evaluate(const FreshRecord& record) {
  std::vector<TriggerRule> rules;
  std::map<std::string, std::filesystem::path> sinks;
  CancelHandler onCancel;
  FiredHandler onFired;
  ShipRecorder onShip;
  {
    std::lock_guard lock(mu_);
    if (rules_.empty() || !record.activity) return {};
    for (const auto& [_, r] : rules_) rules.push_back(r);
    sinks = sinks_;
    onCancel = onCancel_;
    onFired = onFired_;
    onShip = onShip_;
  }
  const auto& act = *record.activity;

  std::vector<FiredAction> fired;
  auto fire = [&](const TriggerRule& rule, const std::string& recordId, const FreshEntity* fresh) {
    FiredAction f{rule.ruleId, rule.action, act.runId, recordId};
    switch (rule.action.kind) {
    case TriggerAction::Kind::CancelRun:
      if (onCancel) onCancel(act.runId, "trigger " + rule.ruleId + " matched " + recordId);
      break;
    case TriggerAction::Kind::ShipEntity:
      if (fresh && fresh->entity) {
        const auto& dir = sinks.at(rule.action.target);
        std::filesystem::create_directories(dir);
        const auto path = dir / (fresh->entity->entityId + ".json");
        Json doc = {{"entity", provenance::toJson(*fresh->entity)},
                    {"payload", fresh->payload ? dataflow::payloadToJson(*fresh->payload) : Json(nullptr)}};
        std::ofstream(path, std::ios::trunc) << canonicalDump(doc);
        if (onShip) onShip(f, path);
      }
      break;
    case TriggerAction::Kind::Notify: break;
    }
    if (onFired) onFired(f);
    fired.push_back(std::move(f));
  };

  for (const auto& rule : rules) {
    if (!inScope(rule, act)) continue;
    const auto& key = rule.predicate.key;
    for (const auto& fresh : record.entities) {
      Json value;
      if (isPayloadKey(key)) {
        if (!fresh.payload) continue;
        value = statisticValue(payloadStatistic(*fresh.payload, key.substr(8)));
      } else {
        auto it = fresh.entity->metadata.find(key);
        if (it == fresh.entity->metadata.end()) continue;
        value = *it;
      }
      if (test(rule.predicate, value)) fire(rule, fresh.entity->entityId, &fresh);
    }
    if (record.entities.empty() && act.status == ActivityStatus::Error && !isPayloadKey(key)) {
      const Json ctx = {{"pe", act.peInstanceId},
                        {"peName", act.peName},
                        {"runId", act.runId},
                        {"status", "error"},
                        {"errorMessage", act.errorMessage.value_or("")}};
      if (auto it = ctx.find(key); it != ctx.end() && test(rule.predicate, *it)) fire(rule, act.activityId, nullptr);
    }
  }
  return fired;
}

} // namespace verce::provenance
