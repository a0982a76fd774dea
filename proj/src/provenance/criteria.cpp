#include "verce/provenance/criteria.hpp"

#include <cmath>

namespace verce::provenance {

namespace {

double bound(const Json& v, const std::string& key) {
  if (!v.is_number()) throw Error("MalformedRange", "range bound for '" + key + "' must be numeric");
  return v.get<double>();
}

} // namespace

void Criteria::addRange(const std::string& key, double lo, double hi) {
  if (std::isnan(lo) || std::isnan(hi) || lo > hi) {
    throw Error("MalformedRange", "range for '" + key + "' has lo > hi");
  }
  conditions_[key] = Condition{true, lo, hi, {}};
}

void Criteria::addExact(const std::string& key, Json value) { conditions_[key] = Condition{false, 0, 0, std::move(value)}; }

Criteria Criteria::fromJson(const Json& j) {
  Criteria c;
  if (j.is_null()) return c;
  if (!j.is_object()) throw Error("MalformedRange", "criteria must be an object");
  for (const auto& [key, v] : j.items()) {
    if (v.is_array()) {
      if (v.size() != 2) throw Error("MalformedRange", "range for '" + key + "' must be [lo, hi]");
      c.addRange(key, bound(v[0], key), bound(v[1], key));
    } else if (v.is_object()) {
      c.addRange(key, bound(v.at("min"), key), bound(v.at("max"), key));
    } else {
      c.addExact(key, v);
    }
  }
  return c;
}

bool Criteria::matches(const Json& metadata) const {
  if (!metadata.is_object()) return conditions_.empty();
  for (const auto& [key, cond] : conditions_) {
    auto it = metadata.find(key);
    if (it == metadata.end()) return false;
    if (cond.isRange) {
      if (!it->is_number()) return false;
      const double v = it->get<double>();
      if (!(v >= cond.lo && v <= cond.hi)) return false;
    } else if (cond.exact.is_number() && it->is_number()) {
      if (it->get<double>() != cond.exact.get<double>()) return false;
    } else if (*it != cond.exact) {
      return false;
    }
  }
  return true;
}

Json Criteria::toJson() const {
  Json j = Json::object();
  for (const auto& [key, cond] : conditions_) j[key] = cond.isRange ? Json::array({cond.lo, cond.hi}) : cond.exact;
  return j;
}

} // namespace verce::provenance
