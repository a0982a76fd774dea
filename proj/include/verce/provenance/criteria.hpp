#pragma once

#include <map>
#include <string>

#include "verce/common.hpp"

namespace verce::provenance {

/// Conjunction of per-key conditions over a metadata record. Numbers and
/// timestamps (epoch seconds) match closed intervals; strings and booleans
/// match exactly. An absent key matches nothing.
///
/// JSON form: `{"magnitude": [5.0, 7.0], "station": "NET.STA1"}`; a range may
/// also be written `{"min": lo, "max": hi}`.
class Criteria {
public:
  struct Condition {
    bool isRange = false;
    double lo = 0.0;
    double hi = 0.0;
    Json exact;
  };

  Criteria() = default;
  /// Throws MalformedRange when lo > hi or a range bound is not numeric.
  static Criteria fromJson(const Json& j);

  void addRange(const std::string& key, double lo, double hi);
  void addExact(const std::string& key, Json value);

  bool matches(const Json& metadata) const;
  bool empty() const noexcept { return conditions_.empty(); }
  const std::map<std::string, Condition>& conditions() const noexcept { return conditions_; }
  Json toJson() const;

private:
  std::map<std::string, Condition> conditions_;
};

} // namespace verce::provenance
