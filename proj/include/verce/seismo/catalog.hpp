#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "verce/seismo/types.hpp"

namespace verce::seismo {

/// Closed latitude/longitude box; boxes crossing the antimeridian are rejected.
struct BBox {
  double minLat = -90.0;
  double maxLat = 90.0;
  double minLon = -180.0;
  double maxLon = 180.0;

  /// Errors: MalformedBBox.
  void validate() const;
  bool contains(double lat, double lon) const;
  Json toJson() const;
  static BBox fromJson(const Json& j);
};

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
  bool contains(double v) const { return v >= lo && v <= hi; }
};

struct RegionQuery {
  BBox bbox;
  std::optional<Interval> timeRange;
  std::optional<Interval> magnitudeRange;

  /// Errors: MalformedBBox, MalformedRange.
  void validate() const;
  bool matches(const EventRecord& e) const;
};

/// Events inside every constraint, newest first (eventId breaks ties).
std::vector<EventRecord> filterEvents(const std::vector<EventRecord>& events, const RegionQuery& q);
/// Stations inside the box, ordered by net.sta.
std::vector<StationMeta> filterStations(const std::vector<StationMeta>& stations, const BBox& box);

/// Fixture documents: {"events": [...]}, {"stations": [...]} and
/// {"regions": {name: bbox}}. A bare array is accepted for the first two.
/// Errors: PathUnreadable, BadParams.
std::vector<EventRecord> loadEvents(const std::filesystem::path& p);
std::vector<StationMeta> loadStations(const std::filesystem::path& p);
std::map<std::string, BBox> loadRegions(const std::filesystem::path& p);

} // namespace verce::seismo
