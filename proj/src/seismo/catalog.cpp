#include "verce/seismo/catalog.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <tuple>

namespace verce::seismo {

namespace {

Json readDocument(const std::filesystem::path& p) {
  std::ifstream in(p);
  if (!in) throw Error("PathUnreadable", "cannot read " + p.string());
  try {
    return Json::parse(in);
  } catch (const Json::exception& e) {
    throw Error("BadParams", p.filename().string() + " is not JSON: " + e.what());
  }
}

const Json& listIn(const Json& doc, const char* key) {
  if (doc.is_array()) return doc;
  if (doc.is_object() && doc.contains(key) && doc.at(key).is_array()) return doc.at(key);
  throw Error("BadParams", std::string("expected a list under '") + key + "'");
}

void checkRange(const Interval& r, const char* what) {
  if (!std::isfinite(r.lo) || !std::isfinite(r.hi) || r.lo > r.hi) {
    throw Error("MalformedRange", std::string(what) + " range needs finite lo <= hi");
  }
}

} // namespace

void BBox::validate() const {
  for (double v : {minLat, maxLat, minLon, maxLon})
    if (!std::isfinite(v)) throw Error("MalformedBBox", "bbox bounds must be finite");
  if (minLat < -90.0 || maxLat > 90.0) throw Error("MalformedBBox", "latitudes must lie in [-90, 90]");
  if (minLon < -180.0 || maxLon > 180.0) throw Error("MalformedBBox", "longitudes must lie in [-180, 180]");
  if (minLat > maxLat) throw Error("MalformedBBox", "minLat exceeds maxLat");
  if (minLon > maxLon) throw Error("MalformedBBox", "minLon exceeds maxLon (antimeridian wrap-around is unsupported)");
}

bool BBox::contains(double lat, double lon) const {
  return lat >= minLat && lat <= maxLat && lon >= minLon && lon <= maxLon;
}

Json BBox::toJson() const { return {{"minLat", minLat}, {"maxLat", maxLat}, {"minLon", minLon}, {"maxLon", maxLon}}; }

BBox BBox::fromJson(const Json& j) {
  try {
    BBox b{j.at("minLat").get<double>(), j.at("maxLat").get<double>(), j.at("minLon").get<double>(),
           j.at("maxLon").get<double>()};
    b.validate();
    return b;
  } catch (const Json::exception& e) {
    throw Error("MalformedBBox", std::string("bbox needs numeric minLat, maxLat, minLon, maxLon: ") + e.what());
  }
}

void RegionQuery::validate() const {
  bbox.validate();
  if (timeRange) checkRange(*timeRange, "time");
  if (magnitudeRange) checkRange(*magnitudeRange, "magnitude");
}

bool RegionQuery::matches(const EventRecord& e) const {
  return bbox.contains(e.latitude, e.longitude) && (!timeRange || timeRange->contains(e.originTime)) &&
         (!magnitudeRange || magnitudeRange->contains(e.magnitude));
}

std::vector<EventRecord> filterEvents(const std::vector<EventRecord>& events, const RegionQuery& q) {
  q.validate();
  std::vector<EventRecord> out;
  for (const auto& e : events)
    if (q.matches(e)) out.push_back(e);
  std::stable_sort(out.begin(), out.end(), [](const EventRecord& a, const EventRecord& b) {
    if (a.originTime != b.originTime) return a.originTime > b.originTime;
    return a.eventId < b.eventId;
  });
  return out;
}

std::vector<StationMeta> filterStations(const std::vector<StationMeta>& stations, const BBox& box) {
  box.validate();
  std::vector<StationMeta> out;
  for (const auto& s : stations)
    if (box.contains(s.latitude, s.longitude)) out.push_back(s);
  std::stable_sort(out.begin(), out.end(), [](const StationMeta& a, const StationMeta& b) {
    return std::tie(a.net, a.sta) < std::tie(b.net, b.sta);
  });
  return out;
}

std::vector<EventRecord> loadEvents(const std::filesystem::path& p) {
  const Json doc = readDocument(p);
  std::vector<EventRecord> out;
  try {
    for (const auto& e : listIn(doc, "events")) out.push_back(EventRecord::fromJson(e));
  } catch (const Json::exception& e) {
    throw Error("BadParams", "bad event record: " + std::string(e.what()));
  }
  return out;
}

std::vector<StationMeta> loadStations(const std::filesystem::path& p) {
  const Json doc = readDocument(p);
  std::vector<StationMeta> out;
  try {
    for (const auto& s : listIn(doc, "stations")) out.push_back(StationMeta::fromJson(s));
  } catch (const Json::exception& e) {
    throw Error("BadParams", "bad station record: " + std::string(e.what()));
  }
  return out;
}

std::map<std::string, BBox> loadRegions(const std::filesystem::path& p) {
  const Json doc = readDocument(p);
  const Json& regions = doc.is_object() && doc.contains("regions") ? doc.at("regions") : doc;
  if (!regions.is_object()) throw Error("BadParams", "regions document must map names to boxes");
  std::map<std::string, BBox> out;
  for (const auto& [name, box] : regions.items()) out.emplace(name, BBox::fromJson(box));
  return out;
}

} // namespace verce::seismo
