#include "verce/seismo/types.hpp"

#include <cmath>

namespace verce::seismo {

namespace {

Error bad(const std::string& msg) { return Error("BadParams", msg); }

bool finitePositive(double v) { return std::isfinite(v) && v > 0.0; }

} // namespace

void Trace::validate() const {
  if (!finitePositive(dt)) throw bad("trace dt must be positive, got " + std::to_string(dt));
  if (!std::isfinite(startTime)) throw bad("trace startTime must be finite");
}

Json Trace::header() const {
  return {{"net", net}, {"sta", sta}, {"cha", cha}, {"dt", dt}, {"startTime", startTime}, {"units", units},
          {"npts", samples.size()}};
}

Trace Trace::fromHeader(const Json& h, Array s) {
  Trace t;
  try {
    t.net = h.value("net", "");
    t.sta = h.value("sta", "");
    t.cha = h.value("cha", "");
    t.units = h.value("units", "counts");
    t.dt = h.at("dt").get<double>();
    t.startTime = h.value("startTime", 0.0);
  } catch (const Json::exception& e) {
    throw bad(std::string("bad trace header: ") + e.what());
  }
  t.samples = std::move(s);
  t.validate();
  return t;
}

dataflow::DataUnit Trace::toUnit() const {
  Json meta = header();
  meta["kind"] = "trace";
  meta["id"] = id();
  return {samples, std::move(meta), {}, 0};
}

Trace Trace::fromUnit(const dataflow::DataUnit& u) {
  const auto* a = std::get_if<Array>(&u.payload);
  if (!a) throw Error("UnsupportedPayload", "expected a trace (array payload), got " + std::string(dataflow::payloadKindName(u.payload)));
  return fromHeader(u.metadata, *a);
}

Json Trace::toJson() const {
  Json j = header();
  Json s = Json::array();
  for (double x : samples) s.push_back(dataflow::numberToJson(x));
  j["samples"] = std::move(s);
  return j;
}

Trace Trace::fromJson(const Json& j) {
  Array s;
  for (const auto& x : j.at("samples")) s.push_back(dataflow::numberFromJson(x));
  return fromHeader(j, std::move(s));
}

void StationMeta::validate() const {
  if (!(latitude >= -90.0 && latitude <= 90.0)) throw bad("station latitude out of range");
  if (!(longitude >= -180.0 && longitude <= 180.0)) throw bad("station longitude out of range");
  if (!std::isfinite(elevation)) throw bad("station elevation must be finite");
}

Json StationMeta::toJson() const {
  return {{"net", net}, {"sta", sta}, {"latitude", latitude}, {"longitude", longitude}, {"elevation", elevation}};
}

StationMeta StationMeta::fromJson(const Json& j) {
  StationMeta s{j.at("net").get<std::string>(), j.at("sta").get<std::string>(), j.at("latitude").get<double>(),
                j.at("longitude").get<double>(), j.value("elevation", 0.0)};
  s.validate();
  return s;
}

void EventRecord::validate() const {
  if (!(latitude >= -90.0 && latitude <= 90.0)) throw bad("event latitude out of range");
  if (!(longitude >= -180.0 && longitude <= 180.0)) throw bad("event longitude out of range");
  if (!(depthKm >= 0.0) || !std::isfinite(depthKm)) throw bad("event depth must be non-negative");
  if (!std::isfinite(magnitude)) throw bad("event magnitude must be finite");
}

Json EventRecord::toJson() const {
  Json j = {{"eventId", eventId}, {"originTime", originTime}, {"latitude", latitude}, {"longitude", longitude},
            {"depthKm", depthKm}, {"magnitude", magnitude}};
  j["momentTensor"] = momentTensor ? Json(*momentTensor) : Json(nullptr);
  return j;
}

EventRecord EventRecord::fromJson(const Json& j) {
  EventRecord e;
  e.eventId = j.at("eventId").get<std::string>();
  e.originTime = j.at("originTime").get<double>();
  e.latitude = j.at("latitude").get<double>();
  e.longitude = j.at("longitude").get<double>();
  e.depthKm = j.at("depthKm").get<double>();
  e.magnitude = j.at("magnitude").get<double>();
  if (j.contains("momentTensor") && !j.at("momentTensor").is_null()) e.momentTensor = j.at("momentTensor").get<std::array<double, 6>>();
  e.validate();
  return e;
}

Array CorrelationResult::lagGrid(int maxLag, double dt) {
  Array lags(static_cast<std::size_t>(2 * maxLag + 1));
  for (int k = -maxLag; k <= maxLag; ++k) lags[static_cast<std::size_t>(k + maxLag)] = k * dt;
  return lags;
}

dataflow::DataUnit CorrelationResult::toUnit() const {
  Json meta = {{"kind", "correlation"}, {"pairA", pairA}, {"pairB", pairB}, {"windowCount", windowCount},
               {"dt", dt}, {"maxLag", maxLag()}};
  return {values, std::move(meta), {}, 0};
}

CorrelationResult CorrelationResult::fromUnit(const dataflow::DataUnit& u) {
  const auto* a = std::get_if<Array>(&u.payload);
  if (!a) throw Error("UnsupportedPayload", "expected a correlation (array payload)");
  CorrelationResult r;
  r.values = *a;
  r.pairA = u.metadata.value("pairA", "");
  r.pairB = u.metadata.value("pairB", "");
  r.windowCount = u.metadata.value("windowCount", 1);
  r.dt = u.metadata.value("dt", 1.0);
  r.lags = lagGrid(r.maxLag(), r.dt);
  return r;
}

Json CorrelationResult::toJson() const {
  Json l = Json::array(), v = Json::array();
  for (double x : lags) l.push_back(dataflow::numberToJson(x));
  for (double x : values) v.push_back(dataflow::numberToJson(x));
  return {{"pair", {pairA, pairB}}, {"windowCount", windowCount}, {"dt", dt}, {"lags", l}, {"values", v}};
}

std::string_view misfitKindName(MisfitKind k) { return k == MisfitKind::L2 ? "l2" : "ccShift"; }

MisfitKind misfitKindFromName(std::string_view s) {
  if (s == "l2") return MisfitKind::L2;
  if (s == "ccShift") return MisfitKind::CcShift;
  throw bad("unknown misfit kind '" + std::string(s) + "'");
}

Json MisfitReport::toJson() const {
  Json j = {{"kind", misfitKindName(kind)}, {"value", dataflow::numberToJson(value)}, {"windows", windows}};
  j["normalizedCC"] = normalizedCC ? Json(*normalizedCC) : Json(nullptr);
  return j;
}

VelocityModel1D VelocityModel1D::homogeneous(double lengthMeters, double dx, double c, Boundary b) {
  VelocityModel1D m;
  m.lengthMeters = lengthMeters;
  m.dx = dx;
  m.boundary = b;
  m.velocity.assign(static_cast<std::size_t>(std::llround(lengthMeters / dx)), c);
  return m;
}

void VelocityModel1D::validate() const {
  if (!finitePositive(dx)) throw bad("model dx must be positive");
  if (!finitePositive(lengthMeters)) throw bad("model length must be positive");
  const double cellsExact = lengthMeters / dx;
  if (std::fabs(cellsExact - std::round(cellsExact)) > 1e-9 * cellsExact ||
      velocity.size() != static_cast<std::size_t>(std::llround(cellsExact))) {
    throw bad("model needs lengthMeters/dx velocity cells, got " + std::to_string(velocity.size()));
  }
  for (double c : velocity)
    if (!finitePositive(c)) throw bad("model velocities must be positive");
}

} // namespace verce::seismo
