#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "verce/dataflow/payload.hpp"

namespace verce::seismo {

using dataflow::Array;

/// Regularly sampled waveform. On a stream it travels as an Array payload
/// with the header in the unit metadata (see toUnit).
struct Trace {
  Array samples;
  double dt = 1.0;
  double startTime = 0.0;
  std::string net;
  std::string sta;
  std::string cha;
  std::string units = "counts";

  std::string id() const { return net + "." + sta + "." + cha; }
  double endTime() const { return samples.empty() ? startTime : startTime + dt * static_cast<double>(samples.size() - 1); }
  /// Errors: BadParams (dt not positive and finite).
  void validate() const;

  Json header() const;
  /// Everything but the samples comes from `header`. Errors: BadParams.
  static Trace fromHeader(const Json& header, Array samples);

  dataflow::DataUnit toUnit() const;
  /// Errors: UnsupportedPayload when the payload is not an Array, BadParams.
  static Trace fromUnit(const dataflow::DataUnit& u);

  /// Waveform document: header fields plus "samples".
  Json toJson() const;
  static Trace fromJson(const Json& j);
};

struct StationMeta {
  std::string net;
  std::string sta;
  double latitude = 0.0;
  double longitude = 0.0;
  double elevation = 0.0;

  /// Errors: BadParams for out-of-range coordinates.
  void validate() const;
  Json toJson() const;
  static StationMeta fromJson(const Json& j);
};

/// Standard CMT catalog fields.
struct EventRecord {
  std::string eventId;
  double originTime = 0.0;
  double latitude = 0.0;
  double longitude = 0.0;
  double depthKm = 0.0;
  double magnitude = 0.0;
  /// Mrr, Mtt, Mpp, Mrt, Mrp, Mtp.
  std::optional<std::array<double, 6>> momentTensor;

  void validate() const;
  Json toJson() const;
  static EventRecord fromJson(const Json& j);
};

/// Correlation over lags -maxLag..+maxLag samples.
struct CorrelationResult {
  Array lags;
  Array values;
  std::string pairA;
  std::string pairB;
  int windowCount = 1;
  double dt = 1.0;

  int maxLag() const { return static_cast<int>(values.size() / 2); }
  static Array lagGrid(int maxLag, double dt);

  dataflow::DataUnit toUnit() const;
  static CorrelationResult fromUnit(const dataflow::DataUnit& u);
  Json toJson() const;
};

enum class MisfitKind { L2, CcShift };

std::string_view misfitKindName(MisfitKind k);
/// Errors: BadParams.
MisfitKind misfitKindFromName(std::string_view s);

struct MisfitReport {
  MisfitKind kind = MisfitKind::L2;
  double value = 0.0;
  std::optional<double> normalizedCC;
  std::vector<double> windows;

  Json toJson() const;
};

enum class Boundary { Reflecting, Absorbing };

struct VelocityModel1D {
  double lengthMeters = 0.0;
  double dx = 1.0;
  std::vector<double> velocity; ///< m/s per cell
  Boundary boundary = Boundary::Reflecting;

  static VelocityModel1D homogeneous(double lengthMeters, double dx, double c, Boundary b = Boundary::Reflecting);
  /// Errors: BadParams (cell count mismatch, non-positive velocity or dx).
  void validate() const;
  std::size_t cells() const { return velocity.size(); }
};

} // namespace verce::seismo
