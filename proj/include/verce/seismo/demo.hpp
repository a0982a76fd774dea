#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "verce/enactment/enactor.hpp"
#include "verce/seismo/forward.hpp"
#include "verce/seismo/transforms.hpp"

namespace verce::seismo {

inline constexpr std::uint64_t kDefaultDemoSeed = 20150901;

/// Gaussian samples from std::mt19937_64 via Box-Muller. The engine's output
/// is fixed by the standard but its distributions are not, so this keeps demo
/// data identical across toolchains.
class SeededNoise {
public:
  explicit SeededNoise(std::uint64_t seed) : rng_(seed) {}
  double gaussian();

private:
  std::mt19937_64 rng_;
  bool hasSpare_ = false;
  double spare_ = 0.0;
};

struct NoiseDemoConfig {
  int channels = 4;
  int windows = 3;
  int windowSamples = 512;
  double dt = 0.01;
  int maxLag = 50;
  double lo = 1.0;
  double hi = 10.0;
  double noiseLevel = 0.5;
  std::uint64_t seed = kDefaultDemoSeed;
};

/// A shared random wavefield seen by every channel with a per-channel delay
/// of 3*i samples, plus independent noise.
std::vector<Trace> noiseChannels(const NoiseDemoConfig& cfg);

struct NoiseDemoResult {
  enactment::RunRecord record;
  std::vector<CorrelationResult> stacks; ///< pair order (0,1), (0,2), ..., (n-2,n-1)
  std::size_t correlationActivities = 0; ///< xcorr activities in provenance; 0 without it
};

/// Builds the all-pairs graph over noiseChannels and runs it.
/// Errors: as buildAllPairsGraph and Enactor::executeGraph; DemoFailed when
/// the run does not complete.
NoiseDemoResult runNoiseDemo(const NoiseDemoConfig& cfg, enactment::Enactor& enactor,
                             enactment::BackendKind backend = enactment::BackendKind::Sequential,
                             enactment::RunOptions options = {});

struct MisfitDemoConfig {
  double lengthMeters = 1000.0;
  double dx = 5.0;
  double velocity = 1000.0;
  double perturbation = 0.05; ///< fractional velocity change of the perturbed model
  double sourcePos = 0.0;
  std::vector<double> receivers = {300.0, 500.0, 700.0};
  RickerSource source{5.0, 0.25, 1.0};
  double courant = 0.8;
  double duration = 1.5;
  Boundary boundary = Boundary::Absorbing;
};

struct MisfitDemoRow {
  double receiver = 0.0;
  MisfitReport selfL2;  ///< reference against itself
  MisfitReport l2;      ///< perturbed against reference
  MisfitReport ccShift; ///< perturbed against reference
};

struct MisfitDemoResult {
  std::vector<Trace> reference;
  std::vector<Trace> perturbed;
  std::vector<MisfitDemoRow> rows;

  Json toJson() const;
};

/// Simulates the homogeneous model and a uniformly slowed copy, then
/// compares the two at every receiver.
MisfitDemoResult runMisfitDemo(const MisfitDemoConfig& cfg);

} // namespace verce::seismo
