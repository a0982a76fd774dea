#include "verce/seismo/demo.hpp"

#include <cmath>
#include <numbers>

#include "verce/seismo/correlation.hpp"
#include "verce/seismo/misfit.hpp"

namespace verce::seismo {

double SeededNoise::gaussian() {
  if (hasSpare_) {
    hasSpare_ = false;
    return spare_;
  }
  // 53-bit uniforms in (0, 1].
  const double u1 = (static_cast<double>(rng_() >> 11) + 1.0) * 0x1.0p-53;
  const double u2 = static_cast<double>(rng_() >> 11) * 0x1.0p-53;
  const double r = std::sqrt(-2.0 * std::log(u1));
  spare_ = r * std::sin(2.0 * std::numbers::pi * u2);
  hasSpare_ = true;
  return r * std::cos(2.0 * std::numbers::pi * u2);
}

std::vector<Trace> noiseChannels(const NoiseDemoConfig& cfg) {
  if (cfg.channels < 1 || cfg.windows < 1 || cfg.windowSamples < 1) {
    throw Error("BadParams", "noise demo needs positive channels, windows and windowSamples");
  }
  const auto n = static_cast<std::size_t>(cfg.windows) * static_cast<std::size_t>(cfg.windowSamples);
  const std::size_t maxDelay = 3 * static_cast<std::size_t>(cfg.channels - 1);
  SeededNoise rng(cfg.seed);
  Array field(n + maxDelay);
  for (double& v : field) v = rng.gaussian();
  std::vector<Trace> out;
  for (int i = 0; i < cfg.channels; ++i) {
    Trace t;
    t.net = "XN";
    t.sta = "S" + std::to_string(i);
    t.cha = "BHZ";
    t.dt = cfg.dt;
    t.startTime = 0.0;
    t.samples.resize(n);
    const std::size_t delay = 3 * static_cast<std::size_t>(i);
    for (std::size_t k = 0; k < n; ++k) t.samples[k] = field[k + maxDelay - delay] + cfg.noiseLevel * rng.gaussian();
    out.push_back(std::move(t));
  }
  return out;
}

NoiseDemoResult runNoiseDemo(const NoiseDemoConfig& cfg, enactment::Enactor& enactor, enactment::BackendKind backend,
                             enactment::RunOptions options) {
  const auto traces = noiseChannels(cfg);
  const double windowSeconds = cfg.windowSamples * cfg.dt;
  const auto graph = buildAllPairsGraph(traces, defaultPrep(cfg.lo, cfg.hi), cfg.maxLag, windowSeconds);
  if (options.metadata.is_null()) options.metadata = Json::object();
  options.metadata["demo"] = "noise";
  options.metadata["channels"] = cfg.channels;
  options.metadata["windows"] = cfg.windows;
  options.metadata["seed"] = cfg.seed;

  NoiseDemoResult res;
  res.record = enactor.executeGraph(graph, backend, std::nullopt, allPairsFeeds(traces), options);
  if (res.record.status != enactment::RunStatus::Completed) {
    const std::string why = res.record.errorLog.empty() ? std::string(enactment::statusName(res.record.status))
                                                        : res.record.errorLog.front().message;
    throw Error("DemoFailed", "noise run " + res.record.runId + " did not complete: " + why);
  }
  const auto n = static_cast<std::size_t>(cfg.channels);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const auto& units = res.record.outputs.at(stackNode(i, j) + ".out");
      if (units.size() != 1) throw Error("DemoFailed", stackNode(i, j) + " produced " + std::to_string(units.size()) + " results");
      res.stacks.push_back(CorrelationResult::fromUnit(units.front()));
    }
  }
  if (options.provenance && enactor.provStore()) {
    for (const auto& a : enactor.provStore()->activitiesOfRun(res.record.runId))
      if (a.peName == "xcorr") ++res.correlationActivities;
  }
  return res;
}

Json MisfitDemoResult::toJson() const {
  Json rowsJ = Json::array();
  for (const auto& r : rows) {
    rowsJ.push_back({{"receiver", r.receiver}, {"selfL2", r.selfL2.toJson()}, {"l2", r.l2.toJson()}, {"ccShift", r.ccShift.toJson()}});
  }
  return {{"reports", rowsJ}};
}

MisfitDemoResult runMisfitDemo(const MisfitDemoConfig& cfg) {
  const auto reference = VelocityModel1D::homogeneous(cfg.lengthMeters, cfg.dx, cfg.velocity, cfg.boundary);
  const auto slowed = VelocityModel1D::homogeneous(cfg.lengthMeters, cfg.dx, cfg.velocity * (1.0 - cfg.perturbation), cfg.boundary);
  const double cmax = std::max(cfg.velocity, cfg.velocity * (1.0 - cfg.perturbation));
  const double dt = cfg.courant * cfg.dx / cmax;
  const int nt = static_cast<int>(std::ceil(cfg.duration / dt)) + 1;

  MisfitDemoResult res;
  res.reference = forwardSimulate1D(reference, cfg.sourcePos, cfg.source, cfg.receivers, dt, nt);
  res.perturbed = forwardSimulate1D(slowed, cfg.sourcePos, cfg.source, cfg.receivers, dt, nt);
  for (std::size_t k = 0; k < cfg.receivers.size(); ++k) {
    MisfitDemoRow row;
    row.receiver = cfg.receivers[k];
    row.selfL2 = computeMisfit(res.reference[k], res.reference[k], MisfitKind::L2);
    row.l2 = computeMisfit(res.reference[k], res.perturbed[k], MisfitKind::L2);
    row.ccShift = computeMisfit(res.reference[k], res.perturbed[k], MisfitKind::CcShift);
    res.rows.push_back(std::move(row));
  }
  return res;
}

} // namespace verce::seismo
