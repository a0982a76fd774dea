#include "verce/seismo/forward.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace verce::seismo {

double RickerSource::at(double t) const {
  const double a = std::numbers::pi * f0 * (t - t0);
  const double a2 = a * a;
  return amplitude * (1.0 - 2.0 * a2) * std::exp(-a2);
}

std::vector<Trace> forwardSimulate1D(const VelocityModel1D& model, double sourcePos, const RickerSource& source,
                                     const std::vector<double>& receivers, double dt, int nt, std::vector<double>* energy) {
  model.validate();
  if (!(dt > 0.0) || !std::isfinite(dt)) throw Error("BadParams", "dt must be positive");
  if (nt < 1) throw Error("BadParams", "nt must be at least 1");
  if (!(source.f0 > 0.0) || !std::isfinite(source.t0) || !std::isfinite(source.amplitude)) {
    throw Error("BadParams", "Ricker source needs f0 > 0 and finite t0, amplitude");
  }
  const double L = model.lengthMeters, dx = model.dx;
  auto inDomain = [&](double x) { return x >= 0.0 && x <= L; };
  if (!inDomain(sourcePos)) throw Error("OutOfDomain", "source position " + std::to_string(sourcePos) + " outside [0, length]");
  for (double r : receivers)
    if (!inDomain(r)) throw Error("OutOfDomain", "receiver position " + std::to_string(r) + " outside [0, length]");

  const auto& v = model.velocity;
  const double cmax = *std::max_element(v.begin(), v.end()), cmin = *std::min_element(v.begin(), v.end());
  const double courant = cmax * dt / dx;
  if (courant > 1.0 + 1e-12) throw Error("CFLViolation", "max(c)*dt/dx = " + std::to_string(courant) + " exceeds 1");
  const double lambdaMin = cmin / source.maxFrequency();
  if (lambdaMin < kPointsPerWavelength * dx * (1.0 - 1e-12)) {
    throw Error("UnresolvedWavelength", "shortest wavelength " + std::to_string(lambdaMin) + " m spans fewer than " +
                                            std::to_string(static_cast<int>(kPointsPerWavelength)) + " grid points");
  }

  const std::size_t cells = model.cells(), nodes = cells + 1;
  std::vector<double> c2(nodes), r2(nodes);
  for (std::size_t i = 0; i < nodes; ++i) {
    const double c = i == 0 ? v[0] : (i == cells ? v[cells - 1] : 0.5 * (v[i - 1] + v[i]));
    c2[i] = c * c;
    r2[i] = c2[i] * dt * dt / (dx * dx);
  }
  const auto src = static_cast<std::size_t>(std::llround(sourcePos / dx));
  const bool absorbing = model.boundary == Boundary::Absorbing;

  std::vector<double> prev(nodes, 0.0), cur(nodes, 0.0), next(nodes, 0.0);
  std::vector<Trace> out(receivers.size());
  for (std::size_t k = 0; k < receivers.size(); ++k) {
    out[k].dt = dt;
    out[k].startTime = 0.0;
    out[k].net = "FD";
    out[k].sta = "R" + std::to_string(k);
    out[k].cha = "HXZ";
    out[k].units = "m";
    out[k].samples.reserve(static_cast<std::size_t>(nt));
  }
  auto record = [&](const std::vector<double>& u) {
    for (std::size_t k = 0; k < receivers.size(); ++k) {
      const double f = receivers[k] / dx;
      const auto i = std::min(static_cast<std::size_t>(std::floor(f)), cells);
      const double w = f - static_cast<double>(i);
      const double value = i == cells ? u[cells] : (1.0 - w) * u[i] + w * u[i + 1];
      out[k].samples.push_back(value);
    }
  };
  if (energy) energy->clear();

  record(cur);
  for (int n = 0; n + 1 < nt; ++n) {
    for (std::size_t i = 1; i < cells; ++i) {
      next[i] = 2.0 * cur[i] - prev[i] + r2[i] * (cur[i + 1] - 2.0 * cur[i] + cur[i - 1]);
    }
    if (absorbing) {
      const double k0 = (std::sqrt(r2[0]) - 1.0) / (std::sqrt(r2[0]) + 1.0);
      const double kN = (std::sqrt(r2[cells]) - 1.0) / (std::sqrt(r2[cells]) + 1.0);
      next[0] = cur[1] + k0 * (next[1] - cur[0]);
      next[cells] = cur[cells - 1] + kN * (next[cells - 1] - cur[cells]);
    } else {
      next[0] = 2.0 * cur[0] - prev[0] + 2.0 * r2[0] * (cur[1] - cur[0]);
      next[cells] = 2.0 * cur[cells] - prev[cells] + 2.0 * r2[cells] * (cur[cells - 1] - cur[cells]);
    }
    next[src] += dt * dt * source.at(n * dt) / dx;

    if (energy && n >= 1) {
      double kinetic = 0.0, strain = 0.0;
      for (std::size_t i = 0; i < nodes; ++i) {
        const double ut = (next[i] - prev[i]) / (2.0 * dt);
        const double w = (i == 0 || i == cells) ? 0.5 : 1.0;
        kinetic += w * ut * ut;
      }
      for (std::size_t i = 0; i < cells; ++i) {
        const double ux = (cur[i + 1] - cur[i]) / dx;
        strain += v[i] * v[i] * ux * ux;
      }
      energy->push_back((kinetic + strain) * dx);
    }
    std::swap(prev, cur);
    std::swap(cur, next);
    record(cur);
  }
  return out;
}

} // namespace verce::seismo
