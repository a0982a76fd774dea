#include "verce/seismo/misfit.hpp"

#include <algorithm>
#include <cmath>

namespace verce::seismo {

namespace {

struct Support {
  Array obs;
  Array syn;
};

Support commonSupport(const Trace& o, const Trace& s) {
  Support out;
  const double eps = 1e-6;
  const auto ns = static_cast<double>(s.samples.size());
  for (std::size_t i = 0; i < o.samples.size(); ++i) {
    const double t = o.startTime + static_cast<double>(i) * o.dt;
    const double f = (t - s.startTime) / s.dt;
    if (f < -eps || f > ns - 1.0 + eps) continue;
    const double r = std::round(f);
    double v;
    if (std::fabs(f - r) <= eps) {
      v = s.samples[static_cast<std::size_t>(r)];
    } else {
      const auto k = static_cast<std::size_t>(std::floor(f));
      const double w = f - static_cast<double>(k);
      v = (1.0 - w) * s.samples[k] + w * s.samples[k + 1];
    }
    out.obs.push_back(o.samples[i]);
    out.syn.push_back(v);
  }
  return out;
}

} // namespace

MisfitReport computeMisfit(const Trace& observed, const Trace& synthetic, MisfitKind kind) {
  observed.validate();
  synthetic.validate();
  if (std::fabs(observed.dt - synthetic.dt) > 1e-9 * std::max(observed.dt, synthetic.dt)) {
    throw Error("DtMismatch", "observed dt " + std::to_string(observed.dt) + " differs from synthetic dt " +
                                  std::to_string(synthetic.dt));
  }
  const auto sup = commonSupport(observed, synthetic);
  if (sup.obs.empty()) throw Error("NoOverlap", "observed and synthetic traces share no time span");
  const auto& o = sup.obs;
  const auto& s = sup.syn;
  const double dt = observed.dt;

  MisfitReport r;
  r.kind = kind;
  if (kind == MisfitKind::L2) {
    double sum = 0.0;
    for (std::size_t i = 0; i < o.size(); ++i) sum += (s[i] - o[i]) * (s[i] - o[i]);
    r.value = 0.5 * sum * dt;
    return r;
  }

  double eo = 0.0, es = 0.0;
  for (std::size_t i = 0; i < o.size(); ++i) {
    eo += o[i] * o[i];
    es += s[i] * s[i];
  }
  r.value = 0.0;
  r.normalizedCC = 0.0;
  if (eo == 0.0 || es == 0.0) return r;
  const double norm = std::sqrt(eo) * std::sqrt(es);
  const auto m = static_cast<long long>(o.size());
  long long best = 0;
  double bestValue = -2.0;
  // Visit 0, -1, +1, -2, +2, ... so a strict improvement test gives the tie-break.
  for (long long k = 0; k < 2 * m - 1; ++k) {
    const long long lag = (k % 2 == 0) ? k / 2 : -(k + 1) / 2;
    double c = 0.0;
    for (long long t = std::max(0LL, -lag); t < std::min(m, m - lag); ++t) {
      c += o[static_cast<std::size_t>(t)] * s[static_cast<std::size_t>(t + lag)];
    }
    const double v = std::clamp(c / norm, -1.0, 1.0);
    if (v > bestValue) {
      bestValue = v;
      best = lag;
    }
  }
  r.value = static_cast<double>(best) * dt;
  r.normalizedCC = bestValue;
  return r;
}

} // namespace verce::seismo
