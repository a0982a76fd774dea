#pragma once

#include <vector>

#include "verce/seismo/types.hpp"

namespace verce::seismo {

struct RickerSource {
  double f0 = 10.0; ///< peak frequency, Hz
  double t0 = 0.0;  ///< time of the peak, s
  double amplitude = 1.0;

  double at(double t) const;
  /// Highest frequency the grid has to resolve; taken as 2.5 f0.
  double maxFrequency() const { return 2.5 * f0; }
};

/// Minimum points per shortest wavelength the solver insists on.
inline constexpr double kPointsPerWavelength = 10.0;

/// Second-order centred finite differences for u_tt = c(x)^2 u_xx on nodes
/// x_i = i*dx, i = 0..cells, with the Ricker source injected at the node
/// nearest `sourcePos`. Receivers interpolate linearly between nodes and
/// record u at t = n*dt for n = 0..nt-1. Node velocities average the
/// adjacent cells. Reflecting ends are zero-slope; absorbing ends use the
/// first-order one-way wave condition.
///
/// When `energy` is given it receives, per step n = 1..nt-1,
/// dx * sum(w_i * (u_t^2 + c^2 u_x^2)) with centred u_t and one-sided u_x
/// per cell.
///
/// Errors: CFLViolation, UnresolvedWavelength, OutOfDomain, BadParams.
std::vector<Trace> forwardSimulate1D(const VelocityModel1D& model, double sourcePos, const RickerSource& source,
                                     const std::vector<double>& receiverPositions, double dt, int nt,
                                     std::vector<double>* energy = nullptr);

} // namespace verce::seismo
