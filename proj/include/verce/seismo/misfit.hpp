#pragma once

#include "verce/seismo/types.hpp"

namespace verce::seismo {

/// Both traces are compared on the observed sample grid, restricted to the
/// span the synthetic covers; off-grid synthetic samples are linearly
/// interpolated.
///
/// l2: 0.5 * sum((s - o)^2) * dt.
/// ccShift: lag maximising sum(o[t] * s[t + lag]) / (|o| |s|) over every lag
/// of the common support, ties to the smaller |lag| then the negative one.
/// value = lag * dt, positive when the synthetic is late. A zero-energy
/// trace gives shift 0 and normalizedCC 0.
///
/// Errors: DtMismatch, NoOverlap, BadParams.
MisfitReport computeMisfit(const Trace& observed, const Trace& synthetic, MisfitKind kind);

} // namespace verce::seismo
