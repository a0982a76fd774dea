#pragma once

#include "verce/dataflow/library.hpp"

namespace verce::seismo {

/// Seismology PEs. Traces travel as Trace::toUnit units.
///
///   trace_window {windowSeconds}  in -> out, one unit per window, metadata "window" = index
///   trace_prep {steps}            in -> out, applies a prep descriptor, keeps "window"
///   demean, detrend, taper, bandpass, decimate, whiten, onebit   single transforms
///   xcorr {maxLag}                a, b -> out, pairs units by "window" (arrival order without it)
///   stack                         in -> out, one stacked correlation when the input closes
///   misfit {kind}                 obs, syn -> out, scalar value with the report as metadata
void addSeismoPEs(dataflow::PeLibrary& lib);

/// Library holding only the seismology PEs.
const dataflow::PeLibrary& seismoPEs();

} // namespace verce::seismo
