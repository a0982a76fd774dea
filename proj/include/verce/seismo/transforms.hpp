#pragma once

#include <string_view>
#include <vector>

#include "verce/seismo/types.hpp"

namespace verce::seismo {

enum class TransformKind { Demean, Detrend, Taper, Bandpass, Decimate, Whiten, OneBit };

std::string_view transformName(TransformKind k);
/// Errors: BadParams.
TransformKind transformFromName(std::string_view s);
std::vector<TransformKind> allTransforms();

/// Parameters by kind:
///   taper     fraction (0, 0.5], default 0.05; Hann ramps of floor(fraction*n)
///   bandpass  lo, hi in Hz with 0 < lo < hi < Nyquist; order 4, two passes
///   decimate  factor integer >= 2; order-4 low-pass at 0.4/(dt*factor) first
///   whiten    smoothBins odd >= 1, default 11
/// Errors: BadParams, TooShort.
Trace applyTraceTransform(TransformKind kind, const Json& params, const Trace& trace);

struct PrepStep {
  TransformKind kind;
  Json params = Json::object();
};
using PrepDescriptor = std::vector<PrepStep>;

/// demean, detrend, taper(0.05), bandpass(lo, hi).
PrepDescriptor defaultPrep(double lo, double hi);
Json prepToJson(const PrepDescriptor& p);
PrepDescriptor prepFromJson(const Json& j);
Trace applyPrep(const PrepDescriptor& p, Trace t);

/// Sections of a zero-phase Butterworth filter, exposed for tests.
struct Biquad {
  double b0, b1, b2, a1, a2; ///< a0 normalised to 1
};
std::vector<Biquad> butterworthLowpass4(double cornerHz, double sampleRate);
std::vector<Biquad> butterworthHighpass4(double cornerHz, double sampleRate);
/// Forward then backward pass over odd-extended data.
Array filtfilt(const std::vector<Biquad>& sections, const Array& x, std::size_t padLength);

} // namespace verce::seismo
