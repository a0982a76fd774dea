#include "verce/seismo/transforms.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <mutex>
#include <numbers>

namespace verce::seismo {

namespace {

Error bad(const std::string& msg) { return Error("BadParams", msg); }

void needSamples(const Trace& t, std::size_t n, std::string_view what) {
  if (t.samples.size() < n) {
    throw Error("TooShort", std::string(what) + " needs at least " + std::to_string(n) + " samples, trace has " +
                                std::to_string(t.samples.size()));
  }
}

double numberParam(const Json& params, const char* key) {
  if (!params.is_object() || !params.contains(key) || !params.at(key).is_number()) {
    throw bad(std::string("missing numeric parameter '") + key + "'");
  }
  return params.at(key).get<double>();
}

double numberParamOr(const Json& params, const char* key, double fallback) {
  if (!params.is_object() || !params.contains(key)) return fallback;
  if (!params.at(key).is_number()) throw bad(std::string("parameter '") + key + "' must be numeric");
  return params.at(key).get<double>();
}

long long integerParamOr(const Json& params, const char* key, long long fallback) {
  if (!params.is_object() || !params.contains(key)) return fallback;
  const auto& v = params.at(key);
  if (v.is_number_integer()) return v.get<long long>();
  if (v.is_number_float() && std::floor(v.get<double>()) == v.get<double>()) return static_cast<long long>(v.get<double>());
  throw bad(std::string("parameter '") + key + "' must be an integer");
}

// FFTW's planner is not thread-safe; execution on distinct plans is.
std::mutex& plannerMutex() {
  static std::mutex m;
  return m;
}

void demean(Array& x) {
  double s = 0.0;
  for (double v : x) s += v;
  const double mean = s / static_cast<double>(x.size());
  for (double& v : x) v -= mean;
}

void detrend(Array& x) {
  const double n = static_cast<double>(x.size());
  // Least-squares line over i = 0..n-1, centred to keep the sums small.
  const double ic = (n - 1.0) / 2.0;
  double sy = 0.0, sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double d = static_cast<double>(i) - ic;
    sy += x[i];
    sxy += d * x[i];
    sxx += d * d;
  }
  const double slope = sxx > 0.0 ? sxy / sxx : 0.0;
  const double mean = sy / n;
  for (std::size_t i = 0; i < x.size(); ++i) x[i] -= mean + slope * (static_cast<double>(i) - ic);
}

void taper(Array& x, double fraction) {
  const std::size_t n = x.size();
  const auto m = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(n)));
  for (std::size_t i = 0; i < m; ++i) {
    const double w = 0.5 * (1.0 - std::cos(std::numbers::pi * static_cast<double>(i) / static_cast<double>(m)));
    x[i] *= w;
    x[n - 1 - i] *= w;
  }
}

Biquad section(double cornerHz, double fs, double q, bool high) {
  const double w0 = 2.0 * std::numbers::pi * cornerHz / fs;
  const double c = std::cos(w0), alpha = std::sin(w0) / (2.0 * q);
  const double a0 = 1.0 + alpha;
  const double b0 = high ? (1.0 + c) / 2.0 : (1.0 - c) / 2.0;
  const double b1 = high ? -(1.0 + c) : 1.0 - c;
  return {b0 / a0, b1 / a0, b0 / a0, -2.0 * c / a0, (1.0 - alpha) / a0};
}

// Pole-pair quality factors of a 4th-order Butterworth prototype.
const double kQ1 = 1.0 / (2.0 * std::cos(std::numbers::pi / 8.0));
const double kQ2 = 1.0 / (2.0 * std::cos(3.0 * std::numbers::pi / 8.0));

void runSections(const std::vector<Biquad>& sections, Array& x) {
  for (const auto& s : sections) {
    double z1 = 0.0, z2 = 0.0;
    for (double& v : x) {
      const double y = s.b0 * v + z1;
      z1 = s.b1 * v - s.a1 * y + z2;
      z2 = s.b2 * v - s.a2 * y;
      v = y;
    }
  }
}

std::size_t padFor(double cornerHz, double fs, std::size_t n) {
  const auto want = static_cast<std::size_t>(std::ceil(3.0 * fs / cornerHz));
  return std::min(want, n > 0 ? n - 1 : 0);
}

void whiten(Array& x, int smoothBins) {
  const int n = static_cast<int>(x.size());
  const int bins = n / 2 + 1;
  std::vector<std::complex<double>> spec(static_cast<std::size_t>(bins));
  Array work = x;
  fftw_plan fwd, inv;
  {
    std::lock_guard lock(plannerMutex());
    fwd = fftw_plan_dft_r2c_1d(n, work.data(), reinterpret_cast<fftw_complex*>(spec.data()), FFTW_ESTIMATE);
    inv = fftw_plan_dft_c2r_1d(n, reinterpret_cast<fftw_complex*>(spec.data()), work.data(), FFTW_ESTIMATE);
  }
  // Plans are bound to these buffers; refill in place.
  std::copy(x.begin(), x.end(), work.begin());
  fftw_execute(fwd);
  std::vector<double> mag(spec.size()), smooth(spec.size());
  for (std::size_t k = 0; k < spec.size(); ++k) mag[k] = std::abs(spec[k]);
  const int half = smoothBins / 2;
  for (int k = 0; k < bins; ++k) {
    double s = 0.0;
    int count = 0;
    for (int j = std::max(0, k - half); j <= std::min(bins - 1, k + half); ++j) {
      s += mag[static_cast<std::size_t>(j)];
      ++count;
    }
    smooth[static_cast<std::size_t>(k)] = s / count;
  }
  for (std::size_t k = 0; k < spec.size(); ++k) spec[k] = smooth[k] > 0.0 ? spec[k] / smooth[k] : 0.0;
  fftw_execute(inv);
  for (int i = 0; i < n; ++i) x[static_cast<std::size_t>(i)] = work[static_cast<std::size_t>(i)] / n;
  std::lock_guard lock(plannerMutex());
  fftw_destroy_plan(fwd);
  fftw_destroy_plan(inv);
}

} // namespace

std::string_view transformName(TransformKind k) {
  switch (k) {
  case TransformKind::Demean: return "demean";
  case TransformKind::Detrend: return "detrend";
  case TransformKind::Taper: return "taper";
  case TransformKind::Bandpass: return "bandpass";
  case TransformKind::Decimate: return "decimate";
  case TransformKind::Whiten: return "whiten";
  case TransformKind::OneBit: return "onebit";
  }
  return "demean";
}

std::vector<TransformKind> allTransforms() {
  return {TransformKind::Demean, TransformKind::Detrend, TransformKind::Taper, TransformKind::Bandpass,
          TransformKind::Decimate, TransformKind::Whiten, TransformKind::OneBit};
}

TransformKind transformFromName(std::string_view s) {
  for (auto k : allTransforms())
    if (transformName(k) == s) return k;
  throw bad("unknown transform '" + std::string(s) + "'");
}

std::vector<Biquad> butterworthLowpass4(double cornerHz, double fs) {
  return {section(cornerHz, fs, kQ1, false), section(cornerHz, fs, kQ2, false)};
}

std::vector<Biquad> butterworthHighpass4(double cornerHz, double fs) {
  return {section(cornerHz, fs, kQ1, true), section(cornerHz, fs, kQ2, true)};
}

Array filtfilt(const std::vector<Biquad>& sections, const Array& x, std::size_t pad) {
  const std::size_t n = x.size();
  if (n == 0) return x;
  pad = std::min(pad, n - 1);
  Array ext;
  ext.reserve(n + 2 * pad);
  for (std::size_t i = pad; i >= 1; --i) ext.push_back(2.0 * x.front() - x[i]);
  ext.insert(ext.end(), x.begin(), x.end());
  for (std::size_t i = 1; i <= pad; ++i) ext.push_back(2.0 * x.back() - x[n - 1 - i]);
  runSections(sections, ext);
  std::reverse(ext.begin(), ext.end());
  runSections(sections, ext);
  std::reverse(ext.begin(), ext.end());
  return Array(ext.begin() + static_cast<std::ptrdiff_t>(pad), ext.begin() + static_cast<std::ptrdiff_t>(pad + n));
}

Trace applyTraceTransform(TransformKind kind, const Json& params, const Trace& trace) {
  trace.validate();
  Trace out = trace;
  auto& x = out.samples;
  const double fs = 1.0 / trace.dt;
  switch (kind) {
  case TransformKind::Demean:
    needSamples(trace, 1, "demean");
    demean(x);
    break;
  case TransformKind::Detrend:
    needSamples(trace, 2, "detrend");
    detrend(x);
    break;
  case TransformKind::Taper: {
    const double fraction = numberParamOr(params, "fraction", 0.05);
    if (!(fraction > 0.0 && fraction <= 0.5)) throw bad("taper fraction must be in (0, 0.5]");
    needSamples(trace, 2, "taper");
    taper(x, fraction);
    break;
  }
  case TransformKind::Bandpass: {
    const double lo = numberParam(params, "lo"), hi = numberParam(params, "hi");
    if (!(lo > 0.0 && lo < hi && hi < fs / 2.0)) {
      throw bad("bandpass needs 0 < lo < hi < Nyquist (" + std::to_string(fs / 2.0) + " Hz)");
    }
    needSamples(trace, 8, "bandpass");
    auto sections = butterworthHighpass4(lo, fs);
    const auto lp = butterworthLowpass4(hi, fs);
    sections.insert(sections.end(), lp.begin(), lp.end());
    x = filtfilt(sections, x, padFor(lo, fs, x.size()));
    break;
  }
  case TransformKind::Decimate: {
    const long long factor = integerParamOr(params, "factor", 0);
    if (factor < 2) throw bad("decimate factor must be an integer >= 2");
    needSamples(trace, static_cast<std::size_t>(factor), "decimate");
    const double corner = 0.8 * fs / (2.0 * static_cast<double>(factor));
    const auto filtered = filtfilt(butterworthLowpass4(corner, fs), x, padFor(corner, fs, x.size()));
    Array kept;
    for (std::size_t i = 0; i < filtered.size(); i += static_cast<std::size_t>(factor)) kept.push_back(filtered[i]);
    x = std::move(kept);
    out.dt = trace.dt * static_cast<double>(factor);
    break;
  }
  case TransformKind::Whiten: {
    const long long bins = integerParamOr(params, "smoothBins", 11);
    if (bins < 1 || bins % 2 == 0) throw bad("whiten smoothBins must be odd and >= 1");
    needSamples(trace, 2, "whiten");
    whiten(x, static_cast<int>(bins));
    break;
  }
  case TransformKind::OneBit:
    for (double& v : x) v = v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0);
    break;
  }
  return out;
}

PrepDescriptor defaultPrep(double lo, double hi) {
  return {{TransformKind::Demean, Json::object()},
          {TransformKind::Detrend, Json::object()},
          {TransformKind::Taper, {{"fraction", 0.05}}},
          {TransformKind::Bandpass, {{"lo", lo}, {"hi", hi}}}};
}

Json prepToJson(const PrepDescriptor& p) {
  Json j = Json::array();
  for (const auto& s : p) j.push_back({{"kind", transformName(s.kind)}, {"params", s.params}});
  return j;
}

PrepDescriptor prepFromJson(const Json& j) {
  if (!j.is_array()) throw bad("prep descriptor must be an array of {kind, params}");
  PrepDescriptor p;
  for (const auto& s : j) {
    if (!s.is_object() || !s.contains("kind") || !s.at("kind").is_string()) throw bad("prep step needs a 'kind'");
    p.push_back({transformFromName(s.at("kind").get<std::string>()), s.value("params", Json::object())});
  }
  return p;
}

Trace applyPrep(const PrepDescriptor& p, Trace t) {
  for (const auto& s : p) t = applyTraceTransform(s.kind, s.params, t);
  return t;
}

} // namespace verce::seismo
