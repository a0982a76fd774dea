#include <filesystem>
#include <fstream>

#include <gtest/gtest.h>
#include <unistd.h>

#include "../support/seismo_oracles.hpp"
#include "verce/dataflow/library.hpp"
#include "verce/enactment/enactor.hpp"
#include "verce/seismo/catalog.hpp"
#include "verce/seismo/demo.hpp"
#include "verce/seismo/ingest.hpp"
#include "verce/seismo/misfit.hpp"
#include "verce/seismo/pes.hpp"
#include "verce/seismo/trace_io.hpp"

using namespace verce;
using namespace verce::seismo;
using namespace verce::testing;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  auto p = fs::temp_directory_path() / ("verce-seismo-" + name + "-" + std::to_string(::getpid()));
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

template <typename Fn>
std::string errorCode(Fn fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  return "";
}

Trace sinusoid(double f, double fs, std::size_t n, double amp = 1.0) {
  std::vector<double> x(n);
  for (std::size_t i = 0; i < n; ++i) x[i] = amp * std::sin(2.0 * std::numbers::pi * f * static_cast<double>(i) / fs);
  return makeTrace(std::move(x), 1.0 / fs);
}

} // namespace

// ---- transforms ----------------------------------------------------------

TEST(Transforms, Examples) {
  const auto dm = applyTraceTransform(TransformKind::Demean, {}, makeTrace({1, 2, 3}));
  EXPECT_EQ(dm.samples, (std::vector<double>{-1, 0, 1}));
  const auto ob = applyTraceTransform(TransformKind::OneBit, {}, makeTrace({0.5, -2.0, 0.0}));
  EXPECT_EQ(ob.samples, (std::vector<double>{1, -1, 0}));
  EXPECT_EQ(ob.id(), "XX.A.BHZ");
}

TEST(Transforms, DetrendRemovesLine) {
  std::vector<double> x;
  for (int i = 0; i < 50; ++i) x.push_back(3.0 - 0.25 * i);
  for (double v : applyTraceTransform(TransformKind::Detrend, {}, makeTrace(x)).samples) EXPECT_NEAR(v, 0.0, 1e-12);
}

TEST(Transforms, TaperZeroesEndsOnly) {
  const auto t = applyTraceTransform(TransformKind::Taper, {{"fraction", 0.1}}, makeTrace(std::vector<double>(100, 1.0)));
  EXPECT_EQ(t.samples.front(), 0.0);
  EXPECT_EQ(t.samples.back(), 0.0);
  EXPECT_LT(t.samples[5], 1.0);
  for (std::size_t i = 10; i < 90; ++i) EXPECT_EQ(t.samples[i], 1.0);
}

TEST(Transforms, DecimateUpdatesDt) {
  const auto t = applyTraceTransform(TransformKind::Decimate, {{"factor", 4}}, sinusoid(1.0, 100.0, 401));
  EXPECT_EQ(t.samples.size(), 101u);
  EXPECT_DOUBLE_EQ(t.dt, 0.04);
  // A 1 Hz tone survives the anti-alias filter.
  EXPECT_NEAR(rms(t.samples, 20, 80), std::sqrt(0.5), 0.02);
}

TEST(Transforms, WhitenFlattensColouredSpectrum) {
  std::mt19937_64 rng(3);
  auto x = randomSignal(rng, 1024);
  for (std::size_t i = 0; i < x.size(); ++i) x[i] += 20.0 * std::sin(0.3 * static_cast<double>(i));
  const auto w = applyTraceTransform(TransformKind::Whiten, {}, makeTrace(x));
  ASSERT_EQ(w.samples.size(), x.size());
  // The dominant tone no longer dominates.
  const double toneIn = toneAmplitude(x, 0, x.size(), 0.3 / (2 * std::numbers::pi), 1.0);
  const double toneOut = toneAmplitude(w.samples, 0, x.size(), 0.3 / (2 * std::numbers::pi), 1.0);
  EXPECT_LT(toneOut / rms(w.samples, 0, x.size()), 0.5 * toneIn / rms(x, 0, x.size()));
}

TEST(Transforms, BandpassMatchesSpectralOracle) {
  const double fs = 100.0, lo = 1.0, hi = 5.0;
  const std::size_t n = 4000, a = 1000, b = 3000;
  for (double f : {2.0, 2.5, 3.0, 4.0}) {
    const auto in = sinusoid(f, fs, n);
    const auto out = applyTraceTransform(TransformKind::Bandpass, {{"lo", lo}, {"hi", hi}}, in);
    const double ratio = rms(out.samples, a, b) / rms(in.samples, a, b);
    EXPECT_GE(ratio, 0.7) << f;
    EXPECT_NEAR(toneAmplitude(out.samples, a, b, f, fs), bandpassAmplitudeGain(f, lo, hi, fs), 0.01) << f;
  }
  const auto in = sinusoid(4 * hi, fs, n);
  const auto out = applyTraceTransform(TransformKind::Bandpass, {{"lo", lo}, {"hi", hi}}, in);
  EXPECT_LE(rms(out.samples, a, b) / rms(in.samples, a, b), 0.1);
  EXPECT_NEAR(toneAmplitude(out.samples, a, b, 4 * hi, fs), bandpassAmplitudeGain(4 * hi, lo, hi, fs), 1e-3);
}

TEST(Transforms, Errors) {
  const auto t = sinusoid(1.0, 10.0, 100);
  EXPECT_EQ(errorCode([&] { applyTraceTransform(TransformKind::Taper, {{"fraction", 0.6}}, t); }), "BadParams");
  EXPECT_EQ(errorCode([&] { applyTraceTransform(TransformKind::Bandpass, {{"lo", 2.0}, {"hi", 1.0}}, t); }), "BadParams");
  EXPECT_EQ(errorCode([&] { applyTraceTransform(TransformKind::Bandpass, {{"lo", 1.0}, {"hi", 5.0}}, t); }), "BadParams");
  EXPECT_EQ(errorCode([&] { applyTraceTransform(TransformKind::Decimate, {{"factor", 1}}, t); }), "BadParams");
  EXPECT_EQ(errorCode([&] { applyTraceTransform(TransformKind::Decimate, {{"factor", 2.5}}, t); }), "BadParams");
  EXPECT_EQ(errorCode([&] { applyTraceTransform(TransformKind::Whiten, {{"smoothBins", 4}}, t); }), "BadParams");
  EXPECT_EQ(errorCode([&] { applyTraceTransform(TransformKind::Demean, {}, makeTrace({})); }), "TooShort");
  EXPECT_EQ(errorCode([&] { applyTraceTransform(TransformKind::Decimate, {{"factor", 8}}, makeTrace({1, 2, 3})); }), "TooShort");
  EXPECT_EQ(errorCode([] { transformFromName("smooth"); }), "BadParams");
}

TEST(Transforms, ChainIsDeterministic) {
  std::mt19937_64 rng(11);
  const auto prep = defaultPrep(0.5, 4.0);
  for (int trial = 0; trial < 20; ++trial) {
    const auto t = makeTrace(randomSignal(rng, 200 + 13 * trial), 0.05);
    EXPECT_TRUE(bitEqual(applyPrep(prep, t).samples, applyPrep(prep, t).samples));
    const auto w = applyTraceTransform(TransformKind::Whiten, {}, t);
    EXPECT_TRUE(bitEqual(w.samples, applyTraceTransform(TransformKind::Whiten, {}, t).samples));
  }
  EXPECT_EQ(prepToJson(prepFromJson(prepToJson(prep))), prepToJson(prep));
}

// ---- correlation ---------------------------------------------------------

TEST(Correlation, Examples) {
  const auto r = crossCorrelate(makeTrace({0, 1, 0, 0}), makeTrace({0, 0, 1, 0}, 1.0, "B"), 3);
  EXPECT_EQ(r.values, (std::vector<double>{0, 0, 0, 0, 1, 0, 0}));
  EXPECT_EQ(r.lags, (std::vector<double>{-3, -2, -1, 0, 1, 2, 3}));
  EXPECT_EQ(r.pairA, "XX.A.BHZ");
  EXPECT_EQ(r.pairB, "XX.B.BHZ");

  const auto auto1 = crossCorrelate(makeTrace({1, 2, 3}, 0.5), makeTrace({1, 2, 3}, 0.5), 1);
  EXPECT_EQ(auto1.values, (std::vector<double>{8, 14, 8}));
  EXPECT_EQ(auto1.lags, (std::vector<double>{-0.5, 0, 0.5}));

  for (double v : crossCorrelate(makeTrace({1, 2, 3, 4}), makeTrace({0, 0, 0, 0}), 2).values) EXPECT_EQ(v, 0.0);
}

TEST(Correlation, Errors) {
  EXPECT_EQ(errorCode([] { crossCorrelate(makeTrace({1, 2, 3}, 1.0), makeTrace({1, 2, 3}, 0.5), 1); }), "DtMismatch");
  EXPECT_EQ(errorCode([] { crossCorrelate(makeTrace({1, 2, 3}), makeTrace({1, 2, 3}), 3); }), "TooShort");
  EXPECT_EQ(errorCode([] { crossCorrelate(makeTrace({1, 2, 3}), makeTrace({1, 2, 3}), -1); }), "BadParams");
}

TEST(Correlation, MatchesDirectSumBitForBit) {
  std::mt19937_64 rng(2024);
  for (int trial = 0; trial < 100; ++trial) {
    const int maxLag = static_cast<int>(rng() % 65);
    const std::size_t na = maxLag + 1 + rng() % (512 - maxLag), nb = maxLag + 1 + rng() % (512 - maxLag);
    const auto a = randomSignal(rng, na), b = randomSignal(rng, nb);
    const auto r = crossCorrelate(makeTrace(a), makeTrace(b), maxLag);
    ASSERT_TRUE(bitEqual(r.values, directCorrelation(a, b, maxLag))) << "trial " << trial;
  }
}

TEST(Correlation, SymmetryAndAutocorrelationPeak) {
  std::mt19937_64 rng(99);
  for (int trial = 0; trial < 50; ++trial) {
    const int maxLag = 1 + static_cast<int>(rng() % 30);
    const std::size_t n = maxLag + 1 + rng() % 200;
    const auto a = makeTrace(randomSignal(rng, n)), b = makeTrace(randomSignal(rng, n + rng() % 7));
    auto ab = crossCorrelate(a, b, maxLag).values;
    const auto ba = crossCorrelate(b, a, maxLag).values;
    std::reverse(ab.begin(), ab.end());
    EXPECT_TRUE(bitEqual(ab, ba)) << "trial " << trial;

    const auto aa = crossCorrelate(a, a, maxLag).values;
    for (double v : aa) EXPECT_LE(v, aa[static_cast<std::size_t>(maxLag)]);
  }
}

TEST(Stack, Examples) {
  const auto r = crossCorrelate(makeTrace({1, 2, 3, 4}), makeTrace({4, 3, 2, 1}, 1.0, "B"), 2);
  const auto twice = stackCorrelations({r, r});
  EXPECT_EQ(twice.values, r.values);
  EXPECT_EQ(twice.windowCount, 2);

  auto neg = r;
  for (double& v : neg.values) v = -v;
  for (double v : stackCorrelations({r, neg}).values) EXPECT_EQ(v, 0.0);

  EXPECT_EQ(errorCode([] { stackCorrelations({}); }), "EmptyList");
  auto other = r;
  other.pairB = "XX.C.BHZ";
  EXPECT_EQ(errorCode([&] { stackCorrelations({r, other}); }), "MixedPairs");
  const auto shorter = crossCorrelate(makeTrace({1, 2, 3, 4}), makeTrace({4, 3, 2, 1}, 1.0, "B"), 1);
  EXPECT_EQ(errorCode([&] { stackCorrelations({r, shorter}); }), "MixedLagGrids");
}

TEST(Stack, RaisesSignalToNoise) {
  // Channel B sees the same pulse 5 samples later; each window adds its own noise.
  const int maxLag = 20, delay = 5;
  const std::size_t n = 256;
  const auto pulse = rickerPulse(n, 1.0, 0.08, 100.0);
  std::mt19937_64 rng(5150);
  std::vector<CorrelationResult> windows;
  for (int w = 0; w < 10; ++w) {
    auto a = randomSignal(rng, n), b = randomSignal(rng, n);
    for (std::size_t i = 0; i < n; ++i) {
      a[i] = 0.6 * a[i] + pulse[i];
      b[i] = 0.6 * b[i] + (i >= delay ? pulse[i - delay] : 0.0);
    }
    windows.push_back(crossCorrelate(makeTrace(a), makeTrace(b, 1.0, "B"), maxLag));
  }
  const std::size_t at = maxLag + delay;
  const double single = correlationSnr(windows.front().values, at, 3);
  const double stacked = correlationSnr(stackCorrelations(windows).values, at, 3);
  EXPECT_GT(stacked / single, 2.0) << single << " -> " << stacked;
}

TEST(Windows, SplitDropsPartialTail) {
  const auto ws = splitWindows(makeTrace(std::vector<double>(25, 1.0), 0.1, "A", 100.0), 1.0);
  ASSERT_EQ(ws.size(), 2u);
  EXPECT_DOUBLE_EQ(ws[1].startTime, 101.0);
  EXPECT_EQ(ws[1].samples.size(), 10u);
  EXPECT_EQ(errorCode([] { splitWindows(makeTrace({1, 2}), 5.0); }), "TooShort");
}

// ---- all-pairs graph -----------------------------------------------------

TEST(AllPairs, NodeCounts) {
  for (std::size_t n : {2, 4, 7}) {
    std::vector<Trace> ts;
    for (std::size_t i = 0; i < n; ++i) ts.push_back(makeTrace(std::vector<double>(64, 0.0), 0.01, "S" + std::to_string(i)));
    const auto g = buildAllPairsGraph(ts, defaultPrep(1, 10), 8, 0.32);
    std::size_t xcorr = 0, stack = 0, prep = 0;
    for (const auto& [id, node] : g.nodes()) {
      xcorr += node.pe->name == "xcorr";
      stack += node.pe->name == "stack";
      prep += node.pe->name == "trace_prep";
    }
    EXPECT_EQ(xcorr, n * (n - 1) / 2);
    EXPECT_EQ(stack, n * (n - 1) / 2);
    EXPECT_EQ(prep, n);
  }
  EXPECT_EQ(errorCode([] { buildAllPairsGraph({makeTrace({1, 2})}, {}, 1, 1.0); }), "TooFewChannels");
  EXPECT_EQ(errorCode([] { buildAllPairsGraph({makeTrace({1, 2}, 1.0), makeTrace({1, 2}, 0.5)}, {}, 1, 1.0); }), "DtMismatch");
}

TEST(AllPairs, ThousandChannelsBuildOnly) {
  std::vector<Trace> ts;
  for (int i = 0; i < 1000; ++i) ts.push_back(makeTrace(std::vector<double>(64, 0.0), 0.01, "S" + std::to_string(i)));
  const auto g = buildAllPairsGraph(ts, defaultPrep(1, 10), 8, 0.32);
  std::size_t xcorr = 0;
  for (const auto& [id, node] : g.nodes()) xcorr += node.pe->name == "xcorr";
  EXPECT_EQ(xcorr, 499500u);
}

TEST(AllPairs, ExecutionEqualsStraightLineLoop) {
  NoiseDemoConfig cfg;
  cfg.channels = 4;
  cfg.windows = 3;
  cfg.windowSamples = 256;
  const auto traces = noiseChannels(cfg);
  const auto prep = defaultPrep(cfg.lo, cfg.hi);
  const double windowSeconds = cfg.windowSamples * cfg.dt;
  const auto expected = straightLineAllPairs(traces, prep, cfg.maxLag, windowSeconds);

  for (auto backend : {enactment::BackendKind::Sequential, enactment::BackendKind::Threaded,
                       enactment::BackendKind::Multiprocess}) {
    enactment::Enactor enactor({nullptr, scratch("allpairs")});
    const auto graph = buildAllPairsGraph(traces, prep, cfg.maxLag, windowSeconds);
    enactment::RunOptions opt;
    opt.workers = 3;
    const auto rec = enactor.executeGraph(graph, backend, std::nullopt, allPairsFeeds(traces), opt);
    ASSERT_EQ(rec.status, enactment::RunStatus::Completed) << enactment::backendName(backend);
    std::size_t k = 0;
    for (std::size_t i = 0; i < traces.size(); ++i) {
      for (std::size_t j = i + 1; j < traces.size(); ++j, ++k) {
        const auto& units = rec.outputs.at(stackNode(i, j) + ".out");
        ASSERT_EQ(units.size(), 1u);
        const auto got = CorrelationResult::fromUnit(units.front());
        EXPECT_TRUE(bitEqual(got.values, expected[k].values)) << stackNode(i, j);
        EXPECT_EQ(got.windowCount, 3);
        EXPECT_EQ(got.pairA, expected[k].pairA);
        EXPECT_EQ(got.pairB, expected[k].pairB);
      }
    }
  }
}

TEST(AllPairs, CorrelationActivitiesFollowPairLaw) {
  for (int n : {2, 4, 6, 8}) {
    provenance::ProvStore store;
    enactment::Enactor enactor({&store, scratch("law")});
    NoiseDemoConfig cfg;
    cfg.channels = n;
    cfg.windows = 3;
    cfg.windowSamples = 128;
    enactment::RunOptions opt;
    opt.provenance = true;
    const auto res = runNoiseDemo(cfg, enactor, enactment::BackendKind::Sequential, opt);
    EXPECT_EQ(res.stacks.size(), static_cast<std::size_t>(n * (n - 1) / 2));
    EXPECT_EQ(res.correlationActivities, static_cast<std::size_t>(3 * n * (n - 1) / 2)) << n;
  }
}

TEST(NoiseDemo, ReproducibleAndPeaksAtTrueDelay) {
  NoiseDemoConfig cfg;
  cfg.channels = 3;
  enactment::Enactor enactor({nullptr, scratch("noise")});
  const auto a = runNoiseDemo(cfg, enactor);
  const auto b = runNoiseDemo(cfg, enactor);
  ASSERT_EQ(a.stacks.size(), 3u);
  for (std::size_t k = 0; k < a.stacks.size(); ++k) EXPECT_TRUE(bitEqual(a.stacks[k].values, b.stacks[k].values));
  // Channel j is channel i delayed by 3*(j-i) samples: b[t + l] = a[t + l - 6] peaks at l = +6.
  const auto& v = a.stacks[1].values; // pair (0, 2)
  const auto peak = std::max_element(v.begin(), v.end()) - v.begin();
  EXPECT_EQ(peak - cfg.maxLag, 6);
}

// ---- forward solver ------------------------------------------------------

TEST(Forward, ZeroAmplitudeGivesZeroTraces) {
  const auto m = VelocityModel1D::homogeneous(1000, 5, 1000);
  for (const auto& t : forwardSimulate1D(m, 200, {5.0, 0.2, 0.0}, {100, 700}, 0.004, 200)) {
    EXPECT_EQ(t.samples.size(), 200u);
    for (double v : t.samples) EXPECT_EQ(v, 0.0);
  }
}

TEST(Forward, FirstArrivalMatchesTravelTime) {
  struct Case {
    double dx, courant, t0;
  };
  for (const auto& c : {Case{5, 1.0, 0.0}, Case{2, 1.0, 0.0}, Case{2, 0.5, 0.1}}) {
    const auto m = VelocityModel1D::homogeneous(1000, c.dx, 1000, Boundary::Absorbing);
    const double dt = c.courant * c.dx / 1000;
    const auto traces = forwardSimulate1D(m, 0, {5.0, c.t0, 1.0}, {300, 500, 600}, dt, static_cast<int>(0.9 / dt));
    const double tol = std::max(2 * dt, 2 * c.dx / 1000);
    EXPECT_NEAR(firstArrival(traces[1]), 0.5, tol) << c.dx << " " << c.courant;
    EXPECT_NEAR(firstArrival(traces[2]) - firstArrival(traces[0]), 0.3, tol) << c.dx << " " << c.courant;
    EXPECT_EQ(traces[0].dt, dt);
  }
}

TEST(Forward, EnergyConservedAfterSource) {
  for (double courant : {1.0, 0.8, 0.5}) {
    const auto m = VelocityModel1D::homogeneous(1000, 5, 1000, Boundary::Reflecting);
    const double dt = courant * 5 / 1000, f0 = 5.0, t0 = 0.3;
    std::vector<double> e;
    forwardSimulate1D(m, 500, {f0, t0, 1.0}, {}, dt, static_cast<int>(4.0 / dt), &e);
    const auto from = static_cast<std::size_t>((t0 + 5 / f0) / dt);
    const auto [lo, hi] = std::minmax_element(e.begin() + static_cast<std::ptrdiff_t>(from), e.end());
    EXPECT_GT(*lo, 0.0);
    EXPECT_LT((*hi - *lo) / *hi, 0.01) << courant;
  }
}

TEST(Forward, AbsorbingEndsDrainEnergy) {
  const auto m = VelocityModel1D::homogeneous(1000, 5, 1000, Boundary::Absorbing);
  std::vector<double> e;
  forwardSimulate1D(m, 500, {5.0, 0.3, 1.0}, {}, 0.004, 1000, &e);
  const double early = e[static_cast<std::size_t>(0.6 / 0.004)];
  EXPECT_LT(e.back(), 0.01 * early);
}

TEST(Forward, HeterogeneousModelSlowsArrival) {
  auto m = VelocityModel1D::homogeneous(1000, 5, 1000, Boundary::Absorbing);
  for (std::size_t i = 0; i < m.cells() / 2; ++i) m.velocity[i] = 800;
  const double dt = 0.005;
  const auto t = forwardSimulate1D(m, 0, {4.0, 0.0, 1.0}, {500}, dt, 200);
  // 500 m through 800 m/s takes 0.625 s.
  EXPECT_NEAR(firstArrival(t[0]), 0.625, 0.02);
}

TEST(Forward, Errors) {
  const auto m = VelocityModel1D::homogeneous(1000, 5, 1000);
  EXPECT_EQ(errorCode([&] { forwardSimulate1D(m, 0, {5.0, 0.0, 1.0}, {500}, 0.0051, 10); }), "CFLViolation");
  EXPECT_EQ(errorCode([&] { forwardSimulate1D(m, 0, {30.0, 0.0, 1.0}, {500}, 0.004, 10); }), "UnresolvedWavelength");
  EXPECT_EQ(errorCode([&] { forwardSimulate1D(m, -1, {5.0, 0.0, 1.0}, {500}, 0.004, 10); }), "OutOfDomain");
  EXPECT_EQ(errorCode([&] { forwardSimulate1D(m, 0, {5.0, 0.0, 1.0}, {1000.5}, 0.004, 10); }), "OutOfDomain");
  EXPECT_EQ(errorCode([&] { forwardSimulate1D(m, 0, {5.0, 0.0, 1.0}, {500}, 0.004, 0); }), "BadParams");
  auto broken = m;
  broken.velocity.pop_back();
  EXPECT_EQ(errorCode([&] { forwardSimulate1D(broken, 0, {5.0, 0.0, 1.0}, {500}, 0.004, 10); }), "BadParams");
}

// ---- misfit --------------------------------------------------------------

TEST(Misfit, Examples) {
  const auto pulse = makeTrace(rickerPulse(200, 0.01, 5.0, 0.5), 0.01);
  EXPECT_EQ(computeMisfit(pulse, pulse, MisfitKind::L2).value, 0.0);
  const auto cc = computeMisfit(pulse, pulse, MisfitKind::CcShift);
  EXPECT_EQ(cc.value, 0.0);
  EXPECT_NEAR(*cc.normalizedCC, 1.0, 1e-12);
  EXPECT_EQ(computeMisfit(makeTrace({1, 0, 0}), makeTrace({0, 0, 0}), MisfitKind::L2).value, 0.5);
}

TEST(Misfit, CcShiftRecoversDelayLikeBruteForce) {
  for (int delay : {-7, -2, 0, 2, 5}) {
    const double dt = 0.01;
    const auto o = rickerPulse(300, dt, 5.0, 1.0);
    const auto s = rickerPulse(300, dt, 5.0, 1.0 + delay * dt);
    const auto r = computeMisfit(makeTrace(o, dt), makeTrace(s, dt), MisfitKind::CcShift);
    double cc = 0;
    EXPECT_EQ(bruteForceShift(o, s, &cc), delay);
    EXPECT_EQ(r.value, delay * dt);
    EXPECT_NEAR(*r.normalizedCC, cc, 1e-12);
  }
  // Exactly two samples late, built by shifting the array itself.
  auto o = rickerPulse(200, 0.01, 5.0, 0.6);
  std::vector<double> s(200, 0.0);
  std::copy(o.begin(), o.end() - 2, s.begin() + 2);
  EXPECT_EQ(computeMisfit(makeTrace(o, 0.01), makeTrace(s, 0.01), MisfitKind::CcShift).value, 2 * 0.01);
}

TEST(Misfit, InvariantsOnRandomInputs) {
  std::mt19937_64 rng(77);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 1 + rng() % 60;
    const auto o = makeTrace(randomSignal(rng, n), 0.1, "O", 0.1 * static_cast<double>(rng() % 5));
    const auto s = makeTrace(randomSignal(rng, 1 + rng() % 60), 0.1, "S", 0.1 * static_cast<double>(rng() % 5));
    try {
      EXPECT_GE(computeMisfit(o, s, MisfitKind::L2).value, 0.0);
      const auto cc = computeMisfit(o, s, MisfitKind::CcShift);
      EXPECT_LE(std::fabs(*cc.normalizedCC), 1.0 + 1e-12);
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), "NoOverlap");
    }
  }
}

TEST(Misfit, CommonSupportAndErrors) {
  // Synthetic covers samples 2..4 of the observed grid.
  const auto o = makeTrace({1, 1, 1, 1, 1, 1}, 1.0, "O", 0.0);
  const auto s = makeTrace({0, 0, 0}, 1.0, "S", 2.0);
  EXPECT_EQ(computeMisfit(o, s, MisfitKind::L2).value, 1.5);
  // Off-grid synthetic is interpolated.
  const auto half = makeTrace({0, 2, 4, 6}, 1.0, "S", -0.5);
  EXPECT_EQ(computeMisfit(makeTrace({1, 3, 5}), half, MisfitKind::L2).value, 0.0);
  EXPECT_EQ(errorCode([&] { computeMisfit(o, makeTrace({1}, 0.5), MisfitKind::L2); }), "DtMismatch");
  EXPECT_EQ(errorCode([&] { computeMisfit(o, makeTrace({1, 2}, 1.0, "S", 50.0), MisfitKind::L2); }), "NoOverlap");
  EXPECT_EQ(errorCode([] { misfitKindFromName("envelope"); }), "BadParams");
}

TEST(MisfitDemo, SelfMisfitZeroAndSlowModelIsLate) {
  const auto res = runMisfitDemo({});
  ASSERT_EQ(res.rows.size(), 3u);
  for (const auto& r : res.rows) {
    EXPECT_EQ(r.selfL2.value, 0.0);
    EXPECT_GT(r.l2.value, 0.0);
    EXPECT_GT(r.ccShift.value, 0.0) << r.receiver;
  }
  // Delay grows with distance: d/(0.95c) - d/c.
  EXPECT_LT(res.rows[0].ccShift.value, res.rows[2].ccShift.value);
  EXPECT_NEAR(res.rows[2].ccShift.value, 700.0 / 950.0 - 0.7, 0.01);
}

// ---- PEs -----------------------------------------------------------------

TEST(SeismoPEs, StandardLibraryHoldsBothFamilies) {
  const auto& lib = dataflow::standardLibrary();
  for (const char* name : {"identity", "accumulate", "trace_window", "trace_prep", "xcorr", "stack", "misfit", "bandpass", "onebit"})
    EXPECT_NE(lib.find(name), nullptr) << name;
  EXPECT_EQ(seismoPEs().find("identity"), nullptr);
}

TEST(SeismoPEs, MisfitPEPairsStreams) {
  dataflow::GraphParts parts;
  parts.addNode("m", seismoPEs().find("misfit"), {{"kind", "ccShift"}});
  parts.feed("obs", "m", "obs");
  parts.feed("syn", "m", "syn");
  const auto g = dataflow::buildGraph(std::move(parts));
  const double dt = 0.01;
  enactment::InputFeeds feeds;
  for (int d : {0, 3}) {
    feeds["obs"].push_back(makeTrace(rickerPulse(200, dt, 5.0, 0.8), dt).toUnit());
    feeds["syn"].push_back(makeTrace(rickerPulse(200, dt, 5.0, 0.8 + d * dt), dt).toUnit());
  }
  enactment::Enactor enactor({nullptr, scratch("misfitpe")});
  const auto rec = enactor.executeGraph(g, enactment::BackendKind::Sequential, std::nullopt, feeds);
  ASSERT_EQ(rec.status, enactment::RunStatus::Completed);
  const auto& out = rec.outputs.at("m.out");
  ASSERT_EQ(out.size(), 2u);
  EXPECT_EQ(std::get<double>(out[0].payload), 0.0);
  EXPECT_EQ(std::get<double>(out[1].payload), 3 * dt);
  EXPECT_EQ(out[1].metadata.at("misfitKind"), "ccShift");
}

TEST(SeismoPEs, SingleTransformPEKeepsHeader) {
  dataflow::GraphParts parts;
  parts.addNode("d", seismoPEs().find("demean"));
  parts.addNode("o", seismoPEs().find("onebit"));
  parts.connect("d", "out", "o", "in");
  parts.feed("in", "d", "in");
  const auto g = dataflow::buildGraph(std::move(parts));
  enactment::Enactor enactor({nullptr, scratch("tpe")});
  const auto rec = enactor.executeGraph(g, enactment::BackendKind::Sequential, std::nullopt,
                                        {{"in", {makeTrace({1, 2, 6}, 0.25, "Q", 10.0).toUnit()}}});
  ASSERT_EQ(rec.status, enactment::RunStatus::Completed);
  const auto t = Trace::fromUnit(rec.outputs.at("o.out").front());
  EXPECT_EQ(t.samples, (std::vector<double>{-1, -1, 1}));
  EXPECT_EQ(t.id(), "XX.Q.BHZ");
  EXPECT_EQ(t.startTime, 10.0);
  EXPECT_EQ(t.dt, 0.25);
}

// ---- trace files ---------------------------------------------------------

TEST(TraceIO, TrcRoundTripIsExact) {
  std::mt19937_64 rng(4);
  auto t = makeTrace(randomSignal(rng, 333), 0.025, "RT", 1.6e9);
  t.samples[7] = std::numeric_limits<double>::quiet_NaN();
  const auto back = decodeTrace(encodeTrace(t));
  EXPECT_TRUE(bitEqual(back.samples, t.samples));
  EXPECT_EQ(back.header(), t.header());

  const auto dir = scratch("trc");
  writeTraceFile(dir / "a.trc", t);
  EXPECT_TRUE(bitEqual(readTraceFile(dir / "a.trc").samples, t.samples));
}

TEST(TraceIO, MalformedTrc) {
  const auto bytes = encodeTrace(makeTrace({1, 2, 3}));
  EXPECT_EQ(errorCode([&] { decodeTrace(bytes.substr(0, bytes.size() - 4)); }), "MalformedTrace");
  EXPECT_EQ(errorCode([&] { decodeTrace(bytes + "x"); }), "MalformedTrace");
  EXPECT_EQ(errorCode([&] { decodeTrace("XTRC" + bytes.substr(4)); }), "MalformedTrace");
  EXPECT_EQ(errorCode([&] { decodeTrace(bytes.substr(0, 10)); }), "MalformedTrace");
  EXPECT_EQ(errorCode([] { readTraceFile("/nonexistent/x.trc"); }), "PathUnreadable");
}

TEST(TraceIO, CsvRoundTrip) {
  const auto dir = scratch("csv");
  const auto t = makeTrace({0.5, -1.25, 3.0, 4.0}, 0.5, "CSV", 100.0);
  writeCsvTrace(dir / "c.csv", t);
  EXPECT_TRUE(fs::exists(dir / "c.meta.json"));
  const auto back = readCsvTrace(dir / "c.csv");
  EXPECT_EQ(back.samples, t.samples);
  EXPECT_EQ(back.dt, 0.5);
  EXPECT_EQ(back.startTime, 100.0);
  EXPECT_EQ(back.id(), t.id());

  std::ofstream(dir / "bad.csv") << "time,value\n0,1\n1,2\n3,3\n";
  fs::copy_file(dir / "c.meta.json", dir / "bad.meta.json");
  EXPECT_EQ(errorCode([&] { readCsvTrace(dir / "bad.csv"); }), "MalformedTrace");
  std::ofstream(dir / "lonely.csv") << "0,1\n1,2\n";
  EXPECT_EQ(errorCode([&] { readCsvTrace(dir / "lonely.csv"); }), "MalformedTrace");
}

// ---- catalog -------------------------------------------------------------

TEST(Catalog, FixtureBoxQuery) {
  const auto events = loadEvents("fixtures/events.json");
  RegionQuery q;
  q.bbox = {40, 45, 10, 20};
  const auto hits = filterEvents(events, q);
  ASSERT_EQ(hits.size(), 1u);
  EXPECT_EQ(hits[0].latitude, 42.0);
  EXPECT_EQ(hits[0].longitude, 13.0);

  q.bbox = {30, 50, 0, 30};
  const auto wide = filterEvents(events, q);
  bool sawSouth = false;
  for (std::size_t i = 0; i < wide.size(); ++i) {
    sawSouth |= wide[i].latitude == 38.0 && wide[i].longitude == 15.0;
    if (i > 0) EXPECT_GE(wide[i - 1].originTime, wide[i].originTime);
  }
  EXPECT_TRUE(sawSouth);

  q.magnitudeRange = Interval{9, 10};
  EXPECT_TRUE(filterEvents(events, q).empty());
}

TEST(Catalog, MatchesLinearFilter) {
  const auto events = loadEvents("fixtures/events.json");
  const auto stations = loadStations("fixtures/stations.json");
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> lat(-90, 90), lon(-180, 180), mag(3, 8), when(1.2e9, 1.6e9);
  for (int trial = 0; trial < 300; ++trial) {
    double a = lat(rng), b = lat(rng), c = lon(rng), d = lon(rng);
    if (trial % 3 == 0) {
      a = 35 + 10 * (a + 90) / 180;
      b = a + 5;
      c = 5 + 10 * (c + 180) / 360;
      d = c + 10;
    }
    RegionQuery q;
    q.bbox = {std::min(a, b), std::max(a, b), std::min(c, d), std::max(c, d)};
    if (trial % 2) q.magnitudeRange = Interval{std::min(mag(rng), 5.0), 5.0 + mag(rng) / 2};
    if (trial % 5 == 0) q.timeRange = Interval{1.2e9, when(rng)};
    std::vector<std::string> want;
    for (const auto& e : events) {
      const bool in = e.latitude >= q.bbox.minLat && e.latitude <= q.bbox.maxLat && e.longitude >= q.bbox.minLon &&
                      e.longitude <= q.bbox.maxLon && (!q.magnitudeRange || (e.magnitude >= q.magnitudeRange->lo && e.magnitude <= q.magnitudeRange->hi)) &&
                      (!q.timeRange || (e.originTime >= q.timeRange->lo && e.originTime <= q.timeRange->hi));
      if (in) want.push_back(e.eventId);
    }
    std::vector<std::string> got;
    for (const auto& e : filterEvents(events, q)) got.push_back(e.eventId);
    std::sort(want.begin(), want.end());
    std::sort(got.begin(), got.end());
    EXPECT_EQ(got, want);

    std::size_t inBox = 0;
    for (const auto& s : stations) inBox += q.bbox.contains(s.latitude, s.longitude);
    EXPECT_EQ(filterStations(stations, q.bbox).size(), inBox);
  }
}

TEST(Catalog, StationBoxAndRegions) {
  const auto stations = loadStations("fixtures/stations.json");
  const auto one = filterStations(stations, {42, 42.5, 13, 14});
  ASSERT_EQ(one.size(), 1u);
  EXPECT_EQ(one[0].sta, "AQU");
  const auto regions = loadRegions("fixtures/regions.json");
  EXPECT_TRUE(regions.count("central-italy"));
  EXPECT_EQ(filterStations(stations, regions.at("central-italy")).size(), 2u);
}

TEST(Catalog, MalformedQueries) {
  RegionQuery q;
  q.bbox = {45, 40, 10, 20};
  EXPECT_EQ(errorCode([&] { q.validate(); }), "MalformedBBox");
  q.bbox = {40, 45, 170, -170};
  EXPECT_EQ(errorCode([&] { q.validate(); }), "MalformedBBox");
  q.bbox = {40, 95, 10, 20};
  EXPECT_EQ(errorCode([&] { q.validate(); }), "MalformedBBox");
  q.bbox = {};
  q.magnitudeRange = Interval{6, 5};
  EXPECT_EQ(errorCode([&] { q.validate(); }), "MalformedRange");
  EXPECT_EQ(errorCode([] { loadEvents("fixtures/nope.json"); }), "PathUnreadable");
}

// ---- ingest --------------------------------------------------------------

namespace {

fs::path ingestFixture(const std::string& name, int valid, bool truncated) {
  const auto dir = scratch(name);
  for (int i = 0; i < valid; ++i) {
    std::vector<double> x(100);
    for (std::size_t k = 0; k < x.size(); ++k) x[k] = std::sin(0.1 * static_cast<double>(k) * (i + 1));
    writeTraceFile(dir / ("st" + std::to_string(i) + ".trc"), makeTrace(x, 0.5, "ST" + std::to_string(i), 1000.0));
  }
  if (truncated) {
    const auto bytes = encodeTrace(makeTrace({1, 2, 3, 4, 5}, 1.0, "BAD"));
    std::ofstream(dir / "zz_truncated.trc", std::ios::binary) << bytes.substr(0, bytes.size() - 12);
  }
  return dir;
}

} // namespace

TEST(Ingest, CatalogsValidAndRejectsTruncated) {
  const auto dir = ingestFixture("ingest", 5, true);
  provenance::ProvStore store;
  BlobStore blobs(scratch("ingest-blobs"));
  const auto rep = ingestDirectory(dir, IngestFormat::TraceDoc, blobs, store);
  EXPECT_EQ(rep.cataloged.size(), 5u);
  ASSERT_EQ(rep.rejected.size(), 1u);
  EXPECT_EQ(rep.rejected[0].first, "zz_truncated.trc");
  EXPECT_NE(rep.rejected[0].second.find("truncated"), std::string::npos);
  for (const auto& id : rep.cataloged) {
    const auto e = store.entity(id);
    ASSERT_TRUE(e);
    EXPECT_EQ(e->metadata.at("kind"), "waveform");
    EXPECT_TRUE(blobs.contains(e->payloadDigest));
  }

  const auto again = ingestDirectory(dir, IngestFormat::TraceDoc, blobs, store);
  EXPECT_TRUE(again.cataloged.empty());
  EXPECT_EQ(again.duplicates.size(), 5u);
  EXPECT_EQ(store.entityCount(), 5u);
}

TEST(Ingest, EmptyAndUnreadable) {
  provenance::ProvStore store;
  BlobStore blobs(scratch("ingest-empty-blobs"));
  const auto rep = ingestDirectory(scratch("ingest-empty"), IngestFormat::TraceDoc, blobs, store);
  EXPECT_TRUE(rep.cataloged.empty());
  EXPECT_TRUE(rep.rejected.empty());
  EXPECT_EQ(errorCode([&] { ingestDirectory("/nonexistent/dir", IngestFormat::Csv, blobs, store); }), "PathUnreadable");
}

TEST(Ingest, CsvWithSidecars) {
  const auto dir = scratch("ingest-csv");
  writeCsvTrace(dir / "a.csv", makeTrace({1, 2, 3}, 1.0, "CA", 5.0));
  writeCsvTrace(dir / "b.csv", makeTrace({4, 5, 6}, 1.0, "CB", 5.0));
  std::ofstream(dir / "c.csv") << "0,1\n";
  provenance::ProvStore store;
  BlobStore blobs(scratch("ingest-csv-blobs"));
  const auto rep = ingestDirectory(dir, IngestFormat::Csv, blobs, store);
  EXPECT_EQ(rep.cataloged.size(), 2u);
  ASSERT_EQ(rep.rejected.size(), 1u);
  EXPECT_EQ(rep.rejected[0].first, "c.csv");
}

TEST(Ingest, WaveformQueriesTrim) {
  const auto dir = ingestFixture("ingest-wf", 2, false);
  provenance::ProvStore store;
  BlobStore blobs(scratch("ingest-wf-blobs"));
  ingestDirectory(dir, IngestFormat::TraceDoc, blobs, store);
  // Holdings: 100 samples at dt 0.5 from t = 1000.
  const auto got = queryWaveforms(store, blobs, "ST1", 1010.2, 1020.0);
  ASSERT_EQ(got.size(), 1u);
  EXPECT_NEAR(got[0].startTime, 1010.2, 0.5);
  EXPECT_DOUBLE_EQ(got[0].startTime, 1010.5);
  EXPECT_EQ(got[0].samples.size(), 20u);
  EXPECT_EQ(got[0].samples.front(), std::sin(0.1 * 21 * 2));
  EXPECT_EQ(queryWaveforms(store, blobs, "XX.ST1", 0, 5000)[0].samples.size(), 100u);
  EXPECT_EQ(errorCode([&] { queryWaveforms(store, blobs, "ST1", 0, 999); }), "OutsideHoldings");
  EXPECT_EQ(errorCode([&] { queryWaveforms(store, blobs, "NOPE", 0, 5000); }), "UnknownStation");
}
