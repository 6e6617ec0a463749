#include <cmath>

#include "doctest.h"
#include "ssbjam/channel.hpp"
#include "ssbjam/fft.hpp"
#include "support.hpp"

using namespace ssbjam;

namespace {

TimeSignal wrap(ComplexVec x, std::size_t n_fft = 256) {
  TimeSignal s;
  s.samples = std::move(x);
  s.n_fft = n_fft;
  s.sample_rate_hz = static_cast<double>(n_fft) * 30e3;
  return s;
}

double span_power(const ComplexVec& x, SampleRange r) {
  double p = 0.0;
  for (std::size_t i = r.begin; i < r.end; ++i) p += std::norm(x[i]);
  return p / static_cast<double>(r.size());
}

// Power of the part of `x` whose normalized frequency (in units of fs/n_fft) falls
// outside [lo-0.5, hi+0.5].
double out_of_band_energy(const ComplexVec& x, double lo, double hi, std::size_t n_fft) {
  const ComplexVec spec = fft(x);
  const double m = static_cast<double>(x.size());
  double e = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double signed_bin = i < (x.size() + 1) / 2 ? static_cast<double>(i) : static_cast<double>(i) - m;
    const double f = signed_bin * static_cast<double>(n_fft) / m;
    if (f < lo - 0.5 || f > hi + 0.5) e += std::norm(spec[i]);
  }
  return e / m;
}

}  // namespace

TEST_SUITE("channel") {
  TEST_CASE("free-space loss follows the squared-wavelength formula") {
    CHECK(fspl_db(1.0, 1.0) == doctest::Approx(-20.0 * std::log10(4.0 * kPi * kPi)).epsilon(1e-12));
    const double lambda = kSpeedOfLight / 632e6;
    // 40 dB per decade of distance and 40 dB per decade of wavelength.
    CHECK(fspl_db(lambda, 100.0) - fspl_db(lambda, 10.0) == doctest::Approx(-40.0).epsilon(1e-12));
    CHECK(fspl_db(10.0 * lambda, 10.0) - fspl_db(lambda, 10.0) == doctest::Approx(40.0).epsilon(1e-12));
    ChannelConfig cfg;
    cfg.distance_m = 250.0;
    CHECK(path_gain_db(cfg) == doctest::Approx(fspl_db(lambda, 250.0)).epsilon(1e-12));
    CHECK_THROWS_AS(fspl_db(1.0, 0.0), InvalidArgument);
    CHECK_THROWS_AS(fspl_db(-1.0, 5.0), InvalidArgument);
  }

  TEST_CASE("identity channel leaves the signal unchanged") {
    const TimeSignal s = wrap(testing::random_complex(500, 1));
    const ComplexVec one{Complex(1.0, 0.0)};
    const TimeSignal y = apply_channel(s, one, 0.0);
    CHECK(testing::max_abs_diff(y.samples, s.samples) == 0.0);
  }

  TEST_CASE("impulse response reproduces the taps scaled by the path gain") {
    ComplexVec impulse(64);
    impulse[0] = 1.0;
    const ComplexVec taps = testing::random_complex(7, 4);
    const TimeSignal y = apply_channel(wrap(impulse), taps, -20.0);
    for (std::size_t i = 0; i < 7; ++i) CHECK(std::abs(y.samples[i] - 0.1 * taps[i]) < 1e-15);
    for (std::size_t i = 7; i < 64; ++i) CHECK(y.samples[i] == Complex{});
  }

  TEST_CASE("FIR filtering matches zero-padded frequency-domain convolution") {
    const ComplexVec x = testing::random_complex(300, 2);
    const ComplexVec h = testing::random_complex(9, 3);
    const std::size_t m = 512;
    ComplexVec xp(m), hp(m), prod(m);
    std::copy(x.begin(), x.end(), xp.begin());
    std::copy(h.begin(), h.end(), hp.begin());
    const ComplexVec xf = fft(xp), hf = fft(hp);
    for (std::size_t i = 0; i < m; ++i) prod[i] = xf[i] * hf[i];
    const ComplexVec conv = ifft(prod);
    const TimeSignal y = apply_channel(wrap(x), h, 0.0);
    double err = 0.0;
    for (std::size_t n = 0; n < x.size(); ++n) err = std::max(err, std::abs(y.samples[n] - conv[n] / double(m)));
    CHECK(err < 1e-12);
  }

  TEST_CASE("channel is linear in the input") {
    const ComplexVec a = testing::random_complex(200, 5), b = testing::random_complex(200, 6);
    ComplexVec sum(200);
    const Complex alpha(0.3, -1.2);
    for (std::size_t i = 0; i < 200; ++i) sum[i] = alpha * a[i] + b[i];
    ChannelConfig cfg;
    cfg.seed = 9;
    cfg.distance_m = 30.0;
    const auto ya = apply_channel(wrap(a), cfg).samples, yb = apply_channel(wrap(b), cfg).samples;
    const auto ys = apply_channel(wrap(sum), cfg).samples;
    double err = 0.0, ref = 0.0;
    for (std::size_t i = 0; i < 200; ++i) {
      err = std::max(err, std::abs(ys[i] - alpha * ya[i] - yb[i]));
      ref = std::max(ref, std::abs(ys[i]));
    }
    CHECK(err <= 1e-12 * ref);
  }

  TEST_CASE("power-delay profile is normalized and strictly increasing") {
    ChannelConfig cfg;
    for (std::size_t taps : {1u, 2u, 6u, 12u}) {
      cfg.n_taps = taps;
      const auto pdp = power_delay_profile(cfg, 61.44e6);
      double total = 0.0;
      for (double p : pdp.powers) total += p;
      CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
      CHECK(pdp.delays.front() == 0);
      for (std::size_t i = 1; i < pdp.delays.size(); ++i) {
        CHECK(pdp.delays[i] > pdp.delays[i - 1]);
        // Taps that round onto the same delay are merged, which can break monotonic decay.
        if (pdp.delays.size() == taps) CHECK(pdp.powers[i] < pdp.powers[i - 1]);
      }
    }
    cfg.delay_spread_ns = 0.0;
    CHECK(power_delay_profile(cfg, 61.44e6).delays.size() == 1);
    cfg.n_taps = 0;
    CHECK_THROWS_AS(power_delay_profile(cfg, 61.44e6), InvalidArgument);
  }

  TEST_CASE("tap realizations have unit average power and are seed-determined") {
    for (auto profile : {ChannelProfile::LosDominant, ChannelProfile::NlosRich}) {
      ChannelConfig cfg;
      cfg.profile = profile;
      const auto pdp = power_delay_profile(cfg, 61.44e6);
      std::vector<double> mean_tap(pdp.delays.back() + 1, 0.0);
      const int trials = 4000;
      double total = 0.0;
      for (int t = 0; t < trials; ++t) {
        cfg.seed = static_cast<std::uint64_t>(t);
        const ComplexVec h = channel_taps(cfg, 61.44e6);
        for (std::size_t d = 0; d < h.size(); ++d) {
          mean_tap[d] += std::norm(h[d]) / trials;
          total += std::norm(h[d]) / trials;
        }
      }
      CHECK(total == doctest::Approx(1.0).epsilon(0.03));
      const double k = profile == ChannelProfile::LosDominant ? std::pow(10.0, 13.3 / 10.0) : 0.0;
      const double expect0 = (k + pdp.powers[0]) / (k + 1.0);
      CHECK(mean_tap[0] == doctest::Approx(expect0).epsilon(0.05));
    }
    ChannelConfig cfg;
    cfg.seed = 17;
    CHECK(channel_taps(cfg, 61.44e6) == channel_taps(cfg, 61.44e6));
  }

  TEST_CASE("thermal noise power matches kTB") {
    const double b = 61.44e6;
    CHECK(thermal_noise_power(290.0, b) == doctest::Approx(1.380649e-23 * 290.0 * b).epsilon(1e-14));
    const ComplexVec n = thermal_noise(200000, 290.0, b, 11);
    const double p = mean_power(n);
    CHECK(p == doctest::Approx(thermal_noise_power(290.0, b)).epsilon(0.02));
    double re = 0.0, im = 0.0;
    for (const auto& v : n) {
      re += v.real() * v.real();
      im += v.imag() * v.imag();
    }
    CHECK(re / im == doctest::Approx(1.0).epsilon(0.02));
    CHECK_THROWS_AS(thermal_noise_power(0.0, b), InvalidArgument);
  }

  TEST_CASE("smart jammer hits the requested SJNR and stays inside the SSB span and band") {
    const std::size_t n_fft = 256;
    const TimeSignal s = wrap(testing::random_complex(4000, 21, 1.0), n_fft);
    const SampleRange span{1000, 2200};
    const FrequencyBand band{-15.0, 14.0};
    for (auto kind : {JammerKind::AWGN, JammerKind::BPSK, JammerKind::QAM8}) {
      for (double sjnr : {-10.0, 0.0, 12.5, 30.0}) {
        JammerConfig cfg;
        cfg.kind = kind;
        cfg.sjnr_db = sjnr;
        cfg.seed = 3;
        const double noise = 1e-4;
        const auto out = inject_jammer(s, cfg, span, band, 1.0, noise);
        REQUIRE(out.feasible);
        CHECK(10.0 * std::log10(1.0 / (out.jam_power + noise)) == doctest::Approx(sjnr).epsilon(1e-9));
        CHECK(span_power(out.waveform, span) == doctest::Approx(out.jam_power).epsilon(1e-12));
        for (std::size_t i = 0; i < s.samples.size(); ++i) {
          if (!span.contains(i)) REQUIRE(out.waveform[i] == Complex{});
        }
        ComplexVec burst(out.waveform.begin() + 1000, out.waveform.begin() + 2200);
        CHECK(out_of_band_energy(burst, band.low_bin, band.high_bin, n_fft) < 1e-20 * out.jam_power + 1e-30);
        // Removing the jammer recovers the clean signal.
        double err = 0.0;
        for (std::size_t i = 0; i < s.samples.size(); ++i) {
          err = std::max(err, std::abs(out.signal.samples[i] - out.waveform[i] - s.samples[i]));
        }
        CHECK(err <= 1e-12);
      }
    }
  }

  TEST_CASE("measured SJNR with real noise lands within 0.2 dB") {
    const std::size_t n_fft = 256;
    const ComplexVec clean = testing::random_complex(6000, 31, 1.0);
    const SampleRange span{1000, 5000};
    const double b = 61.44e6;
    const double noise_p = thermal_noise_power(290.0, b);
    for (double sjnr : {-5.0, 5.0, 15.0}) {
      TimeSignal s = wrap(clean, n_fft);
      // Scale so that noise is 25 dB under the reference.
      const double ref = noise_p * std::pow(10.0, 2.5);
      for (auto& v : s.samples) v *= std::sqrt(ref);
      const ComplexVec noise = thermal_noise(s.samples.size(), 290.0, b, 77);
      JammerConfig cfg;
      cfg.sjnr_db = sjnr;
      cfg.seed = 5;
      const double ref_measured = span_power(s.samples, span);
      const auto out = inject_jammer(s, cfg, span, FrequencyBand{-120, 119}, ref_measured, noise_p);
      ComplexVec interference(s.samples.size());
      for (std::size_t i = 0; i < interference.size(); ++i) interference[i] = out.waveform[i] + noise[i];
      const double achieved = 10.0 * std::log10(ref_measured / span_power(interference, span));
      CHECK(std::abs(achieved - sjnr) < 0.2);
    }
  }

  TEST_CASE("jammer infeasible when noise alone exceeds the interference budget") {
    const TimeSignal s = wrap(testing::random_complex(1000, 8));
    JammerConfig cfg;
    cfg.sjnr_db = 20.0;
    const auto out = inject_jammer(s, cfg, SampleRange{0, 500}, FrequencyBand{-10, 9}, 1.0, 0.05);
    CHECK_FALSE(out.feasible);
    CHECK(out.jam_power == 0.0);
    CHECK(out.signal.samples == s.samples);
  }

  TEST_CASE("barrage jammer covers the whole capture and smart coverage needs a span") {
    const TimeSignal s = wrap(testing::random_complex(1000, 8));
    JammerConfig cfg;
    cfg.coverage = JammerCoverage::Barrage;
    cfg.sjnr_db = 0.0;
    const auto out = inject_jammer(s, cfg, std::nullopt, std::nullopt, 1.0, 0.0);
    CHECK(out.jam_power == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(span_power(out.waveform, {0, 100}) > 0.0);
    CHECK(span_power(out.waveform, {900, 1000}) > 0.0);
    cfg.coverage = JammerCoverage::SmartSsb;
    CHECK_THROWS_AS(inject_jammer(s, cfg, std::nullopt, FrequencyBand{-1, 1}, 1.0, 0.0), InvalidArgument);
    CHECK_THROWS_AS(inject_jammer(s, cfg, SampleRange{0, 10}, std::nullopt, 1.0, 0.0), InvalidArgument);
    CHECK_THROWS_AS(inject_jammer(s, cfg, SampleRange{900, 1200}, FrequencyBand{-1, 1}, 1.0, 0.0),
                    InvalidArgument);
  }

  TEST_CASE("names parse back") {
    for (auto k : {JammerKind::AWGN, JammerKind::BPSK, JammerKind::QAM8}) CHECK(parse_jammer_kind(to_string(k)) == k);
    CHECK(parse_jammer_coverage("barrage") == JammerCoverage::Barrage);
    CHECK(parse_channel_profile("nlos") == ChannelProfile::NlosRich);
    CHECK_THROWS_AS(parse_channel_profile("rayleigh"), InvalidArgument);
    CHECK_THROWS_AS(parse_jammer_kind("chirp"), InvalidArgument);
  }
}
