#include "ssbjam/channel.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

#include "ssbjam/fft.hpp"

namespace ssbjam {
namespace {

Complex complex_gaussian(std::mt19937_64& rng, std::normal_distribution<double>& n, double power) {
  const double s = std::sqrt(power / 2.0);
  const double re = n(rng);
  const double im = n(rng);
  return {s * re, s * im};
}

// Rectangular 8-QAM: I in {-3,-1,1,3}, Q in {-1,1}.
const std::vector<Complex>& qam8_points() {
  static const std::vector<Complex> pts = {{-3, -1}, {-1, -1}, {1, -1}, {3, -1},
                                           {-3, 1},  {-1, 1},  {1, 1},  {3, 1}};
  return pts;
}

ComplexVec raw_jammer(JammerKind kind, std::size_t n, std::size_t samples_per_symbol,
                      std::mt19937_64& rng) {
  ComplexVec out(n);
  std::normal_distribution<double> gauss(0.0, 1.0);
  switch (kind) {
    case JammerKind::AWGN:
      for (auto& v : out) v = complex_gaussian(rng, gauss, 1.0);
      break;
    case JammerKind::BPSK:
    case JammerKind::QAM8: {
      std::uniform_int_distribution<int> bit(0, 1);
      std::uniform_int_distribution<std::size_t> pick(0, qam8_points().size() - 1);
      Complex sym;
      for (std::size_t i = 0; i < n; ++i) {
        if (i % samples_per_symbol == 0) {
          sym = kind == JammerKind::BPSK ? Complex(bit(rng) ? 1.0 : -1.0, 0.0) : qam8_points()[pick(rng)];
        }
        out[i] = sym;
      }
      break;
    }
  }
  return out;
}

void band_limit(ComplexVec& x, const FrequencyBand& band, std::size_t n_fft) {
  const std::size_t m = x.size();
  if (m == 0) return;
  ComplexVec spec = fft(x);
  const double bin_scale = static_cast<double>(n_fft) / static_cast<double>(m);
  for (std::size_t i = 0; i < m; ++i) {
    const double signed_bin = i < (m + 1) / 2 ? static_cast<double>(i) : static_cast<double>(i) - static_cast<double>(m);
    const double f = signed_bin * bin_scale;
    if (f < band.low_bin - 0.5 || f > band.high_bin + 0.5) spec[i] = 0.0;
  }
  ifft(spec, x);
  for (auto& v : x) v /= static_cast<double>(m);
}

}  // namespace

std::string_view to_string(ChannelProfile p) {
  return p == ChannelProfile::LosDominant ? "los" : "nlos";
}

ChannelProfile parse_channel_profile(std::string_view name) {
  if (name == "los") return ChannelProfile::LosDominant;
  if (name == "nlos") return ChannelProfile::NlosRich;
  throw InvalidArgument("unknown channel profile '" + std::string(name) + "' (expected los|nlos)");
}

std::string_view to_string(JammerKind k) {
  switch (k) {
    case JammerKind::AWGN: return "awgn";
    case JammerKind::BPSK: return "bpsk";
    case JammerKind::QAM8: return "8qam";
  }
  return "?";
}

std::string_view to_string(JammerCoverage c) {
  return c == JammerCoverage::SmartSsb ? "smart" : "barrage";
}

JammerKind parse_jammer_kind(std::string_view name) {
  for (auto k : {JammerKind::AWGN, JammerKind::BPSK, JammerKind::QAM8}) {
    if (name == to_string(k)) return k;
  }
  throw InvalidArgument("unknown jammer kind '" + std::string(name) + "' (expected awgn|bpsk|8qam)");
}

JammerCoverage parse_jammer_coverage(std::string_view name) {
  if (name == "smart") return JammerCoverage::SmartSsb;
  if (name == "barrage") return JammerCoverage::Barrage;
  throw InvalidArgument("unknown jammer coverage '" + std::string(name) + "' (expected smart|barrage)");
}

PowerDelayProfile power_delay_profile(const ChannelConfig& cfg, double sample_rate_hz) {
  if (cfg.n_taps == 0) throw InvalidArgument("channel: n_taps must be positive");
  if (cfg.delay_spread_ns < 0.0) throw InvalidArgument("channel: negative delay spread");

  PowerDelayProfile pdp;
  const double spread = cfg.delay_spread_ns * 1e-9 * sample_rate_hz;  // samples
  if (spread <= 0.0 || cfg.n_taps == 1) {
    pdp.delays = {0};
    pdp.powers = {1.0};
    return pdp;
  }
  const double step = 3.0 * spread / static_cast<double>(cfg.n_taps - 1);
  for (std::size_t i = 0; i < cfg.n_taps; ++i) {
    const auto d = static_cast<std::size_t>(std::lround(step * static_cast<double>(i)));
    const double p = std::exp(-static_cast<double>(d) / spread);
    if (!pdp.delays.empty() && pdp.delays.back() == d) {
      pdp.powers.back() += p;
    } else {
      pdp.delays.push_back(d);
      pdp.powers.push_back(p);
    }
  }
  double total = 0.0;
  for (double p : pdp.powers) total += p;
  for (double& p : pdp.powers) p /= total;
  return pdp;
}

ComplexVec channel_taps(const ChannelConfig& cfg, double sample_rate_hz) {
  const PowerDelayProfile pdp = power_delay_profile(cfg, sample_rate_hz);
  ComplexVec taps(pdp.delays.back() + 1);
  std::mt19937_64 rng(mix_seed(cfg.seed, 0xc4a));
  std::normal_distribution<double> gauss(0.0, 1.0);

  double scattered = 1.0;
  if (cfg.profile == ChannelProfile::LosDominant) {
    const double k = std::pow(10.0, cfg.los_k_factor_db / 10.0);
    scattered = 1.0 / (k + 1.0);
    taps[0] += std::sqrt(k / (k + 1.0));
  }
  for (std::size_t i = 0; i < pdp.delays.size(); ++i) {
    taps[pdp.delays[i]] += complex_gaussian(rng, gauss, pdp.powers[i] * scattered);
  }
  return taps;
}

double fspl_db(double wavelength_m, double distance_m) {
  if (!(wavelength_m > 0.0) || !(distance_m > 0.0)) {
    throw InvalidArgument("fspl_db: wavelength and distance must be positive");
  }
  const double ratio = (wavelength_m * wavelength_m) / (4.0 * kPi * kPi * distance_m * distance_m);
  return 20.0 * std::log10(ratio);
}

double path_gain_db(const ChannelConfig& cfg) {
  if (!(cfg.carrier_hz > 0.0)) throw InvalidArgument("channel: carrier must be positive");
  return fspl_db(kSpeedOfLight / cfg.carrier_hz, cfg.distance_m);
}

TimeSignal apply_channel(const TimeSignal& signal, std::span<const Complex> taps, double gain_db) {
  TimeSignal out = signal;
  const double amp = std::pow(10.0, gain_db / 20.0);
  const auto& x = signal.samples;
  for (std::size_t n = 0; n < x.size(); ++n) {
    Complex acc{};
    const std::size_t span = std::min(taps.size(), n + 1);
    for (std::size_t d = 0; d < span; ++d) acc += taps[d] * x[n - d];
    out.samples[n] = acc * amp;
  }
  return out;
}

TimeSignal apply_channel(const TimeSignal& signal, const ChannelConfig& cfg) {
  if (signal.samples.empty()) throw InvalidArgument("apply_channel: empty signal");
  const ComplexVec taps = channel_taps(cfg, signal.sample_rate_hz);
  return apply_channel(signal, taps, path_gain_db(cfg));
}

double thermal_noise_power(double temperature_k, double bandwidth_hz) {
  if (!(temperature_k > 0.0) || !(bandwidth_hz > 0.0)) {
    throw InvalidArgument("thermal noise: temperature and bandwidth must be positive");
  }
  return kBoltzmann * temperature_k * bandwidth_hz;
}

ComplexVec thermal_noise(std::size_t n, double temperature_k, double bandwidth_hz,
                         std::uint64_t seed) {
  const double power = thermal_noise_power(temperature_k, bandwidth_hz);
  std::mt19937_64 rng(mix_seed(seed, 0x7e3));
  std::normal_distribution<double> gauss(0.0, 1.0);
  ComplexVec out(n);
  for (auto& v : out) v = complex_gaussian(rng, gauss, power);
  return out;
}

TimeSignal add_thermal_noise(const TimeSignal& signal, double temperature_k,
                             double bandwidth_hz, std::uint64_t seed) {
  TimeSignal out = signal;
  const ComplexVec noise = thermal_noise(signal.samples.size(), temperature_k, bandwidth_hz, seed);
  for (std::size_t i = 0; i < noise.size(); ++i) out.samples[i] += noise[i];
  return out;
}

JammerOutcome inject_jammer(const TimeSignal& signal, const JammerConfig& cfg,
                            std::optional<SampleRange> ssb_span,
                            std::optional<FrequencyBand> ssb_band, double reference_power,
                            double noise_power) {
  const std::size_t n = signal.samples.size();
  const bool smart = cfg.coverage == JammerCoverage::SmartSsb;
  if (smart && (!ssb_span || !ssb_band)) {
    throw InvalidArgument("inject_jammer: smart-SSB coverage needs the SSB span and band");
  }
  const SampleRange span = ssb_span.value_or(SampleRange{0, n});
  if (span.end > n || span.size() == 0) throw InvalidArgument("inject_jammer: SSB span outside the signal");

  std::mt19937_64 rng(mix_seed(cfg.seed, 0x1a3));
  JammerOutcome result;
  result.waveform.assign(n, Complex{});

  if (smart) {
    const double width = ssb_band->high_bin - ssb_band->low_bin + 1.0;
    const auto sps = static_cast<std::size_t>(
        std::max(1.0, std::floor(static_cast<double>(signal.n_fft) / width)));
    ComplexVec burst = raw_jammer(cfg.kind, span.size(), sps, rng);
    band_limit(burst, *ssb_band, signal.n_fft);
    std::copy(burst.begin(), burst.end(), result.waveform.begin() + static_cast<std::ptrdiff_t>(span.begin));
  } else {
    result.waveform = raw_jammer(cfg.kind, n, 1, rng);
  }

  const double raw_power = mean_power(std::span<const Complex>(result.waveform).subspan(span.begin, span.size()));
  const double target = reference_power / std::pow(10.0, cfg.sjnr_db / 10.0) - noise_power;
  double scale = 0.0;
  if (target > 0.0 && raw_power > 0.0) {
    scale = std::sqrt(target / raw_power);
  } else {
    result.feasible = false;
  }
  for (auto& v : result.waveform) v *= scale;
  result.jam_power = raw_power * scale * scale;

  result.signal = signal;
  for (std::size_t i = 0; i < n; ++i) result.signal.samples[i] += result.waveform[i];
  return result;
}

}  // namespace ssbjam
