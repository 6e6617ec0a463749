#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string_view>

#include "ssbjam/types.hpp"
#include "ssbjam/waveform.hpp"

namespace ssbjam {

enum class ChannelProfile : std::uint8_t { LosDominant, NlosRich };

std::string_view to_string(ChannelProfile p);
ChannelProfile parse_channel_profile(std::string_view name);

// Tapped-delay-line channel. Taps sit on integer sample delays spread uniformly over
// three RMS delay spreads with an exponential power-delay profile. LosDominant adds a
// deterministic first-tap component at the given Rician K-factor.
struct ChannelConfig {
  ChannelProfile profile = ChannelProfile::LosDominant;
  double delay_spread_ns = 30.0;
  std::size_t n_taps = 6;
  std::uint64_t seed = 0;
  double carrier_hz = 632e6;
  double distance_m = 10.0;
  double los_k_factor_db = 13.3;
};

struct PowerDelayProfile {
  std::vector<std::size_t> delays;  // samples, strictly increasing
  std::vector<double> powers;       // expected tap powers, summing to 1
};

PowerDelayProfile power_delay_profile(const ChannelConfig& cfg, double sample_rate_hz);

// One seeded realization of the impulse response, indexed by sample delay.
ComplexVec channel_taps(const ChannelConfig& cfg, double sample_rate_hz);

// 20·log10(λ² / (4π² d²)). Negative values are attenuation.
double fspl_db(double wavelength_m, double distance_m);
double path_gain_db(const ChannelConfig& cfg);

// Causal FIR filtering by the taps (output length equals input length), then
// amplitude scaling by the linear path gain.
TimeSignal apply_channel(const TimeSignal& signal, std::span<const Complex> taps, double gain_db);
TimeSignal apply_channel(const TimeSignal& signal, const ChannelConfig& cfg);

double thermal_noise_power(double temperature_k, double bandwidth_hz);
// Circularly-symmetric complex Gaussian samples of power k_B·T·B.
ComplexVec thermal_noise(std::size_t n, double temperature_k, double bandwidth_hz,
                         std::uint64_t seed);
TimeSignal add_thermal_noise(const TimeSignal& signal, double temperature_k,
                             double bandwidth_hz, std::uint64_t seed);

enum class JammerKind : std::uint8_t { AWGN, BPSK, QAM8 };
enum class JammerCoverage : std::uint8_t { SmartSsb, Barrage };

std::string_view to_string(JammerKind k);
std::string_view to_string(JammerCoverage c);
JammerKind parse_jammer_kind(std::string_view name);
JammerCoverage parse_jammer_coverage(std::string_view name);

struct JammerConfig {
  JammerKind kind = JammerKind::AWGN;
  JammerCoverage coverage = JammerCoverage::SmartSsb;
  double sjnr_db = 0.0;
  std::uint64_t seed = 0;
};

struct JammerOutcome {
  TimeSignal signal;       // input plus jammer
  ComplexVec waveform;     // the additive jammer alone, same length as the signal
  double jam_power = 0.0;  // mean power over the SSB span
  bool feasible = true;    // false when noise alone already exceeds the SJNR budget
};

// Scales the jammer so reference_power / (jam_power + noise_power) over the SSB span
// equals 10^(sjnr_db/10). When noise_power alone is too large, the jammer is zero.
// Smart-SSB coverage requires both span and band; barrage uses the span (or the whole
// signal when absent) only for power measurement.
JammerOutcome inject_jammer(const TimeSignal& signal, const JammerConfig& cfg,
                            std::optional<SampleRange> ssb_span,
                            std::optional<FrequencyBand> ssb_band, double reference_power,
                            double noise_power);

}  // namespace ssbjam
