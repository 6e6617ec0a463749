#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ssbjam/channel.hpp"
#include "ssbjam/features.hpp"
#include "ssbjam/sync.hpp"
#include "ssbjam/waveform.hpp"

namespace ssbjam {

std::vector<double> linear_grid(double first, double last, double step);

struct ScenarioConfig {
  std::vector<double> sjnr_grid_db = linear_grid(-10.0, 30.0, 1.0);
  std::vector<double> distance_grid_m = linear_grid(10.0, 490.0, 20.0);
  std::size_t n_fft = 2048;
  double scs_hz = 30e3;
  std::size_t band_subcarriers = 0;  // 0: widest multiple of 12 within 80% of n_fft
  std::vector<Modulation> modulations = {Modulation::QPSK, Modulation::QAM16, Modulation::QAM64,
                                         Modulation::QAM256};
  ChannelConfig channel;  // seed and distance are set per draw
  JammerConfig jammer;    // seed and sjnr are set per draw
  double tx_power_db = 30.0;  // mean transmit sample power over the SSB, dB re 1
  double noise_temperature_k = 290.0;
  // Distances are drawn only where the expected SNR clears the drawn SJNR by this much,
  // so that every requested SJNR can be realized by a jammer.
  double feasibility_margin_db = 1.0;
  // Receiver gain control: features are computed after scaling the capture to unit
  // mean power over the SSB span, so they carry no absolute level.
  bool receiver_agc = false;
  std::size_t n_obs_per_class = 12300;
  std::uint64_t master_seed = 0;
  std::size_t threads = 1;

  double sample_rate_hz() const { return static_cast<double>(n_fft) * scs_hz; }
  std::size_t carrier_subcarriers() const;
  std::size_t cp_length() const { return normal_cp_length(n_fft); }
  void validate() const;
};

struct ScenarioDraw {
  Modulation modulation = Modulation::QPSK;
  int n_id2 = 0;
  double sjnr_db = 0.0;      // for H0 draws: only conditions the distance
  double distance_m = 10.0;
};

// Mean received-over-noise power ratio (dB) at a distance, before fading.
double expected_snr_db(const ScenarioConfig& cfg, double distance_m);
std::vector<double> feasible_distances(const ScenarioConfig& cfg, double sjnr_db);

struct CaptureLayout {
  std::size_t lead = 0;      // noise-only samples before the SSB
  std::size_t trail = 0;     // after it
  double cfo_hz = 0.0;       // applied after the channel
};

// Received time signal together with the quantities that produced it.
struct Capture {
  TimeSignal signal;
  SampleRange ssb_span;
  ComplexVec jammer;         // additive jammer term (zeros for H0)
  double reference_power = 0.0;
  double noise_power = 0.0;
  double jam_power = 0.0;
  bool feasible = true;
};

Capture synthesize_capture(const ScenarioConfig& cfg, const ScenarioDraw& draw, bool jammed,
                           std::uint64_t seed, const CaptureLayout& layout = {});

// Capture with ground-truth timing, SSB extraction, features. Label H1 iff jammed.
Observation generate_observation(const ScenarioConfig& cfg, const ScenarioDraw& draw, bool jammed,
                                 std::uint64_t seed);

struct ManifestEntry {
  std::size_t index = 0;
  Hypothesis label = Hypothesis::H0;
  ScenarioDraw draw;
  std::uint64_t seed = 0;
  std::size_t redraws = 0;  // jammer-infeasible draws discarded before this one
};

struct Dataset {
  std::vector<Observation> observations;
  std::vector<ManifestEntry> manifest;
};

// n_obs_per_class per class, H1 first then H0. Cells of (modulation, n_id2) are filled
// round-robin; SJNR is uniform on its grid, distance uniform on the feasible part of its
// grid. Tensors are rounded to float32 so that they survive persistence unchanged.
Dataset generate_dataset(const ScenarioConfig& cfg);

void write_manifest(const std::string& path, std::span<const ManifestEntry> manifest);

// Binary dataset file "SSBJAM01". Records keep label, SJNR (NaN when absent), distance
// and the float32 tensor; the rest of the metadata lives in the manifest.
void save_dataset(const std::string& path, std::span<const Observation> observations, std::size_t n_fft);
struct LoadedDataset {
  std::size_t n_fft = 0;
  std::vector<Observation> observations;
};
LoadedDataset load_dataset(const std::string& path);

// "I,Q" per line with an optional header line.
void write_iq_csv(const std::string& path, std::span<const Complex> samples);
ComplexVec read_iq_csv(const std::string& path);

// Scales grid cells by 1/sqrt(mean power of the signal over span).
void apply_agc(ResourceGrid& grid, const TimeSignal& signal, SampleRange span);

// Blind sync, SSB extraction and features; the result carries no label.
Observation ingest_capture(const TimeSignal& signal, const SyncOptions& opt, bool receiver_agc = false);
// The sample rate is taken as n_fft * scs_hz from the sync options.
Observation ingest_iq_csv(const std::string& path, const SyncOptions& opt, bool receiver_agc = false);

}  // namespace ssbjam
