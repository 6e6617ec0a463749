#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "ssbjam/channel.hpp"
#include "ssbjam/types.hpp"
#include "ssbjam/waveform.hpp"

namespace ssbjam {

inline constexpr std::size_t kObservationRows = 5;
inline constexpr double kEpsilonFloor = -60.0;

// |full linear cross-correlation| of a length-N_FFT received symbol body with the
// unit-energy PSS reference: 2N-1 lags (zero lag at index N-1) plus one trailing zero.
std::vector<double> pss_correlate(std::span<const Complex> y_pss, int n_id2);

struct HaarStage {
  std::vector<double> approx;
  std::vector<double> detail;
};

// Orthonormal Haar pair transform: (x[2n] ± x[2n+1]) / √2.
HaarStage haar_dwt_stage(std::span<const double> x);

// Approximation of the approximation; output is a quarter of the input length.
std::vector<double> two_stage_dwt(std::span<const double> corr);

struct Epnre {
  double energy = 0.0;   // mean |Y(0,k)|² over the 113 null subcarriers
  double epsilon = 0.0;  // log2(energy), clamped at epsilon_floor
};

Epnre epnre(const ResourceGrid& grid, double epsilon_floor = kEpsilonFloor);

struct ObservationMeta {
  std::optional<double> sjnr_db;
  double distance_m = 0.0;
  Modulation modulation = Modulation::QPSK;
  int n_id2 = 0;
  std::optional<JammerKind> jammer;
  std::uint64_t seed = 0;
};

// 5 x cols feature tensor, row-major. Rows 0-2: compressed correlations against
// n_id2 = 0, 1, 2. Rows 3-4: ε broadcast.
struct Observation {
  std::size_t rows = kObservationRows;
  std::size_t cols = 0;
  std::vector<double> tensor;
  std::optional<Hypothesis> label;
  ObservationMeta meta;

  double at(std::size_t r, std::size_t c) const { return tensor[r * cols + c]; }
  std::span<const double> row(std::size_t r) const { return {tensor.data() + r * cols, cols}; }
  double epsilon() const { return tensor[3 * cols]; }
};

Observation assemble_observation(std::span<const std::vector<double>> corrs, double epsilon,
                                 std::optional<Hypothesis> label, const ObservationMeta& meta);

// Splits each correlation row into n_segments equal pieces and reorders them with one
// seeded permutation shared by the three rows. ε rows, label and metadata are kept.
Observation circular_shift_augment(const Observation& obs, std::size_t n_segments,
                                   std::uint64_t seed);

// Time-domain body of SSB symbol 0 rebuilt from its 240 received subcarriers, i.e.
// the received symbol restricted to the SSB band.
ComplexVec ssb_symbol_waveform(const ResourceGrid& ssb, std::size_t n_fft);

// Full feature pipeline on a received 240x4 SSB grid.
Observation observation_from_grid(const ResourceGrid& ssb, std::size_t n_fft,
                                  std::optional<Hypothesis> label, const ObservationMeta& meta,
                                  double epsilon_floor = kEpsilonFloor);

}  // namespace ssbjam
