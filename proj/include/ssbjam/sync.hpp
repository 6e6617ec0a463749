#pragma once

#include <span>
#include <vector>

#include "ssbjam/types.hpp"
#include "ssbjam/waveform.hpp"

namespace ssbjam {

// Multiplies x[n] by e^{-j2π f n / fs}.
ComplexVec derotate(std::span<const Complex> x, double offset_hz, double sample_rate_hz);

// Symmetric linear grid of `points` frequencies over [-half_span_hz, +half_span_hz].
std::vector<double> cfo_grid(double half_span_hz, std::size_t points);

struct CfoEstimate {
  double cfo_hz = 0.0;
  int n_id2 = 0;              // -1 when searched against a caller-supplied reference
  std::size_t pss_start = 0;  // sample index where the reference body best aligns
  double peak = 0.0;          // correlation magnitude at that alignment
};

// Grid search: derotate by each candidate and keep the one maximizing the peak
// cross-correlation magnitude against `reference`. Ties go to the smallest |f|.
CfoEstimate estimate_cfo(const TimeSignal& signal, std::span<const Complex> reference,
                         std::span<const double> grid);

// Same search against all three PSS references, followed by a refinement pass at a
// tenth of the coarse step around the coarse winner.
CfoEstimate search_cfo(const TimeSignal& signal, std::size_t n_fft, double half_span_hz,
                       std::size_t points = 201);

// M(t) = |P(t)|² / R(t)² with P(t) = Σ y*(t+m) y(t+m+lag), R(t) = Σ |y(t+m+lag)|²,
// m = 0..window-1. With n_symbols > 1 the sums also run over the same window shifted
// by multiples of symbol_period, which suppresses spurious single-symbol peaks.
std::vector<double> schmidl_cox_metric(std::span<const Complex> y, std::size_t window,
                                       std::size_t lag, std::size_t n_symbols = 1,
                                       std::size_t symbol_period = 0);

struct TimingEstimate {
  std::size_t offset = 0;
  double metric = 0.0;
};

// Argmax of the CP metric (window = cp_length, lag = n_fft). Earliest index wins ties.
TimingEstimate estimate_timing(const TimeSignal& signal, std::size_t n_fft, std::size_t cp_length,
                               std::size_t n_symbols = 1);

// Derotates by -f_off, strips CPs, FFTs four symbols starting at t_off and keeps the
// centred 240 subcarriers.
ResourceGrid extract_ssb(const TimeSignal& signal, std::size_t t_off, double f_off,
                         std::size_t n_fft, std::size_t cp_length);

struct SyncOptions {
  std::size_t n_fft = 2048;
  std::size_t cp_length = 144;
  double scs_hz = 30e3;
  std::size_t grid_points = 201;
  double min_metric = 0.2;
  bool decision_directed = true;  // residual-CFO fit across the four SSB symbols
};

struct SyncResult {
  std::size_t t_off = 0;
  double cfo_hz = 0.0;
  int n_id2 = 0;
  double metric = 0.0;
};

// Blind SSB acquisition: CFO/sector search on the PSS, CP-metric coarse timing, PSS
// fine timing, optional decision-directed CFO polish. Throws NoSsbFound when the CP
// metric never reaches min_metric.
SyncResult synchronize(const TimeSignal& signal, const SyncOptions& opt);

}  // namespace ssbjam
