#include "ssbjam/features.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <numeric>
#include <random>

#include "ssbjam/fft.hpp"

namespace ssbjam {

std::vector<double> pss_correlate(std::span<const Complex> y_pss, int n_id2) {
  const std::size_t n = y_pss.size();
  if (n == 0 || !std::has_single_bit(n)) {
    throw InvalidArgument("pss_correlate: input must be one N_FFT-sample symbol body");
  }
  const ComplexVec ref = pss_time_reference(n_id2, n);
  const ComplexVec c = cross_correlate(y_pss, ref);
  std::vector<double> out(2 * n, 0.0);
  for (std::size_t i = 0; i < c.size(); ++i) out[i] = std::abs(c[i]);
  return out;
}

HaarStage haar_dwt_stage(std::span<const double> x) {
  if (x.size() < 2 || x.size() % 2 != 0) {
    throw InvalidArgument("haar_dwt_stage: length must be even and at least 2");
  }
  const double s = 1.0 / std::sqrt(2.0);
  HaarStage out;
  out.approx.resize(x.size() / 2);
  out.detail.resize(x.size() / 2);
  for (std::size_t i = 0; i < x.size() / 2; ++i) {
    out.approx[i] = (x[2 * i] + x[2 * i + 1]) * s;
    out.detail[i] = (x[2 * i] - x[2 * i + 1]) * s;
  }
  return out;
}

std::vector<double> two_stage_dwt(std::span<const double> corr) {
  if (corr.size() < 4 || corr.size() % 4 != 0) {
    throw InvalidArgument("two_stage_dwt: correlation length must be a multiple of 4");
  }
  // Two orthonormal approximation stages collapse to (x0 + x1 + x2 + x3) / 2, which
  // keeps the constant-input gain of 2 exact in floating point.
  std::vector<double> out(corr.size() / 4);
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = ((corr[4 * i] + corr[4 * i + 1]) + (corr[4 * i + 2] + corr[4 * i + 3])) * 0.5;
  }
  return out;
}

Epnre epnre(const ResourceGrid& grid, double epsilon_floor) {
  if (grid.n_subcarriers() != kSsbSubcarriers || grid.n_symbols() == 0) {
    throw InvalidArgument("epnre: expects a 240-subcarrier SSB grid");
  }
  double acc = 0.0;
  for (std::size_t k : null_subcarriers()) acc += std::norm(grid.at(0, k));
  Epnre e;
  e.energy = acc / static_cast<double>(kNullReCount);
  const double floor_energy = std::exp2(epsilon_floor);
  e.epsilon = std::log2(std::max(e.energy, floor_energy));
  return e;
}

Observation assemble_observation(std::span<const std::vector<double>> corrs, double epsilon,
                                 std::optional<Hypothesis> label, const ObservationMeta& meta) {
  if (corrs.size() != 3) throw InvalidArgument("assemble_observation: need exactly three correlation rows");
  const std::size_t cols = corrs[0].size();
  if (cols == 0) throw InvalidArgument("assemble_observation: empty correlation row");
  for (const auto& c : corrs) {
    if (c.size() != cols) throw InvalidArgument("assemble_observation: correlation rows differ in length");
  }
  Observation obs;
  obs.cols = cols;
  obs.tensor.resize(kObservationRows * cols);
  for (std::size_t r = 0; r < 3; ++r) std::copy(corrs[r].begin(), corrs[r].end(), obs.tensor.begin() + static_cast<std::ptrdiff_t>(r * cols));
  std::fill(obs.tensor.begin() + static_cast<std::ptrdiff_t>(3 * cols), obs.tensor.end(), epsilon);
  obs.label = label;
  obs.meta = meta;
  return obs;
}

Observation circular_shift_augment(const Observation& obs, std::size_t n_segments,
                                   std::uint64_t seed) {
  if (n_segments == 0 || obs.cols % n_segments != 0) {
    throw InvalidArgument("circular_shift_augment: segment count must divide the row length");
  }
  std::vector<std::size_t> order(n_segments);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(mix_seed(seed, 0xa06));
  std::shuffle(order.begin(), order.end(), rng);

  Observation out = obs;
  const std::size_t seg = obs.cols / n_segments;
  for (std::size_t r = 0; r < 3; ++r) {
    const double* src = obs.tensor.data() + r * obs.cols;
    double* dst = out.tensor.data() + r * obs.cols;
    for (std::size_t s = 0; s < n_segments; ++s) std::copy(src + order[s] * seg, src + (order[s] + 1) * seg, dst + s * seg);
  }
  return out;
}

ComplexVec ssb_symbol_waveform(const ResourceGrid& ssb, std::size_t n_fft) {
  if (ssb.n_subcarriers() != kSsbSubcarriers || ssb.n_symbols() == 0) {
    throw InvalidArgument("ssb_symbol_waveform: expects a 240-subcarrier SSB grid");
  }
  if (n_fft < kSsbSubcarriers) throw InvalidArgument("ssb_symbol_waveform: n_fft below 240");
  ComplexVec bins(n_fft);
  const auto row = ssb.symbol(0);
  for (std::size_t k = 0; k < row.size(); ++k) bins[subcarrier_bin(k, row.size(), n_fft)] = row[k];
  ComplexVec body = ifft(bins);
  const double scale = 1.0 / static_cast<double>(n_fft);
  for (auto& v : body) v *= scale;
  return body;
}

Observation observation_from_grid(const ResourceGrid& ssb, std::size_t n_fft,
                                  std::optional<Hypothesis> label, const ObservationMeta& meta,
                                  double epsilon_floor) {
  const ComplexVec y_pss = ssb_symbol_waveform(ssb, n_fft);
  std::vector<std::vector<double>> rows;
  rows.reserve(3);
  for (int id = 0; id < 3; ++id) rows.push_back(two_stage_dwt(pss_correlate(y_pss, id)));
  return assemble_observation(rows, epnre(ssb, epsilon_floor).epsilon, label, meta);
}

}  // namespace ssbjam
