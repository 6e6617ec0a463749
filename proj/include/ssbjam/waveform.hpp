#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "ssbjam/types.hpp"

namespace ssbjam {

inline constexpr std::size_t kPssLength = 127;
inline constexpr std::size_t kSsbSubcarriers = 240;
inline constexpr std::size_t kSsbSymbols = 4;
inline constexpr std::size_t kPssFirstSubcarrier = 56;
inline constexpr std::size_t kPssLastSubcarrier = 182;
inline constexpr std::size_t kNullReCount = kSsbSubcarriers - kPssLength;  // 113

enum class Modulation : std::uint8_t { QPSK, QAM16, QAM64, QAM256 };

std::string_view to_string(Modulation m);
Modulation parse_modulation(std::string_view name);
// Square constellation scaled to unit average power, in natural index order.
const std::vector<Complex>& constellation(Modulation m);

// Degree-7 m-sequence s(i+7) = (s(i+4) + s(i)) mod 2, [s(6)..s(0)] = [1 1 1 0 1 1 0].
std::vector<std::uint8_t> m_sequence(std::size_t length);

struct PssSequence {
  int n_id2 = 0;
  std::array<double, kPssLength> symbols{};
};

// Φ_k = 1 - 2 s((k + 43 n_id2) mod 127).
PssSequence pss_sequence(int n_id2);

// Frequency-domain grid, symbol-major: cell (l, k) is OFDM symbol l, subcarrier k.
class ResourceGrid {
 public:
  ResourceGrid() = default;
  ResourceGrid(std::size_t n_subcarriers, std::size_t n_symbols)
      : n_subcarriers_(n_subcarriers), n_symbols_(n_symbols), cells_(n_subcarriers * n_symbols) {}

  std::size_t n_subcarriers() const { return n_subcarriers_; }
  std::size_t n_symbols() const { return n_symbols_; }

  Complex& at(std::size_t symbol, std::size_t subcarrier) {
    return cells_[symbol * n_subcarriers_ + subcarrier];
  }
  const Complex& at(std::size_t symbol, std::size_t subcarrier) const {
    return cells_[symbol * n_subcarriers_ + subcarrier];
  }

  std::span<Complex> symbol(std::size_t l) {
    return {cells_.data() + l * n_subcarriers_, n_subcarriers_};
  }
  std::span<const Complex> symbol(std::size_t l) const {
    return {cells_.data() + l * n_subcarriers_, n_subcarriers_};
  }

  const ComplexVec& cells() const { return cells_; }

  bool operator==(const ResourceGrid&) const = default;

 private:
  std::size_t n_subcarriers_ = 0;
  std::size_t n_symbols_ = 0;
  ComplexVec cells_;
};

// 240x4 SSB: PSS on symbol 0 at k = 56..182; seeded QPSK placeholders in the
// SSS/PBCH positions of symbols 1-3.
ResourceGrid build_ssb_grid(int n_id2, std::uint64_t placeholder_seed = 0);

// Subcarriers of SSB symbol 0 left empty around the PSS: {0..55} ∪ {183..239}.
const std::vector<std::size_t>& null_subcarriers();

// Copies the SSB into a wider carrier at ssb_offset and fills every other cell with
// random unit-power constellation points.
ResourceGrid embed_in_band(const ResourceGrid& ssb, std::size_t band_subcarriers,
                           std::size_t ssb_offset, Modulation data_modulation, std::uint64_t seed);

// Offset that centres a 240-subcarrier SSB inside a carrier of band_subcarriers.
std::size_t centered_ssb_offset(std::size_t band_subcarriers);

struct TimeSignal {
  ComplexVec samples;
  double sample_rate_hz = 0.0;
  std::size_t n_fft = 0;
  std::vector<std::size_t> cp_lengths;

  // Index of the first CP sample of OFDM symbol l.
  std::size_t symbol_start(std::size_t l) const;
};

// Normal cyclic prefix scaled from 144 samples at 2048-point FFT.
std::size_t normal_cp_length(std::size_t n_fft);

// FFT bin used for subcarrier k of an n_subcarriers grid centred on DC.
std::size_t subcarrier_bin(std::size_t k, std::size_t n_subcarriers, std::size_t n_fft);

// CP-OFDM: band-centred mapping, IFFT scaled by 1/n_fft, cyclic prefix prepended.
TimeSignal ofdm_modulate(const ResourceGrid& grid, std::size_t n_fft, std::size_t cp_length,
                         double scs_hz = 30e3);

// Inverse of ofdm_modulate for symbols starting at samples[0]: strip CP, unscaled
// forward FFT, keep the centred n_subcarriers.
ResourceGrid ofdm_demodulate(std::span<const Complex> samples, std::size_t n_fft,
                             std::size_t cp_length, std::size_t n_subcarriers,
                             std::size_t n_symbols);

// Time-domain body (no CP) of SSB symbol 0 carrying only the PSS for n_id2,
// normalized to unit energy. Length n_fft.
ComplexVec pss_time_reference(int n_id2, std::size_t n_fft);

double mean_power(std::span<const Complex> x);

}  // namespace ssbjam
