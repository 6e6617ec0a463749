#include "ssbjam/waveform.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <map>
#include <mutex>
#include <random>
#include <string>

#include "ssbjam/fft.hpp"

namespace ssbjam {
namespace {

std::vector<Complex> square_qam(int bits) {
  const int side = 1 << (bits / 2);
  std::vector<Complex> points;
  points.reserve(static_cast<std::size_t>(side * side));
  double energy = 0.0;
  for (int i = 0; i < side; ++i) {
    for (int q = 0; q < side; ++q) {
      Complex p(2.0 * i - (side - 1), 2.0 * q - (side - 1));
      points.push_back(p);
      energy += std::norm(p);
    }
  }
  const double scale = 1.0 / std::sqrt(energy / static_cast<double>(points.size()));
  for (auto& p : points) p *= scale;
  return points;
}

void fill_random(std::span<Complex> cells, const std::vector<Complex>& points,
                 std::mt19937_64& rng) {
  std::uniform_int_distribution<std::size_t> pick(0, points.size() - 1);
  for (auto& c : cells) c = points[pick(rng)];
}

}  // namespace

std::string_view to_string(Modulation m) {
  switch (m) {
    case Modulation::QPSK: return "QPSK";
    case Modulation::QAM16: return "16QAM";
    case Modulation::QAM64: return "64QAM";
    case Modulation::QAM256: return "256QAM";
  }
  return "?";
}

Modulation parse_modulation(std::string_view name) {
  for (auto m : {Modulation::QPSK, Modulation::QAM16, Modulation::QAM64, Modulation::QAM256}) {
    if (name == to_string(m)) return m;
  }
  throw InvalidArgument("unknown modulation '" + std::string(name) + "'");
}

const std::vector<Complex>& constellation(Modulation m) {
  static const std::vector<Complex> qpsk = square_qam(2);
  static const std::vector<Complex> qam16 = square_qam(4);
  static const std::vector<Complex> qam64 = square_qam(6);
  static const std::vector<Complex> qam256 = square_qam(8);
  switch (m) {
    case Modulation::QPSK: return qpsk;
    case Modulation::QAM16: return qam16;
    case Modulation::QAM64: return qam64;
    case Modulation::QAM256: return qam256;
  }
  return qpsk;
}

std::vector<std::uint8_t> m_sequence(std::size_t length) {
  if (length < 7) throw InvalidArgument("m_sequence: length must be at least 7");
  std::vector<std::uint8_t> s(length);
  const std::uint8_t init[7] = {0, 1, 1, 0, 1, 1, 1};  // s(0)..s(6)
  std::copy(std::begin(init), std::end(init), s.begin());
  for (std::size_t i = 0; i + 7 < length; ++i) s[i + 7] = (s[i + 4] + s[i]) % 2;
  return s;
}

PssSequence pss_sequence(int n_id2) {
  if (n_id2 < 0 || n_id2 > 2) throw InvalidArgument("pss_sequence: n_id2 must be 0, 1 or 2");
  static const std::vector<std::uint8_t> s = m_sequence(kPssLength);
  PssSequence pss;
  pss.n_id2 = n_id2;
  for (std::size_t k = 0; k < kPssLength; ++k) {
    std::size_t m = (k + 43 * static_cast<std::size_t>(n_id2)) % kPssLength;
    pss.symbols[k] = 1.0 - 2.0 * s[m];
  }
  return pss;
}

ResourceGrid build_ssb_grid(int n_id2, std::uint64_t placeholder_seed) {
  const PssSequence pss = pss_sequence(n_id2);
  ResourceGrid grid(kSsbSubcarriers, kSsbSymbols);
  for (std::size_t k = 0; k < kPssLength; ++k) grid.at(0, kPssFirstSubcarrier + k) = pss.symbols[k];

  std::mt19937_64 rng(mix_seed(placeholder_seed, 0x55b));
  const auto& qpsk = constellation(Modulation::QPSK);
  fill_random(grid.symbol(1), qpsk, rng);
  fill_random(grid.symbol(3), qpsk, rng);
  // Symbol 2: SSS on the PSS span, PBCH on 0..47 and 192..239, guard zeros between.
  auto sym2 = grid.symbol(2);
  fill_random(sym2.subspan(0, 48), qpsk, rng);
  fill_random(sym2.subspan(kPssFirstSubcarrier, kPssLength), qpsk, rng);
  fill_random(sym2.subspan(192, 48), qpsk, rng);
  return grid;
}

const std::vector<std::size_t>& null_subcarriers() {
  static const std::vector<std::size_t> idx = [] {
    std::vector<std::size_t> v;
    for (std::size_t k = 0; k < kSsbSubcarriers; ++k) {
      if (k < kPssFirstSubcarrier || k > kPssLastSubcarrier) v.push_back(k);
    }
    return v;
  }();
  return idx;
}

ResourceGrid embed_in_band(const ResourceGrid& ssb, std::size_t band_subcarriers,
                           std::size_t ssb_offset, Modulation data_modulation,
                           std::uint64_t seed) {
  if (ssb_offset + ssb.n_subcarriers() > band_subcarriers) {
    throw InvalidArgument("embed_in_band: SSB does not fit inside the carrier at this offset");
  }
  ResourceGrid band(band_subcarriers, ssb.n_symbols());
  std::mt19937_64 rng(seed);
  const auto& points = constellation(data_modulation);
  for (std::size_t l = 0; l < ssb.n_symbols(); ++l) {
    auto row = band.symbol(l);
    fill_random(row.subspan(0, ssb_offset), points, rng);
    const std::size_t upper = ssb_offset + ssb.n_subcarriers();
    fill_random(row.subspan(upper, band_subcarriers - upper), points, rng);
    auto src = ssb.symbol(l);
    std::copy(src.begin(), src.end(), row.begin() + static_cast<std::ptrdiff_t>(ssb_offset));
  }
  return band;
}

std::size_t centered_ssb_offset(std::size_t band_subcarriers) {
  if (band_subcarriers < kSsbSubcarriers) {
    throw InvalidArgument("centered_ssb_offset: carrier narrower than an SSB");
  }
  return band_subcarriers / 2 - kSsbSubcarriers / 2;
}

std::size_t TimeSignal::symbol_start(std::size_t l) const {
  std::size_t start = 0;
  for (std::size_t i = 0; i < l && i < cp_lengths.size(); ++i) start += n_fft + cp_lengths[i];
  return start;
}

std::size_t normal_cp_length(std::size_t n_fft) {
  return static_cast<std::size_t>(std::lround(static_cast<double>(n_fft) * 144.0 / 2048.0));
}

std::size_t subcarrier_bin(std::size_t k, std::size_t n_subcarriers, std::size_t n_fft) {
  const auto f = static_cast<std::ptrdiff_t>(k) - static_cast<std::ptrdiff_t>(n_subcarriers / 2);
  const auto n = static_cast<std::ptrdiff_t>(n_fft);
  return static_cast<std::size_t>(((f % n) + n) % n);
}

TimeSignal ofdm_modulate(const ResourceGrid& grid, std::size_t n_fft, std::size_t cp_length,
                         double scs_hz) {
  if (n_fft < grid.n_subcarriers()) throw InvalidArgument("ofdm_modulate: n_fft below subcarrier count");
  if (!std::has_single_bit(n_fft)) throw InvalidArgument("ofdm_modulate: n_fft must be a power of two");
  if (cp_length > n_fft) throw InvalidArgument("ofdm_modulate: cyclic prefix longer than symbol");

  TimeSignal out;
  out.n_fft = n_fft;
  out.sample_rate_hz = scs_hz * static_cast<double>(n_fft);
  out.cp_lengths.assign(grid.n_symbols(), cp_length);
  out.samples.reserve(grid.n_symbols() * (n_fft + cp_length));

  ComplexVec bins(n_fft), body(n_fft);
  const double scale = 1.0 / static_cast<double>(n_fft);
  for (std::size_t l = 0; l < grid.n_symbols(); ++l) {
    std::fill(bins.begin(), bins.end(), Complex{});
    auto row = grid.symbol(l);
    for (std::size_t k = 0; k < row.size(); ++k) bins[subcarrier_bin(k, row.size(), n_fft)] = row[k];
    ifft(bins, body);
    for (auto& v : body) v *= scale;
    out.samples.insert(out.samples.end(), body.end() - static_cast<std::ptrdiff_t>(cp_length), body.end());
    out.samples.insert(out.samples.end(), body.begin(), body.end());
  }
  return out;
}

ResourceGrid ofdm_demodulate(std::span<const Complex> samples, std::size_t n_fft,
                             std::size_t cp_length, std::size_t n_subcarriers,
                             std::size_t n_symbols) {
  if (n_fft < n_subcarriers) throw InvalidArgument("ofdm_demodulate: n_fft below subcarrier count");
  if (samples.size() < n_symbols * (n_fft + cp_length)) {
    throw InvalidArgument("ofdm_demodulate: not enough samples for the requested symbols");
  }
  ResourceGrid grid(n_subcarriers, n_symbols);
  ComplexVec bins(n_fft);
  for (std::size_t l = 0; l < n_symbols; ++l) {
    fft(samples.subspan(l * (n_fft + cp_length) + cp_length, n_fft), bins);
    auto row = grid.symbol(l);
    for (std::size_t k = 0; k < n_subcarriers; ++k) row[k] = bins[subcarrier_bin(k, n_subcarriers, n_fft)];
  }
  return grid;
}

ComplexVec pss_time_reference(int n_id2, std::size_t n_fft) {
  static std::mutex mutex;
  static std::map<std::pair<int, std::size_t>, ComplexVec> cache;
  {
    std::lock_guard lock(mutex);
    if (auto it = cache.find({n_id2, n_fft}); it != cache.end()) return it->second;
  }
  ResourceGrid grid(kSsbSubcarriers, 1);
  const PssSequence pss = pss_sequence(n_id2);
  for (std::size_t k = 0; k < kPssLength; ++k) grid.at(0, kPssFirstSubcarrier + k) = pss.symbols[k];
  TimeSignal sig = ofdm_modulate(grid, n_fft, 0);
  const double energy = mean_power(sig.samples) * static_cast<double>(sig.samples.size());
  const double scale = 1.0 / std::sqrt(energy);
  for (auto& v : sig.samples) v *= scale;

  std::lock_guard lock(mutex);
  cache.emplace(std::make_pair(n_id2, n_fft), sig.samples);
  return sig.samples;
}

double mean_power(std::span<const Complex> x) {
  if (x.empty()) return 0.0;
  double acc = 0.0;
  for (const auto& v : x) acc += std::norm(v);
  return acc / static_cast<double>(x.size());
}

}  // namespace ssbjam
