#include "ssbjam/sync.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <numeric>

#include "ssbjam/fft.hpp"

namespace ssbjam {
namespace {

// Conjugated reference spectra at one FFT size, so each candidate needs a single
// forward FFT of the derotated capture plus one inverse FFT per reference.
class ReferenceBank {
 public:
  ReferenceBank(std::span<const std::span<const Complex>> refs, std::size_t signal_len)
      : n_(std::bit_ceil(signal_len)) {
    for (auto r : refs) {
      if (r.size() > signal_len) throw InvalidArgument("reference longer than the capture");
      ComplexVec padded(n_);
      std::copy(r.begin(), r.end(), padded.begin());
      ComplexVec spec = fft(padded);
      for (auto& v : spec) v = std::conj(v);
      spectra_.push_back(std::move(spec));
      lengths_.push_back(r.size());
    }
  }

  std::size_t size() const { return spectra_.size(); }

  struct Peak {
    double value = -1.0;
    std::size_t lag = 0;
  };

  // Best full-overlap correlation peak per reference for one derotated capture.
  std::vector<Peak> peaks(std::span<const Complex> x) {
    work_.assign(n_, Complex{});
    std::copy(x.begin(), x.end(), work_.begin());
    fft(work_, spec_);
    std::vector<Peak> out(spectra_.size());
    prod_.resize(n_);
    for (std::size_t r = 0; r < spectra_.size(); ++r) {
      for (std::size_t i = 0; i < n_; ++i) prod_[i] = spec_[i] * spectra_[r][i];
      ifft(prod_, prod_);
      const std::size_t last = x.size() - lengths_[r];
      for (std::size_t lag = 0; lag <= last; ++lag) {
        const double m = std::abs(prod_[lag]);
        if (m > out[r].value) out[r] = {m, lag};
      }
      out[r].value /= static_cast<double>(n_);
    }
    return out;
  }

 private:
  std::size_t n_;
  std::vector<ComplexVec> spectra_;
  std::vector<std::size_t> lengths_;
  ComplexVec work_, spec_ = ComplexVec(n_), prod_;
};

// Candidates visited in order of increasing |f| so a strict comparison breaks ties
// toward the smallest offset.
std::vector<double> by_magnitude(std::span<const double> grid) {
  std::vector<double> g(grid.begin(), grid.end());
  std::stable_sort(g.begin(), g.end(), [](double a, double b) { return std::abs(a) < std::abs(b); });
  return g;
}

CfoEstimate grid_search(const TimeSignal& signal, ReferenceBank& bank, std::span<const int> ids,
                        std::span<const double> grid) {
  CfoEstimate best;
  best.peak = -1.0;
  for (double f : by_magnitude(grid)) {
    const ComplexVec x = derotate(signal.samples, f, signal.sample_rate_hz);
    const auto peaks = bank.peaks(x);
    for (std::size_t r = 0; r < peaks.size(); ++r) {
      if (peaks[r].value > best.peak) {
        best = {f, ids[r], peaks[r].lag, peaks[r].value};
      }
    }
  }
  return best;
}

// Weighted least-squares slope of phase against time, in radians per sample.
double phase_slope(std::span<const double> t, std::span<const double> phi, std::span<const double> w) {
  double sw = 0, st = 0, sp = 0;
  for (std::size_t i = 0; i < t.size(); ++i) {
    sw += w[i];
    st += w[i] * t[i];
    sp += w[i] * phi[i];
  }
  if (sw <= 0) return 0.0;
  const double tm = st / sw, pm = sp / sw;
  double num = 0, den = 0;
  for (std::size_t i = 0; i < t.size(); ++i) {
    num += w[i] * (t[i] - tm) * (phi[i] - pm);
    den += w[i] * (t[i] - tm) * (t[i] - tm);
  }
  return den > 0 ? num / den : 0.0;
}

// Residual CFO from the common phase drift across the four SSB symbols: symbol 0 is
// referenced by the known PSS, symbols 1-3 by hard QPSK decisions on the PSS span.
double residual_cfo(const ResourceGrid& grid, int n_id2, std::size_t n_fft, std::size_t cp,
                    double fs) {
  const PssSequence pss = pss_sequence(n_id2);
  std::array<Complex, kPssLength> h;
  for (std::size_t k = 0; k < kPssLength; ++k) h[k] = grid.at(0, kPssFirstSubcarrier + k) * pss.symbols[k];

  std::vector<double> t, phi, w;
  t.push_back(0.0);
  phi.push_back(0.0);
  double ref_weight = 0.0;
  for (const auto& v : h) ref_weight += std::norm(v);
  w.push_back(ref_weight);

  const double inv_sqrt2 = 1.0 / std::sqrt(2.0);
  for (std::size_t l = 1; l < grid.n_symbols(); ++l) {
    Complex acc{};
    for (std::size_t k = 0; k < kPssLength; ++k) {
      if (std::norm(h[k]) == 0.0) continue;
      const Complex y = grid.at(l, kPssFirstSubcarrier + k);
      const Complex z = y / h[k];
      const Complex d((z.real() >= 0 ? 1.0 : -1.0) * inv_sqrt2, (z.imag() >= 0 ? 1.0 : -1.0) * inv_sqrt2);
      acc += y * std::conj(h[k] * d);
    }
    t.push_back(static_cast<double>(l * (n_fft + cp)));
    phi.push_back(std::arg(acc));
    w.push_back(std::abs(acc));
  }
  return phase_slope(t, phi, w) * fs / (2.0 * kPi);
}

}  // namespace

ComplexVec derotate(std::span<const Complex> x, double offset_hz, double sample_rate_hz) {
  ComplexVec out(x.size());
  const double w = -2.0 * kPi * offset_hz / sample_rate_hz;
  for (std::size_t n = 0; n < x.size(); ++n) out[n] = x[n] * std::polar(1.0, w * static_cast<double>(n));
  return out;
}

std::vector<double> cfo_grid(double half_span_hz, std::size_t points) {
  if (points == 0) throw InvalidArgument("cfo_grid: need at least one point");
  std::vector<double> g(points);
  if (points == 1) return {0.0};
  for (std::size_t i = 0; i < points; ++i) {
    g[i] = -half_span_hz + 2.0 * half_span_hz * static_cast<double>(i) / static_cast<double>(points - 1);
  }
  // Pin the centre exactly so symmetric grids contain zero.
  if (points % 2 == 1) g[points / 2] = 0.0;
  return g;
}

CfoEstimate estimate_cfo(const TimeSignal& signal, std::span<const Complex> reference,
                         std::span<const double> grid) {
  if (grid.empty()) throw InvalidArgument("estimate_cfo: empty frequency grid");
  if (reference.empty() || reference.size() > signal.samples.size()) {
    throw InvalidArgument("estimate_cfo: reference must be nonempty and no longer than the signal");
  }
  const std::span<const Complex> refs[] = {reference};
  ReferenceBank bank(refs, signal.samples.size());
  const int ids[] = {-1};
  return grid_search(signal, bank, ids, grid);
}

CfoEstimate search_cfo(const TimeSignal& signal, std::size_t n_fft, double half_span_hz,
                       std::size_t points) {
  std::array<ComplexVec, 3> refs;
  std::array<std::span<const Complex>, 3> views;
  for (int id = 0; id < 3; ++id) {
    refs[id] = pss_time_reference(id, n_fft);
    views[id] = refs[id];
  }
  if (n_fft > signal.samples.size()) throw InvalidArgument("search_cfo: capture shorter than one symbol");
  ReferenceBank bank(views, signal.samples.size());
  const int ids[] = {0, 1, 2};

  const std::vector<double> coarse = cfo_grid(half_span_hz, points);
  CfoEstimate best = grid_search(signal, bank, ids, coarse);
  if (points > 1) {
    const double step = 2.0 * half_span_hz / static_cast<double>(points - 1);
    std::vector<double> fine = cfo_grid(step, 21);
    for (auto& f : fine) f += best.cfo_hz;
    best = grid_search(signal, bank, ids, fine);
  }
  return best;
}

std::vector<double> schmidl_cox_metric(std::span<const Complex> y, std::size_t window,
                                       std::size_t lag, std::size_t n_symbols,
                                       std::size_t symbol_period) {
  if (window == 0) throw InvalidArgument("schmidl_cox_metric: window must be positive");
  if (n_symbols == 0) n_symbols = 1;
  const std::size_t reach = lag + window + (n_symbols - 1) * symbol_period;
  if (y.size() < reach) throw InvalidArgument("schmidl_cox_metric: window and lag exceed the signal");

  const std::size_t n_out = y.size() - reach + 1;
  std::vector<double> m(n_out, 0.0);
  for (std::size_t t = 0; t < n_out; ++t) {
    Complex p{};
    double r = 0.0;
    for (std::size_t s = 0; s < n_symbols; ++s) {
      const std::size_t base = t + s * symbol_period;
      for (std::size_t i = 0; i < window; ++i) {
        const Complex& late = y[base + i + lag];
        p += std::conj(y[base + i]) * late;
        r += std::norm(late);
      }
    }
    m[t] = r > 0.0 ? std::norm(p) / (r * r) : 0.0;
  }
  return m;
}

TimingEstimate estimate_timing(const TimeSignal& signal, std::size_t n_fft, std::size_t cp_length,
                               std::size_t n_symbols) {
  if (cp_length == 0) throw InvalidArgument("estimate_timing: cyclic prefix must be nonempty");
  if (signal.samples.size() < n_fft + cp_length) {
    throw InvalidArgument("estimate_timing: capture shorter than one CP-OFDM symbol");
  }
  const std::vector<double> m =
      schmidl_cox_metric(signal.samples, cp_length, n_fft, n_symbols, n_fft + cp_length);
  const auto it = std::max_element(m.begin(), m.end());  // first maximum
  return {static_cast<std::size_t>(it - m.begin()), *it};
}

ResourceGrid extract_ssb(const TimeSignal& signal, std::size_t t_off, double f_off,
                         std::size_t n_fft, std::size_t cp_length) {
  const std::size_t span = kSsbSymbols * (n_fft + cp_length);
  if (t_off + span > signal.samples.size()) {
    throw InvalidArgument("extract_ssb: SSB span runs past the end of the capture");
  }
  ComplexVec seg(signal.samples.begin() + static_cast<std::ptrdiff_t>(t_off),
                 signal.samples.begin() + static_cast<std::ptrdiff_t>(t_off + span));
  if (f_off != 0.0) {
    const double w = -2.0 * kPi * f_off / signal.sample_rate_hz;
    for (std::size_t n = 0; n < seg.size(); ++n) seg[n] *= std::polar(1.0, w * static_cast<double>(t_off + n));
  }
  return ofdm_demodulate(seg, n_fft, cp_length, kSsbSubcarriers, kSsbSymbols);
}

SyncResult synchronize(const TimeSignal& signal, const SyncOptions& opt) {
  const std::size_t period = opt.n_fft + opt.cp_length;
  if (signal.samples.size() < kSsbSymbols * period) {
    throw InvalidArgument("synchronize: capture shorter than one SSB");
  }
  const TimingEstimate coarse = estimate_timing(signal, opt.n_fft, opt.cp_length, kSsbSymbols);
  if (coarse.metric < opt.min_metric) {
    throw NoSsbFound("no SSB found: CP metric peak " + std::to_string(coarse.metric) +
                     " below " + std::to_string(opt.min_metric));
  }

  const CfoEstimate cfo = search_cfo(signal, opt.n_fft, opt.scs_hz / 2.0, opt.grid_points);
  if (cfo.pss_start < opt.cp_length) throw NoSsbFound("no SSB found: PSS peak before the first CP");

  SyncResult res;
  res.t_off = cfo.pss_start - opt.cp_length;
  res.cfo_hz = cfo.cfo_hz;
  res.n_id2 = cfo.n_id2;
  res.metric = coarse.metric;

  if (opt.decision_directed && res.t_off + kSsbSymbols * period <= signal.samples.size()) {
    const ResourceGrid g = extract_ssb(signal, res.t_off, res.cfo_hz, opt.n_fft, opt.cp_length);
    const double delta = residual_cfo(g, res.n_id2, opt.n_fft, opt.cp_length, signal.sample_rate_hz);
    // QPSK decisions are unambiguous while the per-symbol drift stays under a quarter turn.
    const double limit = signal.sample_rate_hz / (8.0 * static_cast<double>(period));
    if (std::abs(delta) < limit) res.cfo_hz += delta;
  }
  return res;
}

}  // namespace ssbjam
