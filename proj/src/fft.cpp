#include "ssbjam/fft.hpp"

#include <fftw3.h>

#include <algorithm>
#include <bit>
#include <map>
#include <memory>
#include <mutex>
#include <utility>

namespace ssbjam {
namespace {

struct PlanDeleter {
  void operator()(fftw_plan_s* p) const { fftw_destroy_plan(p); }
};
using PlanHandle = std::unique_ptr<fftw_plan_s, PlanDeleter>;

// FFTW planning is not thread-safe, execution with the new-array interface is.
fftw_plan plan_for(std::size_t n, int sign) {
  static std::mutex mutex;
  static std::map<std::pair<std::size_t, int>, PlanHandle> cache;

  std::lock_guard lock(mutex);
  auto key = std::make_pair(n, sign);
  if (auto it = cache.find(key); it != cache.end()) return it->second.get();

  ComplexVec a(n), b(n);
  fftw_plan p = fftw_plan_dft_1d(static_cast<int>(n), reinterpret_cast<fftw_complex*>(a.data()),
                                 reinterpret_cast<fftw_complex*>(b.data()), sign,
                                 FFTW_ESTIMATE | FFTW_UNALIGNED);
  cache.emplace(key, PlanHandle(p));
  return p;
}

void execute(std::span<const Complex> in, std::span<Complex> out, int sign) {
  if (in.size() != out.size()) throw InvalidArgument("fft: input and output sizes differ");
  if (in.empty()) return;
  fftw_plan p = plan_for(in.size(), sign);
  // Plans are out-of-place; an aliased call goes through a scratch copy.
  if (in.data() == out.data()) {
    ComplexVec tmp(in.begin(), in.end());
    fftw_execute_dft(p, reinterpret_cast<fftw_complex*>(tmp.data()),
                     reinterpret_cast<fftw_complex*>(out.data()));
    return;
  }
  fftw_execute_dft(p, reinterpret_cast<fftw_complex*>(const_cast<Complex*>(in.data())),
                   reinterpret_cast<fftw_complex*>(out.data()));
}

}  // namespace

void fft(std::span<const Complex> in, std::span<Complex> out) { execute(in, out, FFTW_FORWARD); }

void ifft(std::span<const Complex> in, std::span<Complex> out) { execute(in, out, FFTW_BACKWARD); }

ComplexVec fft(std::span<const Complex> in) {
  ComplexVec out(in.size());
  fft(in, out);
  return out;
}

ComplexVec ifft(std::span<const Complex> in) {
  ComplexVec out(in.size());
  ifft(in, out);
  return out;
}

ComplexVec cross_correlate(std::span<const Complex> a, std::span<const Complex> b) {
  if (a.empty() || b.empty()) return {};
  const std::size_t out_len = a.size() + b.size() - 1;
  const std::size_t n = std::bit_ceil(out_len);

  ComplexVec fa(n), fb(n);
  std::copy(a.begin(), a.end(), fa.begin());
  std::copy(b.begin(), b.end(), fb.begin());
  fft(fa, fa);
  fft(fb, fb);
  for (std::size_t i = 0; i < n; ++i) fa[i] *= std::conj(fb[i]);
  ifft(fa, fa);

  // Circular index of lag L is L mod n; negative lags wrap to the tail.
  ComplexVec out(out_len);
  const double scale = 1.0 / static_cast<double>(n);
  const std::ptrdiff_t first_lag = -static_cast<std::ptrdiff_t>(b.size() - 1);
  for (std::size_t i = 0; i < out_len; ++i) {
    std::ptrdiff_t lag = first_lag + static_cast<std::ptrdiff_t>(i);
    std::size_t idx = lag >= 0 ? static_cast<std::size_t>(lag) : n - static_cast<std::size_t>(-lag);
    out[i] = fa[idx] * scale;
  }
  return out;
}

}  // namespace ssbjam
