#pragma once

#include <span>

#include "ssbjam/types.hpp"

namespace ssbjam {

// Unnormalized DFT: forward uses e^{-j2πkn/N}, inverse e^{+j2πkn/N}, neither scaled.
// Plans are cached per (size, direction) and shared; execution is thread-safe.
void fft(std::span<const Complex> in, std::span<Complex> out);
void ifft(std::span<const Complex> in, std::span<Complex> out);

ComplexVec fft(std::span<const Complex> in);
ComplexVec ifft(std::span<const Complex> in);

// Linear cross-correlation c[lag] = Σ_n a[n + lag] · conj(b[n]) for
// lag = -(b.size()-1) .. a.size()-1, returned in that order (length a+b-1).
ComplexVec cross_correlate(std::span<const Complex> a, std::span<const Complex> b);

}  // namespace ssbjam
