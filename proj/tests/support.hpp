#pragma once

#include <cmath>
#include <complex>
#include <random>
#include <vector>

#include "ssbjam/dnn.hpp"
#include "ssbjam/waveform.hpp"

namespace testing {

using ssbjam::Complex;
using ssbjam::ComplexVec;

inline ComplexVec random_complex(std::size_t n, std::uint64_t seed, double sigma = 1.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, sigma / std::sqrt(2.0));
  ComplexVec x(n);
  for (auto& v : x) v = {g(rng), g(rng)};
  return x;
}

inline ssbjam::ResourceGrid random_grid(std::size_t n_sc, std::size_t n_sym, std::uint64_t seed) {
  ssbjam::ResourceGrid g(n_sc, n_sym);
  const auto x = random_complex(n_sc * n_sym, seed);
  for (std::size_t l = 0; l < n_sym; ++l)
    for (std::size_t k = 0; k < n_sc; ++k) g.at(l, k) = x[l * n_sc + k];
  return g;
}

inline double max_abs_diff(const ComplexVec& a, const ComplexVec& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

// Labeled observations of an arbitrary shape whose class shows up as a shifted mean
// in one row, so that a small network can learn them.
inline std::vector<ssbjam::Observation> toy_observations(std::size_t n, std::size_t cols, double shift,
                                                          std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<ssbjam::Observation> out;
  for (std::size_t i = 0; i < n; ++i) {
    ssbjam::Observation o;
    o.cols = cols;
    o.tensor.resize(o.rows * cols);
    const bool h1 = i % 2 == 0;
    for (auto& v : o.tensor) v = g(rng);
    for (std::size_t c = 0; c < cols; ++c) o.tensor[3 * cols + c] = o.tensor[4 * cols + c] = (h1 ? shift : -shift) + 0.3 * g(rng);
    o.label = h1 ? ssbjam::Hypothesis::H1 : ssbjam::Hypothesis::H0;
    o.meta.sjnr_db = h1 ? std::optional<double>(static_cast<double>(i % 40) - 10.0) : std::nullopt;
    out.push_back(std::move(o));
  }
  return out;
}

inline ssbjam::ModelLayout tiny_layout(std::size_t cols = 16) {
  ssbjam::ModelLayout l;
  l.input_cols = cols;
  l.conv = {{2, 3, 4}, {2, 3, 3}, {1, 2, 3}};
  l.fc_hidden = 6;
  return l;
}

}  // namespace testing
