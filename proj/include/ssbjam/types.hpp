#pragma once

#include <complex>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace ssbjam {

using Complex = std::complex<double>;
using ComplexVec = std::vector<Complex>;

inline constexpr double kPi = 3.14159265358979323846;
inline constexpr double kBoltzmann = 1.380649e-23;  // J/K
inline constexpr double kSpeedOfLight = 299792458.0;

enum class Hypothesis : std::uint8_t { H0 = 0, H1 = 1 };

inline const char* to_string(Hypothesis h) { return h == Hypothesis::H0 ? "H0" : "H1"; }

// Precondition violated by the caller.
class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Binary file did not match the expected layout.
class FormatError : public std::runtime_error {
 public:
  FormatError(const std::string& what, std::uint64_t byte_offset)
      : std::runtime_error(what + " (byte offset " + std::to_string(byte_offset) + ")"),
        byte_offset_(byte_offset) {}

  std::uint64_t byte_offset() const { return byte_offset_; }

 private:
  std::uint64_t byte_offset_;
};

// Text input could not be parsed.
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}

  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

// Blind synchronization did not lock onto an SSB.
class NoSsbFound : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Half-open sample index range [begin, end).
struct SampleRange {
  std::size_t begin = 0;
  std::size_t end = 0;

  std::size_t size() const { return end > begin ? end - begin : 0; }
  bool contains(std::size_t i) const { return i >= begin && i < end; }
};

// Band of subcarriers expressed in FFT-bin units relative to DC, inclusive on both
// ends. The 240-subcarrier SSB centred on DC is [-120, 119].
struct FrequencyBand {
  double low_bin = 0.0;
  double high_bin = 0.0;
};

// Stable 64-bit mixing used to derive independent sub-seeds from one master seed.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace ssbjam
