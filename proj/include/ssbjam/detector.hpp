#pragma once

#include <array>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ssbjam/dnn.hpp"

namespace ssbjam {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

struct ThresholdSet {
  double gamma1 = -kInf;        // below: H0 from the first network
  double gamma2 = kInf;         // above: H1 from the first network
  double gamma_second = kInf;   // second-network alarm threshold
  double delta_fa = 0.05;

  bool operator==(const ThresholdSet&) const = default;
};

// key=value text, 17 significant digits, inf/-inf for sentinels.
std::string format_thresholds(const ThresholdSet& t);
ThresholdSet parse_thresholds(const std::string& text);
void save_thresholds(const std::string& path, const ThresholdSet& t);
ThresholdSet load_thresholds(const std::string& path);

enum class Stage { DNN1, DNN2 };
std::string_view to_string(Stage s);

struct DetectionDecision {
  Hypothesis verdict = Hypothesis::H0;
  Stage stage = Stage::DNN1;
  double gamma_ratio_1 = 0.0;
  std::optional<double> gamma_ratio_2;
};

// ζ_H1 / ζ_H0 with ζ_H0 floored at 1e-12.
double score_ratio(const ScorePair& s);

struct DoubleThreshold {
  double gamma1 = -kInf;
  double gamma2 = kInf;
};

// Ranks by ratio, descending. gamma2 is the lowest ratio of the longest all-H1 run at
// the top, gamma1 the highest ratio of the longest all-H0 run at the bottom; an empty
// run yields the infinite sentinel. With strict comparisons outside [gamma1, gamma2]
// every calibration observation is then classified correctly.
DoubleThreshold calibrate_double_threshold(std::span<const double> ratios,
                                           std::span<const Hypothesis> labels);
DoubleThreshold calibrate_double_threshold(const ModelParams& model1, const ObservationRefs& calibration);

// Ratio at 1-based rank floor(delta_fa * N) of the descending H0 ratios (+inf for rank
// 0). When ties at that rank would let more than floor(delta_fa * N) observations reach
// the threshold, it is nudged to the next double above the tied value.
double calibrate_gamma2(std::span<const double> h0_ratios, double delta_fa);
double calibrate_gamma2(const ModelParams& model2, const ObservationRefs& h0_calibration, double delta_fa);

// The decision rule on precomputed ratios. ratio2 is only consulted on deferral.
DetectionDecision decide(double ratio1, std::optional<double> ratio2, const ThresholdSet& t);
bool defers(double ratio1, const ThresholdSet& t);

DetectionDecision detect(const Observation& obs, const ModelParams& model1, const ModelParams& model2,
                         const ThresholdSet& t);

struct BatchDetection {
  std::vector<DetectionDecision> decisions;
  // counts[stage][verdict], Stage and Hypothesis as indices.
  std::array<std::array<std::size_t, 2>, 2> counts{};

  std::size_t deferred() const { return counts[1][0] + counts[1][1]; }
  double deferral_fraction() const;
};

// Same decisions as detect() per observation; the second network only scores deferrals.
BatchDetection detect_batch(std::span<const Observation* const> observations, const ModelParams& model1,
                            const ModelParams& model2, const ThresholdSet& t);
BatchDetection detect_batch(std::span<const Observation> observations, const ModelParams& model1,
                            const ModelParams& model2, const ThresholdSet& t);

std::vector<double> score_ratios(const ModelParams& model, std::span<const Observation* const> data);

}  // namespace ssbjam
