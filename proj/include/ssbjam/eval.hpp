#pragma once

#include <span>
#include <string>
#include <vector>

#include "ssbjam/detector.hpp"

namespace ssbjam {

// Counts follow the convention where the non-jammed class is "positive":
// TP = H0 kept as H0, TN = H1 detected as H1, FP = H1 missed (called H0),
// FN = H0 flagged as H1 (false alarm).
struct Confusion {
  std::size_t tp = 0, tn = 0, fp = 0, fn = 0;

  std::size_t total() const { return tp + tn + fp + fn; }
  // Row-normalized by true class; a row with no observations gives 0.
  double tp_rate() const;  // H0 row
  double fn_rate() const;
  double tn_rate() const;  // H1 row
  double fp_rate() const;
  double detection_rate() const { return tn_rate(); }
  double false_alarm_rate() const { return fn_rate(); }
};

Confusion confusion(std::span<const Hypothesis> decisions, std::span<const Hypothesis> labels);

struct RocPoint {
  double p_fa = 0.0;
  double p_d = 0.0;
};

struct RocCurves {
  std::vector<RocPoint> single;  // first network, one threshold
  std::vector<RocPoint> dtddnn;  // double threshold plus second network
};

// Ratios of both networks on a labeled set. ratio2 is filled for every observation so
// that any threshold set can be replayed without rescoring.
struct ScoredSet {
  std::vector<double> ratio1, ratio2;
  std::vector<Hypothesis> labels;
};
ScoredSet score_set(const ModelParams& model1, const ModelParams& model2, std::span<const Observation* const> data);

// For each target false-alarm rate, thresholds are set on the H0 part of the
// calibration scores (order statistic, as calibrate_gamma2) and the resulting
// (P_FA, P_D) is measured on the test scores. The double-threshold curve keeps
// gamma1/gamma2 from `base` and only moves gamma_second. Both curves start with (0, 0)
// and end with (1, 1).
RocCurves roc_curve(const ScoredSet& calibration, const ScoredSet& test, const ThresholdSet& base,
                    std::span<const double> fa_grid);
RocCurves roc_curve(const ModelParams& model1, const ModelParams& model2, const ThresholdSet& base,
                    std::span<const Observation* const> calibration, std::span<const Observation* const> test,
                    std::span<const double> fa_grid);

// Monotone closure (running maximum of P_D along increasing P_FA) and linear
// interpolation of P_D at p_fa.
double roc_detection_at(std::span<const RocPoint> curve, double p_fa);

// Fraction of grid points where the double-threshold curve is at least the single curve.
double roc_dominance(const RocCurves& curves, std::span<const double> fa_grid);

// Misclassified H1 observations per SJNR bin [edge_i, edge_{i+1}); the last bin is closed.
std::vector<std::size_t> sjnr_miss_profile(std::span<const Hypothesis> decisions,
                                           std::span<const Observation* const> observations,
                                           std::span<const double> bin_edges_db);

// Detected fraction of H1 observations with SJNR in [lo, hi].
double detection_rate_in(std::span<const Hypothesis> decisions, std::span<const Observation* const> observations,
                         double sjnr_lo_db, double sjnr_hi_db);

void write_confusion_csv(const std::string& path, const Confusion& c, const std::string& variant);
void write_confusion_csv(const std::string& path, std::span<const std::pair<std::string, Confusion>> rows);
void write_roc_csv(const std::string& path, const RocCurves& curves);
void write_sjnr_miss_csv(const std::string& path, std::span<const double> bin_edges_db,
                         std::span<const std::size_t> misses, const std::string& variant);
void write_sjnr_miss_csv(const std::string& path, std::span<const double> bin_edges_db,
                         std::span<const std::pair<std::string, std::vector<std::size_t>>> rows);

}  // namespace ssbjam
