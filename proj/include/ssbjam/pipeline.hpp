#pragma once

#include <cstdint>
#include <span>

#include "ssbjam/config.hpp"
#include "ssbjam/detector.hpp"
#include "ssbjam/dnn.hpp"

namespace ssbjam {

// One seeded shuffle of a labeled set: validation_fraction goes to validation, and the
// first calibration_fraction of that validation part is also used for thresholds.
struct DataSplit {
  ObservationRefs train, validation, calibration;
};
DataSplit split_for_detector(std::span<const Observation> data, double validation_fraction,
                             double calibration_fraction, std::uint64_t seed);

// Jammed observations with SJNR >= cutoff plus an equally sized, seeded pick of the
// non-jammed ones (all of them if there are fewer). Order is shuffled.
ObservationRefs high_sjnr_subset(const ObservationRefs& refs, double cutoff_db, std::uint64_t seed);

// gamma1/gamma2 from the first network on the whole calibration set, gamma_second from
// the second network on its H0 part.
ThresholdSet calibrate_thresholds(const ModelParams& model1, const ModelParams& model2,
                                  const ObservationRefs& calibration, double delta_fa);

struct TrainedDetector {
  TrainResult dnn1, dnn2;
  ThresholdSet thresholds;
  DataSplit split;
};

// First network end to end on the training split; second network cascade-trained on the
// high-SJNR subset; thresholds from the calibration split.
TrainedDetector train_detector(std::span<const Observation> data, const TrainConfig& cfg,
                               const ModelLayout& layout, const DetectorSettings& settings);

}  // namespace ssbjam
