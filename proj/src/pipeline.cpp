#include "ssbjam/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace ssbjam {

DataSplit split_for_detector(std::span<const Observation> data, double validation_fraction,
                             double calibration_fraction, std::uint64_t seed) {
  if (!(validation_fraction > 0.0 && validation_fraction < 1.0)) {
    throw InvalidArgument("split: validation fraction must lie in (0, 1)");
  }
  if (!(calibration_fraction > 0.0 && calibration_fraction <= 1.0)) {
    throw InvalidArgument("split: calibration fraction must lie in (0, 1]");
  }
  ObservationRefs all = refs_of(data);
  std::mt19937_64 rng(mix_seed(seed, 0x5b1));
  std::shuffle(all.begin(), all.end(), rng);
  const auto n_val = static_cast<std::size_t>(std::llround(validation_fraction * static_cast<double>(all.size())));
  const auto n_cal = static_cast<std::size_t>(std::llround(calibration_fraction * static_cast<double>(n_val)));
  DataSplit s;
  s.validation.assign(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(n_val));
  s.train.assign(all.begin() + static_cast<std::ptrdiff_t>(n_val), all.end());
  s.calibration.assign(s.validation.begin(), s.validation.begin() + static_cast<std::ptrdiff_t>(n_cal));
  return s;
}

ObservationRefs high_sjnr_subset(const ObservationRefs& refs, double cutoff_db, std::uint64_t seed) {
  ObservationRefs jammed, clean;
  for (const auto* o : refs) {
    if (o->label == Hypothesis::H1 && o->meta.sjnr_db && *o->meta.sjnr_db >= cutoff_db) jammed.push_back(o);
    if (o->label == Hypothesis::H0) clean.push_back(o);
  }
  std::mt19937_64 rng(mix_seed(seed, 0x2d2));
  std::shuffle(clean.begin(), clean.end(), rng);
  clean.resize(std::min(clean.size(), jammed.size()));
  ObservationRefs out = jammed;
  out.insert(out.end(), clean.begin(), clean.end());
  std::shuffle(out.begin(), out.end(), rng);
  return out;
}

ThresholdSet calibrate_thresholds(const ModelParams& model1, const ModelParams& model2,
                                  const ObservationRefs& calibration, double delta_fa) {
  ThresholdSet t;
  t.delta_fa = delta_fa;
  const DoubleThreshold d = calibrate_double_threshold(model1, calibration);
  t.gamma1 = d.gamma1;
  t.gamma2 = d.gamma2;
  ObservationRefs h0;
  for (const auto* o : calibration) {
    if (o->label == Hypothesis::H0) h0.push_back(o);
  }
  t.gamma_second = calibrate_gamma2(model2, h0, delta_fa);
  return t;
}

TrainedDetector train_detector(std::span<const Observation> data, const TrainConfig& cfg,
                               const ModelLayout& layout, const DetectorSettings& settings) {
  TrainedDetector d;
  d.split = split_for_detector(data, cfg.validation_fraction, settings.calibration_fraction, cfg.seed);
  d.dnn1 = train(d.split.train, d.split.validation, cfg, layout);
  const ObservationRefs train2 = high_sjnr_subset(d.split.train, settings.sjnr_cutoff_db, cfg.seed);
  const ObservationRefs val2 = high_sjnr_subset(d.split.validation, settings.sjnr_cutoff_db, cfg.seed + 1);
  d.dnn2 = cascade_train(train2, val2, cfg, layout);
  d.thresholds = calibrate_thresholds(d.dnn1.params, d.dnn2.params, d.split.calibration, settings.delta_fa);
  return d;
}

}  // namespace ssbjam
