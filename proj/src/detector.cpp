#include "ssbjam/detector.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>

namespace ssbjam {

namespace {

std::string format_value(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

double parse_value(std::string_view v, std::size_t line) {
  if (v == "inf" || v == "+inf") return kInf;
  if (v == "-inf") return -kInf;
  double out = 0.0;
  const auto [end, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || end != v.data() + v.size() || std::isnan(out)) {
    throw ParseError("invalid number '" + std::string(v) + "'", line);
  }
  return out;
}

}  // namespace

std::string format_thresholds(const ThresholdSet& t) {
  return "gamma1=" + format_value(t.gamma1) + "\ngamma2=" + format_value(t.gamma2) +
         "\ngamma_second=" + format_value(t.gamma_second) + "\ndelta_fa=" + format_value(t.delta_fa) + "\n";
}

ThresholdSet parse_thresholds(const std::string& text) {
  ThresholdSet t;
  std::array<bool, 4> seen{};
  std::istringstream in(text);
  std::string raw;
  std::size_t line = 0;
  while (std::getline(in, raw)) {
    ++line;
    const std::string_view s = trim(raw);
    if (s.empty() || s.front() == '#') continue;
    const auto eq = s.find('=');
    if (eq == std::string_view::npos) throw ParseError("expected key=value", line);
    const std::string_view key = trim(s.substr(0, eq));
    const double v = parse_value(trim(s.substr(eq + 1)), line);
    std::size_t slot = 0;
    if (key == "gamma1") {
      t.gamma1 = v;
    } else if (key == "gamma2") {
      t.gamma2 = v, slot = 1;
    } else if (key == "gamma_second") {
      t.gamma_second = v, slot = 2;
    } else if (key == "delta_fa") {
      t.delta_fa = v, slot = 3;
    } else {
      throw ParseError("unknown threshold key '" + std::string(key) + "'", line);
    }
    seen[slot] = true;
  }
  if (!std::all_of(seen.begin(), seen.end(), [](bool b) { return b; })) {
    throw ParseError("threshold file needs gamma1, gamma2, gamma_second and delta_fa", line);
  }
  if (!(t.gamma1 <= t.gamma2)) throw ParseError("gamma1 exceeds gamma2", line);
  if (!(t.delta_fa > 0.0 && t.delta_fa < 1.0)) throw ParseError("delta_fa outside (0, 1)", line);
  return t;
}

void save_thresholds(const std::string& path, const ThresholdSet& t) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write thresholds '" + path + "'");
  out << format_thresholds(t);
}

ThresholdSet load_thresholds(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open thresholds '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_thresholds(ss.str());
}

std::string_view to_string(Stage s) { return s == Stage::DNN1 ? "DNN1" : "DNN2"; }

double score_ratio(const ScorePair& s) { return s.zeta_h1 / std::max(s.zeta_h0, 1e-12); }

DoubleThreshold calibrate_double_threshold(std::span<const double> ratios,
                                           std::span<const Hypothesis> labels) {
  if (ratios.size() != labels.size()) throw InvalidArgument("calibration ratios and labels differ in length");
  const bool has_h0 = std::find(labels.begin(), labels.end(), Hypothesis::H0) != labels.end();
  const bool has_h1 = std::find(labels.begin(), labels.end(), Hypothesis::H1) != labels.end();
  if (!has_h0 || !has_h1) throw InvalidArgument("calibration set must contain both classes");

  std::vector<std::size_t> order(ratios.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return ratios[a] > ratios[b]; });

  DoubleThreshold d;
  std::size_t top = 0;
  while (top < order.size() && labels[order[top]] == Hypothesis::H1) ++top;
  if (top > 0) d.gamma2 = ratios[order[top - 1]];
  std::size_t bottom = order.size();
  while (bottom > 0 && labels[order[bottom - 1]] == Hypothesis::H0) --bottom;
  if (bottom < order.size()) d.gamma1 = ratios[order[bottom]];
  if (d.gamma1 > d.gamma2) d.gamma1 = d.gamma2 = std::min(d.gamma1, d.gamma2);
  return d;
}

std::vector<double> score_ratios(const ModelParams& model, std::span<const Observation* const> data) {
  const auto scores = predict(model, data);
  std::vector<double> r(scores.size());
  std::transform(scores.begin(), scores.end(), r.begin(), score_ratio);
  return r;
}

DoubleThreshold calibrate_double_threshold(const ModelParams& model1, const ObservationRefs& calibration) {
  std::vector<Hypothesis> labels;
  labels.reserve(calibration.size());
  for (const auto* o : calibration) {
    if (!o->label) throw InvalidArgument("calibration observation without a label");
    labels.push_back(*o->label);
  }
  const auto ratios = score_ratios(model1, calibration);
  return calibrate_double_threshold(ratios, labels);
}

double calibrate_gamma2(std::span<const double> h0_ratios, double delta_fa) {
  if (h0_ratios.empty()) throw InvalidArgument("calibrate_gamma2: empty H0 calibration set");
  if (!(delta_fa > 0.0 && delta_fa < 1.0)) throw InvalidArgument("calibrate_gamma2: delta_fa must lie in (0, 1)");
  std::vector<double> sorted(h0_ratios.begin(), h0_ratios.end());
  std::sort(sorted.begin(), sorted.end(), std::greater<>());
  // Largest rank k with k / N <= delta_fa as evaluated in floating point, so that
  // products such as 0.29 * 100 = 28.999... still reach rank 29.
  const auto n = static_cast<double>(sorted.size());
  auto rank = static_cast<std::size_t>(std::floor(delta_fa * n));
  while (rank < sorted.size() && static_cast<double>(rank + 1) / n <= delta_fa) ++rank;
  while (rank > 0 && static_cast<double>(rank) / n > delta_fa) --rank;
  if (rank == 0) return kInf;
  double g = sorted[rank - 1];
  const auto reaching = static_cast<std::size_t>(
      std::count_if(sorted.begin(), sorted.end(), [g](double r) { return r >= g; }));
  if (reaching > rank) g = std::nextafter(g, kInf);
  return g;
}

double calibrate_gamma2(const ModelParams& model2, const ObservationRefs& h0_calibration, double delta_fa) {
  for (const auto* o : h0_calibration) {
    if (o->label && *o->label != Hypothesis::H0) throw InvalidArgument("calibrate_gamma2: expects H0 observations only");
  }
  const auto ratios = score_ratios(model2, h0_calibration);
  return calibrate_gamma2(ratios, delta_fa);
}

bool defers(double ratio1, const ThresholdSet& t) { return !(ratio1 < t.gamma1) && !(ratio1 > t.gamma2); }

DetectionDecision decide(double ratio1, std::optional<double> ratio2, const ThresholdSet& t) {
  DetectionDecision d;
  d.gamma_ratio_1 = ratio1;
  if (ratio1 < t.gamma1) {
    d.verdict = Hypothesis::H0;
  } else if (ratio1 > t.gamma2) {
    d.verdict = Hypothesis::H1;
  } else {
    if (!ratio2) throw InvalidArgument("decide: deferred observation needs the second ratio");
    d.stage = Stage::DNN2;
    d.gamma_ratio_2 = ratio2;
    d.verdict = *ratio2 >= t.gamma_second ? Hypothesis::H1 : Hypothesis::H0;
  }
  return d;
}

DetectionDecision detect(const Observation& obs, const ModelParams& model1, const ModelParams& model2,
                         const ThresholdSet& t) {
  const Observation* one[] = {&obs};
  const double r1 = score_ratios(model1, one).front();
  if (!defers(r1, t)) return decide(r1, std::nullopt, t);
  return decide(r1, score_ratios(model2, one).front(), t);
}

double BatchDetection::deferral_fraction() const {
  return decisions.empty() ? 0.0 : static_cast<double>(deferred()) / static_cast<double>(decisions.size());
}

BatchDetection detect_batch(std::span<const Observation* const> observations, const ModelParams& model1,
                            const ModelParams& model2, const ThresholdSet& t) {
  BatchDetection out;
  if (observations.empty()) return out;
  const auto r1 = score_ratios(model1, observations);
  ObservationRefs deferred;
  std::vector<std::size_t> where;
  for (std::size_t i = 0; i < r1.size(); ++i) {
    if (defers(r1[i], t)) {
      deferred.push_back(observations[i]);
      where.push_back(i);
    }
  }
  std::vector<std::optional<double>> r2(r1.size());
  const auto second = score_ratios(model2, deferred);
  for (std::size_t j = 0; j < where.size(); ++j) r2[where[j]] = second[j];

  out.decisions.reserve(r1.size());
  for (std::size_t i = 0; i < r1.size(); ++i) {
    const auto d = decide(r1[i], r2[i], t);
    ++out.counts[static_cast<std::size_t>(d.stage)][static_cast<std::size_t>(d.verdict)];
    out.decisions.push_back(d);
  }
  return out;
}

BatchDetection detect_batch(std::span<const Observation> observations, const ModelParams& model1,
                            const ModelParams& model2, const ThresholdSet& t) {
  const ObservationRefs refs = refs_of(observations);
  return detect_batch(std::span<const Observation* const>(refs), model1, model2, t);
}

}  // namespace ssbjam
