#include "ssbjam/eval.hpp"

#include <algorithm>
#include <fstream>
#include <iomanip>

namespace ssbjam {

namespace {

double ratio(std::size_t num, std::size_t den) {
  return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}

std::ofstream open_csv(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  out << std::setprecision(9);
  return out;
}

}  // namespace

double Confusion::tp_rate() const { return ratio(tp, tp + fn); }
double Confusion::fn_rate() const { return ratio(fn, tp + fn); }
double Confusion::tn_rate() const { return ratio(tn, tn + fp); }
double Confusion::fp_rate() const { return ratio(fp, tn + fp); }

Confusion confusion(std::span<const Hypothesis> decisions, std::span<const Hypothesis> labels) {
  if (decisions.size() != labels.size()) throw InvalidArgument("confusion: decisions and labels differ in length");
  Confusion c;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const bool jammed = labels[i] == Hypothesis::H1;
    const bool alarm = decisions[i] == Hypothesis::H1;
    if (!jammed && !alarm) ++c.tp;
    else if (jammed && alarm) ++c.tn;
    else if (jammed) ++c.fp;
    else ++c.fn;
  }
  return c;
}

ScoredSet score_set(const ModelParams& model1, const ModelParams& model2, std::span<const Observation* const> data) {
  ScoredSet s;
  s.ratio1 = score_ratios(model1, data);
  s.ratio2 = score_ratios(model2, data);
  for (const auto* o : data) {
    if (!o->label) throw InvalidArgument("score_set: observation without a label");
    s.labels.push_back(*o->label);
  }
  return s;
}

namespace {

RocPoint measure(const ScoredSet& test, auto&& alarm) {
  std::size_t n0 = 0, n1 = 0, fa = 0, det = 0;
  for (std::size_t i = 0; i < test.labels.size(); ++i) {
    const bool a = alarm(i);
    if (test.labels[i] == Hypothesis::H0) {
      ++n0;
      fa += a;
    } else {
      ++n1;
      det += a;
    }
  }
  return {ratio(fa, n0), ratio(det, n1)};
}

std::vector<double> h0_only(const std::vector<double>& r, const std::vector<Hypothesis>& labels) {
  std::vector<double> out;
  for (std::size_t i = 0; i < r.size(); ++i) {
    if (labels[i] == Hypothesis::H0) out.push_back(r[i]);
  }
  return out;
}

void require_both(const ScoredSet& s, const char* what) {
  const bool h0 = std::count(s.labels.begin(), s.labels.end(), Hypothesis::H0) > 0;
  const bool h1 = std::count(s.labels.begin(), s.labels.end(), Hypothesis::H1) > 0;
  if (!h0 || !h1) throw InvalidArgument(std::string("roc_curve: ") + what + " set must contain both classes");
}

}  // namespace

RocCurves roc_curve(const ScoredSet& calibration, const ScoredSet& test, const ThresholdSet& base,
                    std::span<const double> fa_grid) {
  require_both(test, "test");
  const auto cal1 = h0_only(calibration.ratio1, calibration.labels);
  const auto cal2 = h0_only(calibration.ratio2, calibration.labels);
  if (cal1.empty()) throw InvalidArgument("roc_curve: calibration set has no H0 observations");

  RocCurves c;
  c.single.push_back({0.0, 0.0});
  c.dtddnn.push_back({0.0, 0.0});
  for (double target : fa_grid) {
    const double g1 = calibrate_gamma2(cal1, target);
    c.single.push_back(measure(test, [&](std::size_t i) { return test.ratio1[i] >= g1; }));
    ThresholdSet t = base;
    t.gamma_second = calibrate_gamma2(cal2, target);
    c.dtddnn.push_back(measure(test, [&](std::size_t i) {
      return decide(test.ratio1[i], test.ratio2[i], t).verdict == Hypothesis::H1;
    }));
  }
  c.single.push_back({1.0, 1.0});
  c.dtddnn.push_back({1.0, 1.0});
  return c;
}

RocCurves roc_curve(const ModelParams& model1, const ModelParams& model2, const ThresholdSet& base,
                    std::span<const Observation* const> calibration, std::span<const Observation* const> test,
                    std::span<const double> fa_grid) {
  return roc_curve(score_set(model1, model2, calibration), score_set(model1, model2, test), base, fa_grid);
}

double roc_detection_at(std::span<const RocPoint> curve, double p_fa) {
  std::vector<RocPoint> pts(curve.begin(), curve.end());
  pts.push_back({0.0, 0.0});
  pts.push_back({1.0, 1.0});
  std::sort(pts.begin(), pts.end(), [](const RocPoint& a, const RocPoint& b) {
    return a.p_fa < b.p_fa || (a.p_fa == b.p_fa && a.p_d < b.p_d);
  });
  double best = 0.0;
  for (auto& p : pts) p.p_d = best = std::max(best, p.p_d);
  // Highest P_D reached at exactly this false-alarm level, else interpolate.
  const auto hi = std::upper_bound(pts.begin(), pts.end(), p_fa, [](double x, const RocPoint& p) { return x < p.p_fa; });
  if (hi == pts.begin()) return pts.front().p_d;
  const auto lo = hi - 1;
  if (hi == pts.end() || lo->p_fa == p_fa) return lo->p_d;
  const double w = (p_fa - lo->p_fa) / (hi->p_fa - lo->p_fa);
  return lo->p_d + w * (hi->p_d - lo->p_d);
}

double roc_dominance(const RocCurves& curves, std::span<const double> fa_grid) {
  if (fa_grid.empty()) return 0.0;
  std::size_t wins = 0;
  for (double f : fa_grid) wins += roc_detection_at(curves.dtddnn, f) >= roc_detection_at(curves.single, f);
  return ratio(wins, fa_grid.size());
}

std::vector<std::size_t> sjnr_miss_profile(std::span<const Hypothesis> decisions,
                                           std::span<const Observation* const> observations,
                                           std::span<const double> bin_edges_db) {
  if (decisions.size() != observations.size()) throw InvalidArgument("sjnr_miss_profile: size mismatch");
  if (bin_edges_db.size() < 2) throw InvalidArgument("sjnr_miss_profile: need at least two bin edges");
  std::vector<std::size_t> misses(bin_edges_db.size() - 1, 0);
  for (std::size_t i = 0; i < observations.size(); ++i) {
    const Observation& o = *observations[i];
    if (o.label != Hypothesis::H1 || decisions[i] == Hypothesis::H1 || !o.meta.sjnr_db) continue;
    const double s = *o.meta.sjnr_db;
    for (std::size_t b = 0; b + 1 < bin_edges_db.size(); ++b) {
      const bool last = b + 2 == bin_edges_db.size();
      if (s >= bin_edges_db[b] && (s < bin_edges_db[b + 1] || (last && s == bin_edges_db[b + 1]))) {
        ++misses[b];
        break;
      }
    }
  }
  return misses;
}

double detection_rate_in(std::span<const Hypothesis> decisions, std::span<const Observation* const> observations,
                         double sjnr_lo_db, double sjnr_hi_db) {
  if (decisions.size() != observations.size()) throw InvalidArgument("detection_rate_in: size mismatch");
  std::size_t n = 0, hit = 0;
  for (std::size_t i = 0; i < observations.size(); ++i) {
    const Observation& o = *observations[i];
    if (o.label != Hypothesis::H1 || !o.meta.sjnr_db) continue;
    if (*o.meta.sjnr_db < sjnr_lo_db || *o.meta.sjnr_db > sjnr_hi_db) continue;
    ++n;
    hit += decisions[i] == Hypothesis::H1;
  }
  return ratio(hit, n);
}

void write_confusion_csv(const std::string& path, std::span<const std::pair<std::string, Confusion>> rows) {
  auto out = open_csv(path);
  out << "# TP = non-jammed (H0) kept, TN = jammed (H1) detected, FP = jammed missed, FN = non-jammed flagged\n";
  out << "variant,tp,tn,fp,fn,tp_rate,fn_rate,tn_rate,fp_rate\n";
  for (const auto& [name, c] : rows) {
    out << name << ',' << c.tp << ',' << c.tn << ',' << c.fp << ',' << c.fn << ',' << c.tp_rate() << ','
        << c.fn_rate() << ',' << c.tn_rate() << ',' << c.fp_rate() << '\n';
  }
}

void write_confusion_csv(const std::string& path, const Confusion& c, const std::string& variant) {
  const std::pair<std::string, Confusion> row{variant, c};
  write_confusion_csv(path, std::span(&row, 1));
}

void write_roc_csv(const std::string& path, const RocCurves& curves) {
  auto out = open_csv(path);
  out << "p_fa,p_d,variant\n";
  for (const auto& p : curves.single) out << p.p_fa << ',' << p.p_d << ",single\n";
  for (const auto& p : curves.dtddnn) out << p.p_fa << ',' << p.p_d << ",dtddnn\n";
}

void write_sjnr_miss_csv(const std::string& path, std::span<const double> bin_edges_db,
                         std::span<const std::pair<std::string, std::vector<std::size_t>>> rows) {
  auto out = open_csv(path);
  out << "variant,sjnr_lo_db,sjnr_hi_db,misses\n";
  for (const auto& [name, misses] : rows) {
    if (misses.size() + 1 != bin_edges_db.size()) throw InvalidArgument("write_sjnr_miss_csv: bins and edges disagree");
    for (std::size_t b = 0; b < misses.size(); ++b) {
      out << name << ',' << bin_edges_db[b] << ',' << bin_edges_db[b + 1] << ',' << misses[b] << '\n';
    }
  }
}

void write_sjnr_miss_csv(const std::string& path, std::span<const double> bin_edges_db,
                         std::span<const std::size_t> misses, const std::string& variant) {
  const std::pair<std::string, std::vector<std::size_t>> row{variant, {misses.begin(), misses.end()}};
  write_sjnr_miss_csv(path, bin_edges_db, std::span(&row, 1));
}

}  // namespace ssbjam
