#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "ssbjam/config.hpp"
#include "ssbjam/dataset.hpp"
#include "ssbjam/detector.hpp"
#include "ssbjam/dnn.hpp"
#include "ssbjam/eval.hpp"
#include "ssbjam/pipeline.hpp"

using namespace ssbjam;
namespace fs = std::filesystem;

namespace {

struct Globals {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> threads;
};

struct Settings {
  ScenarioConfig scenario;
  TrainConfig train;
  ModelLayout layout;
  DetectorSettings detector;
};

Settings load_settings(const Globals& g) {
  KeyValueConfig c;
  if (!g.config_path.empty()) {
    if (!fs::exists(g.config_path)) throw InvalidArgument("config file not found: " + g.config_path);
    c = KeyValueConfig::load(g.config_path);
    c.require_known(known_config_keys());
  }
  Settings s;
  s.scenario = scenario_from_config(c);
  s.train = train_config_from(c);
  s.layout = layout_from_config(c);
  s.detector = detector_settings_from(c);
  if (g.seed) {
    s.scenario.master_seed = *g.seed;
    s.train.seed = *g.seed;
  }
  if (g.threads) s.scenario.threads = *g.threads;
  return s;
}

std::string num(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  if (std::isnan(v)) return "nan";
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return {buf, r.ptr};
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InvalidArgument("cannot open output file: " + path);
  return out;
}

void require_file(const std::string& path) {
  if (!fs::exists(path)) throw InvalidArgument("input file not found: " + path);
}

bool is_csv(const std::string& path) { return fs::path(path).extension() == ".csv"; }

SyncOptions sync_options(const ScenarioConfig& s) {
  SyncOptions o;
  o.n_fft = s.n_fft;
  o.cp_length = s.cp_length();
  o.scs_hz = s.scs_hz;
  return o;
}

std::vector<Observation> load_input(const std::string& path, const ScenarioConfig& s) {
  require_file(path);
  if (!is_csv(path)) return load_dataset(path).observations;
  const ComplexVec iq = read_iq_csv(path);
  if (iq.empty()) return {};
  std::vector<Observation> out;
  out.push_back(ingest_iq_csv(path, sync_options(s), s.receiver_agc));
  return out;
}

std::vector<Hypothesis> verdicts(const BatchDetection& b) {
  std::vector<Hypothesis> v;
  for (const auto& d : b.decisions) v.push_back(d.verdict);
  return v;
}

std::vector<Hypothesis> labels_of(const ObservationRefs& refs) {
  std::vector<Hypothesis> v;
  for (const auto* o : refs) {
    if (!o->label) throw InvalidArgument("evaluation needs labeled observations");
    v.push_back(*o->label);
  }
  return v;
}

int cmd_gen(const Globals& g, const std::string& out, std::optional<std::size_t> per_class, std::string manifest) {
  Settings s = load_settings(g);
  if (per_class) s.scenario.n_obs_per_class = *per_class;
  const Dataset ds = generate_dataset(s.scenario);
  save_dataset(out, ds.observations, s.scenario.n_fft);
  if (manifest.empty()) manifest = out + ".manifest.csv";
  write_manifest(manifest, ds.manifest);
  std::cout << "wrote " << ds.observations.size() << " observations to " << out << "\n";
  return 0;
}

int cmd_train(const Globals& g, const std::string& data_path, const std::string& model_path, bool cascade,
              std::optional<double> cutoff, std::string model2_path) {
  Settings s = load_settings(g);
  if (cutoff) s.detector.sjnr_cutoff_db = *cutoff;
  require_file(data_path);
  const LoadedDataset data = load_dataset(data_path);
  s.layout.input_cols = data.n_fft / 2;
  const DataSplit split = split_for_detector(data.observations, s.train.validation_fraction,
                                             s.detector.calibration_fraction, s.train.seed);
  const TrainResult r1 = train(split.train, split.validation, s.train, s.layout);
  save_model(model_path, r1.params);
  write_train_log_csv(model_path + ".log.csv", r1.log, s.train, s.layout);
  std::cout << "first network: " << model_path << "\n";
  if (!cascade) return 0;
  if (model2_path.empty()) model2_path = model_path + ".dnn2";
  const ObservationRefs t2 = high_sjnr_subset(split.train, s.detector.sjnr_cutoff_db, s.train.seed);
  const ObservationRefs v2 = high_sjnr_subset(split.validation, s.detector.sjnr_cutoff_db, s.train.seed + 1);
  const TrainResult r2 = cascade_train(t2, v2, s.train, s.layout);
  save_model(model2_path, r2.params);
  write_train_log_csv(model2_path + ".log.csv", r2.log, s.train, s.layout);
  std::cout << "second network: " << model2_path << " (" << t2.size() << " training observations, SJNR >= "
            << num(s.detector.sjnr_cutoff_db) << " dB)\n";
  return 0;
}

int cmd_calibrate(const Globals& g, const std::string& m1, const std::string& m2, const std::string& cal_path,
                  const std::string& out, std::optional<double> delta) {
  Settings s = load_settings(g);
  if (delta) s.detector.delta_fa = *delta;
  if (!(s.detector.delta_fa > 0.0 && s.detector.delta_fa < 1.0)) {
    throw InvalidArgument("--delta-fa must lie in (0, 1), got " + num(s.detector.delta_fa));
  }
  for (const auto& p : {m1, m2, cal_path}) require_file(p);
  const ModelParams model1 = load_model(m1);
  const ModelParams model2 = load_model(m2);
  const LoadedDataset cal = load_dataset(cal_path);
  const ObservationRefs refs = refs_of(cal.observations);
  labels_of(refs);
  const ThresholdSet t = calibrate_thresholds(model1, model2, refs, s.detector.delta_fa);
  save_thresholds(out, t);
  const BatchDetection b = detect_batch(std::span<const Observation* const>(refs), model1, model2, t);
  std::cout << "gamma1=" << num(t.gamma1) << "\ngamma2=" << num(t.gamma2) << "\ngamma_second=" << num(t.gamma_second)
            << "\ndelta_fa=" << num(t.delta_fa) << "\ndeferral_fraction=" << num(b.deferral_fraction()) << "\n";
  return 0;
}

int cmd_detect(const Globals& g, const std::string& input, const std::string& m1, const std::string& m2,
               const std::string& thr, const std::string& out) {
  const Settings s = load_settings(g);
  for (const auto& p : {m1, m2, thr}) require_file(p);
  const ModelParams model1 = load_model(m1);
  const ModelParams model2 = load_model(m2);
  const ThresholdSet t = load_thresholds(thr);
  const std::vector<Observation> obs = load_input(input, s.scenario);
  const bool labeled = !obs.empty() && obs.front().label.has_value();
  const BatchDetection b = detect_batch(obs, model1, model2, t);
  std::ofstream f = open_out(out);
  f << "index,verdict,stage,gamma_ratio_1,gamma_ratio_2";
  if (labeled) f << ",label,correct,sjnr_db";
  f << "\n";
  for (std::size_t i = 0; i < obs.size(); ++i) {
    const DetectionDecision& d = b.decisions[i];
    f << i << "," << to_string(d.verdict) << "," << to_string(d.stage) << "," << num(d.gamma_ratio_1) << ","
      << (d.gamma_ratio_2 ? num(*d.gamma_ratio_2) : "");
    if (labeled) {
      const Observation& o = obs[i];
      f << "," << (o.label ? to_string(*o.label) : "") << "," << (o.label ? (*o.label == d.verdict ? 1 : 0) : 0)
        << "," << (o.meta.sjnr_db ? num(*o.meta.sjnr_db) : "");
    }
    f << "\n";
  }
  std::cout << obs.size() << " decisions, " << b.deferred() << " deferred, written to " << out << "\n";
  return 0;
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

Hypothesis parse_hypothesis(const std::string& s, std::size_t line) {
  if (s == "H0") return Hypothesis::H0;
  if (s == "H1") return Hypothesis::H1;
  throw ParseError("expected H0 or H1, got '" + s + "'", line);
}

// Rebuilds verdicts, labels and SJNR values from a labeled decisions file.
void read_decisions(const std::string& path, std::vector<Hypothesis>& verdict, std::vector<Observation>& obs) {
  require_file(path);
  std::ifstream in(path);
  std::string line;
  if (!std::getline(in, line)) throw ParseError(path + ": missing header", 1);
  const auto header = split_csv_line(line);
  auto column = [&](const std::string& name) {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw ParseError(path + ": missing column '" + name + "'", 1);
    return static_cast<std::size_t>(it - header.begin());
  };
  const std::size_t cv = column("verdict"), cl = column("label"), cs = column("sjnr_db");
  std::size_t n = 1;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty()) continue;
    const auto cells = split_csv_line(line);
    if (cells.size() != header.size()) throw ParseError(path + ": wrong number of cells", n);
    verdict.push_back(parse_hypothesis(cells[cv], n));
    Observation o;
    o.label = parse_hypothesis(cells[cl], n);
    if (!cells[cs].empty()) {
      try {
        o.meta.sjnr_db = std::stod(cells[cs]);
      } catch (const std::exception&) {
        throw ParseError(path + ": bad sjnr_db '" + cells[cs] + "'", n);
      }
    }
    obs.push_back(std::move(o));
  }
}

struct EvalInputs {
  std::string decisions, dataset, dnn1, dnn2, thresholds, calibration;
  std::vector<double> edges{-10, 0, 10, 20, 30};
  std::size_t roc_points = 20;
};

std::vector<double> fa_grid(std::size_t n) {
  std::vector<double> g;
  for (std::size_t i = 0; i < n; ++i) g.push_back(n == 1 ? 0.01 : 0.01 + (0.5 - 0.01) * i / (n - 1.0));
  return g;
}

int cmd_eval(const Globals& g, const EvalInputs& in, const std::string& out_dir) {
  load_settings(g);
  fs::create_directories(out_dir);
  const std::string conf = (fs::path(out_dir) / "confusion.csv").string();
  const std::string roc = (fs::path(out_dir) / "roc.csv").string();
  const std::string miss = (fs::path(out_dir) / "sjnr_miss.csv").string();

  if (!in.decisions.empty()) {
    std::vector<Hypothesis> verdict;
    std::vector<Observation> obs;
    read_decisions(in.decisions, verdict, obs);
    const ObservationRefs refs = refs_of(obs);
    const Confusion c = confusion(verdict, labels_of(refs));
    write_confusion_csv(conf, c, "dtddnn");
    write_sjnr_miss_csv(miss, in.edges, sjnr_miss_profile(verdict, refs, in.edges), "dtddnn");
    std::cout << "detection_rate=" << num(c.detection_rate()) << "\nfalse_alarm_rate=" << num(c.false_alarm_rate())
              << "\n";
    return 0;
  }

  for (const auto& p : {in.dataset, in.dnn1, in.dnn2, in.thresholds, in.calibration}) require_file(p);
  const ModelParams model1 = load_model(in.dnn1);
  const ModelParams model2 = load_model(in.dnn2);
  const ThresholdSet t = load_thresholds(in.thresholds);
  const LoadedDataset test = load_dataset(in.dataset);
  const LoadedDataset cal = load_dataset(in.calibration);
  const ObservationRefs test_refs = refs_of(test.observations);
  const ObservationRefs cal_refs = refs_of(cal.observations);
  const std::vector<Hypothesis> labels = labels_of(test_refs);
  labels_of(cal_refs);

  const BatchDetection b = detect_batch(std::span<const Observation* const>(test_refs), model1, model2, t);
  const std::vector<Hypothesis> dt = verdicts(b);
  std::vector<Hypothesis> single;
  for (const double r : score_ratios(model1, test_refs)) single.push_back(r > 1.0 ? Hypothesis::H1 : Hypothesis::H0);
  const Confusion c1 = confusion(single, labels);
  const Confusion c2 = confusion(dt, labels);
  const std::vector<std::pair<std::string, Confusion>> rows{{"single", c1}, {"dtddnn", c2}};
  write_confusion_csv(conf, rows);
  const std::vector<std::pair<std::string, std::vector<std::size_t>>> misses{
      {"single", sjnr_miss_profile(single, test_refs, in.edges)},
      {"dtddnn", sjnr_miss_profile(dt, test_refs, in.edges)}};
  write_sjnr_miss_csv(miss, in.edges, misses);
  const std::vector<double> grid = fa_grid(in.roc_points);
  write_roc_csv(roc, roc_curve(model1, model2, t, cal_refs, test_refs, grid));
  std::cout << "single detection_rate=" << num(c1.detection_rate()) << " false_alarm_rate=" << num(c1.false_alarm_rate())
            << "\ndtddnn detection_rate=" << num(c2.detection_rate()) << " false_alarm_rate="
            << num(c2.false_alarm_rate()) << "\ndeferral_fraction=" << num(b.deferral_fraction()) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"SSB jamming detector: dataset generation, training, calibration, detection, evaluation"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--config", g.config_path, "key=value configuration file");
  app.add_option("--seed", g.seed, "master seed for data generation and training");
  app.add_option("--threads", g.threads, "worker threads for data generation")->check(CLI::PositiveNumber);

  std::string out, data, model, model2, cal, thr, input, manifest;
  std::optional<std::size_t> per_class;
  std::optional<double> cutoff, delta;
  bool cascade = false;
  EvalInputs ev;

  auto* gen = app.add_subcommand("gen", "generate a labeled dataset");
  gen->add_option("out", out, "dataset file")->required();
  gen->add_option("--obs-per-class", per_class, "observations per class");
  gen->add_option("--manifest", manifest, "manifest CSV (default: <out>.manifest.csv)");

  auto* tr = app.add_subcommand("train", "train the first network, and the second with --cascade");
  tr->add_option("dataset", data, "training dataset")->required();
  tr->add_option("model", model, "first-network model file")->required();
  tr->add_flag("--cascade", cascade, "also cascade-train the second network on high-SJNR data");
  tr->add_option("--sjnr-cutoff", cutoff, "SJNR cutoff (dB) for the second network's jammed data");
  tr->add_option("--dnn2-out", model2, "second-network model file (default: <model>.dnn2)");

  auto* ca = app.add_subcommand("calibrate", "set the detector thresholds on a calibration dataset");
  ca->add_option("dnn1", model, "first-network model")->required();
  ca->add_option("dnn2", model2, "second-network model")->required();
  ca->add_option("dataset", cal, "labeled calibration dataset")->required();
  ca->add_option("out", out, "thresholds file")->required();
  ca->add_option("--delta-fa", delta, "false-alarm budget of the second network");

  auto* de = app.add_subcommand("detect", "run the detector on a dataset or an IQ CSV capture");
  de->add_option("input", input, "dataset file or .csv IQ capture")->required();
  de->add_option("dnn1", model, "first-network model")->required();
  de->add_option("dnn2", model2, "second-network model")->required();
  de->add_option("thresholds", thr, "thresholds file")->required();
  de->add_option("out", out, "decisions CSV")->required();

  auto* evc = app.add_subcommand("eval", "write confusion, ROC and SJNR-miss CSVs");
  evc->add_option("out_dir", out, "output directory")->required();
  auto* dec_opt = evc->add_option("--decisions", ev.decisions, "labeled decisions CSV from detect");
  auto* ds_opt = evc->add_option("--dataset", ev.dataset, "labeled test dataset (end-to-end mode)");
  evc->add_option("--dnn1", ev.dnn1, "first-network model");
  evc->add_option("--dnn2", ev.dnn2, "second-network model");
  evc->add_option("--thresholds", ev.thresholds, "thresholds file");
  evc->add_option("--calibration", ev.calibration, "labeled calibration dataset for ROC thresholds");
  evc->add_option("--sjnr-edges", ev.edges, "SJNR bin edges (dB)")->delimiter(',');
  evc->add_option("--roc-points", ev.roc_points, "false-alarm grid points in [0.01, 0.5]")->check(CLI::PositiveNumber);
  dec_opt->excludes(ds_opt);

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) return cmd_gen(g, out, per_class, manifest);
    if (tr->parsed()) return cmd_train(g, data, model, cascade, cutoff, model2);
    if (ca->parsed()) return cmd_calibrate(g, model, model2, cal, out, delta);
    if (de->parsed()) return cmd_detect(g, input, model, model2, thr, out);
    if (evc->parsed()) {
      if (ev.decisions.empty() && (ev.dataset.empty() || ev.dnn1.empty() || ev.dnn2.empty() ||
                                   ev.thresholds.empty() || ev.calibration.empty())) {
        throw InvalidArgument(
            "eval needs --decisions, or --dataset with --dnn1, --dnn2, --thresholds and --calibration");
      }
      return cmd_eval(g, ev, out);
    }
  } catch (const InvalidArgument& e) {
    std::cerr << "argument error: " << e.what() << "\n";
    return 2;
  } catch (const ParseError& e) {
    std::cerr << "parse error: " << e.what() << "\n";
    return 3;
  } catch (const FormatError& e) {
    std::cerr << "format error: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
