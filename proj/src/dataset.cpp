#include "ssbjam/dataset.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <iterator>
#include <random>
#include <thread>

namespace ssbjam {

std::vector<double> linear_grid(double first, double last, double step) {
  if (!(step > 0.0) || last < first) throw InvalidArgument("linear_grid: need step > 0 and last >= first");
  std::vector<double> g;
  const auto n = static_cast<std::size_t>(std::floor((last - first) / step + 1e-9)) + 1;
  for (std::size_t i = 0; i < n; ++i) g.push_back(first + static_cast<double>(i) * step);
  return g;
}

std::size_t ScenarioConfig::carrier_subcarriers() const {
  if (band_subcarriers != 0) return band_subcarriers;
  const std::size_t n = static_cast<std::size_t>(0.8 * static_cast<double>(n_fft)) / 12 * 12;
  return std::max(n, kSsbSubcarriers);
}

void ScenarioConfig::validate() const {
  if (sjnr_grid_db.empty() || distance_grid_m.empty()) throw InvalidArgument("scenario: SJNR and distance grids must be nonempty");
  if (modulations.empty()) throw InvalidArgument("scenario: at least one modulation is required");
  if (n_obs_per_class == 0) throw InvalidArgument("scenario: n_obs_per_class must be positive");
  if (!std::has_single_bit(n_fft) || n_fft < 256) throw InvalidArgument("scenario: n_fft must be a power of two >= 256");
  if (carrier_subcarriers() > n_fft) throw InvalidArgument("scenario: carrier wider than the FFT");
  if (!(scs_hz > 0.0)) throw InvalidArgument("scenario: subcarrier spacing must be positive");
  for (double d : distance_grid_m) {
    if (!(d > 0.0)) throw InvalidArgument("scenario: distances must be positive");
  }
}

double expected_snr_db(const ScenarioConfig& cfg, double distance_m) {
  ChannelConfig ch = cfg.channel;
  ch.distance_m = distance_m;
  const double noise = thermal_noise_power(cfg.noise_temperature_k, cfg.sample_rate_hz());
  return cfg.tx_power_db + path_gain_db(ch) - 10.0 * std::log10(noise);
}

std::vector<double> feasible_distances(const ScenarioConfig& cfg, double sjnr_db) {
  std::vector<double> out;
  for (double d : cfg.distance_grid_m) {
    if (expected_snr_db(cfg, d) >= sjnr_db + cfg.feasibility_margin_db) out.push_back(d);
  }
  return out;
}

namespace {

// Sub-streams of one observation seed.
enum : std::uint64_t { kGridStream = 1, kBandStream, kChannelStream, kNoiseStream, kJammerStream, kDrawStream };

}  // namespace

Capture synthesize_capture(const ScenarioConfig& cfg, const ScenarioDraw& draw, bool jammed,
                           std::uint64_t seed, const CaptureLayout& layout) {
  cfg.validate();
  const std::size_t n_fft = cfg.n_fft;
  const std::size_t cp = cfg.cp_length();
  const std::size_t band = cfg.carrier_subcarriers();
  const double fs = cfg.sample_rate_hz();

  const ResourceGrid ssb = build_ssb_grid(draw.n_id2, mix_seed(seed, kGridStream));
  const ResourceGrid carrier =
      embed_in_band(ssb, band, centered_ssb_offset(band), draw.modulation, mix_seed(seed, kBandStream));
  TimeSignal tx = ofdm_modulate(carrier, n_fft, cp, cfg.scs_hz);
  const double gain = std::sqrt(std::pow(10.0, cfg.tx_power_db / 10.0) / mean_power(tx.samples));
  for (auto& v : tx.samples) v *= gain;

  const std::size_t body = tx.samples.size();
  TimeSignal padded = tx;
  padded.samples.assign(layout.lead + body + layout.trail, Complex{});
  std::copy(tx.samples.begin(), tx.samples.end(), padded.samples.begin() + static_cast<std::ptrdiff_t>(layout.lead));

  ChannelConfig ch = cfg.channel;
  ch.distance_m = draw.distance_m;
  ch.seed = mix_seed(seed, kChannelStream);
  TimeSignal rx = apply_channel(padded, ch);
  if (layout.cfo_hz != 0.0) {
    const double w = 2.0 * kPi * layout.cfo_hz / fs;
    for (std::size_t n = 0; n < rx.samples.size(); ++n) rx.samples[n] *= std::polar(1.0, w * static_cast<double>(n));
  }

  Capture cap;
  cap.ssb_span = {layout.lead, layout.lead + body};
  const auto in_span = [&](const ComplexVec& x) {
    return std::span<const Complex>(x).subspan(cap.ssb_span.begin, cap.ssb_span.size());
  };
  cap.reference_power = mean_power(in_span(rx.samples));
  const ComplexVec noise = thermal_noise(rx.samples.size(), cfg.noise_temperature_k, fs, mix_seed(seed, kNoiseStream));
  cap.noise_power = mean_power(in_span(noise));
  for (std::size_t n = 0; n < rx.samples.size(); ++n) rx.samples[n] += noise[n];

  if (jammed) {
    JammerConfig jc = cfg.jammer;
    jc.sjnr_db = draw.sjnr_db;
    jc.seed = mix_seed(seed, kJammerStream);
    const FrequencyBand ssb_band{-static_cast<double>(kSsbSubcarriers / 2), static_cast<double>(kSsbSubcarriers / 2) - 1.0};
    JammerOutcome j = inject_jammer(rx, jc, cap.ssb_span, ssb_band, cap.reference_power, cap.noise_power);
    cap.signal = std::move(j.signal);
    cap.jammer = std::move(j.waveform);
    cap.jam_power = j.jam_power;
    cap.feasible = j.feasible;
  } else {
    cap.signal = std::move(rx);
    cap.jammer.assign(cap.signal.samples.size(), Complex{});
  }
  cap.signal.cp_lengths.assign(kSsbSymbols, cp);
  return cap;
}

namespace {

Observation observation_from_capture(const ScenarioConfig& cfg, const Capture& cap, const ScenarioDraw& draw,
                                     bool jammed, std::uint64_t seed) {
  ObservationMeta meta;
  meta.distance_m = draw.distance_m;
  meta.modulation = draw.modulation;
  meta.n_id2 = draw.n_id2;
  meta.seed = seed;
  if (jammed) {
    meta.sjnr_db = draw.sjnr_db;
    meta.jammer = cfg.jammer.kind;
  }
  ResourceGrid grid = extract_ssb(cap.signal, cap.ssb_span.begin, 0.0, cfg.n_fft, cfg.cp_length());
  if (cfg.receiver_agc) apply_agc(grid, cap.signal, cap.ssb_span);
  return observation_from_grid(grid, cfg.n_fft, jammed ? Hypothesis::H1 : Hypothesis::H0, meta);
}

}  // namespace

Observation generate_observation(const ScenarioConfig& cfg, const ScenarioDraw& draw, bool jammed,
                                 std::uint64_t seed) {
  const Capture cap = synthesize_capture(cfg, draw, jammed, seed);
  if (!cap.feasible) {
    throw InvalidArgument("noise at " + std::to_string(draw.distance_m) + " m already exceeds the " +
                          std::to_string(draw.sjnr_db) + " dB SJNR budget");
  }
  return observation_from_capture(cfg, cap, draw, jammed, seed);
}

namespace {

constexpr std::size_t kMaxRedraws = 1000;

struct DrawnObservation {
  Observation obs;
  ManifestEntry entry;
};

DrawnObservation draw_one(const ScenarioConfig& cfg, bool jammed, std::size_t index_in_class) {
  const std::size_t cells = cfg.modulations.size() * 3;
  const std::size_t cell = index_in_class % cells;
  ScenarioDraw draw;
  draw.modulation = cfg.modulations[cell / 3];
  draw.n_id2 = static_cast<int>(cell % 3);
  const std::uint64_t base = mix_seed(cfg.master_seed, (jammed ? 1ULL << 40 : 0) + index_in_class);

  for (std::size_t attempt = 0; attempt < kMaxRedraws; ++attempt) {
    const std::uint64_t seed = mix_seed(base, attempt);
    std::mt19937_64 rng(mix_seed(seed, kDrawStream));
    std::uniform_int_distribution<std::size_t> pick_sjnr(0, cfg.sjnr_grid_db.size() - 1);
    draw.sjnr_db = cfg.sjnr_grid_db[pick_sjnr(rng)];
    const auto distances = feasible_distances(cfg, draw.sjnr_db);
    if (distances.empty()) continue;
    std::uniform_int_distribution<std::size_t> pick_distance(0, distances.size() - 1);
    draw.distance_m = distances[pick_distance(rng)];

    const Capture cap = synthesize_capture(cfg, draw, jammed, seed);
    if (!cap.feasible) continue;
    DrawnObservation out{observation_from_capture(cfg, cap, draw, jammed, seed), {}};
    for (auto& v : out.obs.tensor) v = static_cast<double>(static_cast<float>(v));
    out.entry.label = jammed ? Hypothesis::H1 : Hypothesis::H0;
    out.entry.draw = draw;
    out.entry.seed = seed;
    out.entry.redraws = attempt;
    return out;
  }
  throw InvalidArgument("scenario: no feasible draw after " + std::to_string(kMaxRedraws) + " attempts");
}

template <typename F>
void parallel_for(std::size_t n, std::size_t threads, F&& fn) {
  threads = std::max<std::size_t>(1, std::min(threads, n));
  if (threads == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(threads);
  for (std::size_t t = 0; t < threads; ++t) {
    pool.emplace_back([&, t] {
      try {
        for (std::size_t i = t; i < n; i += threads) fn(i);
      } catch (...) {
        errors[t] = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

}  // namespace

Dataset generate_dataset(const ScenarioConfig& cfg) {
  cfg.validate();
  const std::size_t n = cfg.n_obs_per_class;
  std::vector<DrawnObservation> drawn(2 * n);
  parallel_for(2 * n, cfg.threads, [&](std::size_t i) { drawn[i] = draw_one(cfg, i < n, i % n); });

  Dataset ds;
  ds.observations.reserve(2 * n);
  ds.manifest.reserve(2 * n);
  for (std::size_t i = 0; i < drawn.size(); ++i) {
    drawn[i].entry.index = i;
    ds.observations.push_back(std::move(drawn[i].obs));
    ds.manifest.push_back(drawn[i].entry);
  }
  return ds;
}

void write_manifest(const std::string& path, std::span<const ManifestEntry> manifest) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write manifest '" + path + "'");
  out << "# sjnr_db of H0 rows only conditions the distance draw\n";
  out << "index,label,sjnr_db,distance_m,modulation,n_id2,seed,redraws\n";
  for (const auto& e : manifest) {
    out << e.index << ',' << to_string(e.label) << ',' << e.draw.sjnr_db << ',' << e.draw.distance_m << ','
        << to_string(e.draw.modulation) << ',' << e.draw.n_id2 << ',' << e.seed << ',' << e.redraws << '\n';
  }
}

namespace {

constexpr std::array<char, 8> kDatasetMagic = {'S', 'S', 'B', 'J', 'A', 'M', '0', '1'};
constexpr std::uint32_t kDatasetVersion = 1;
constexpr std::size_t kHeaderBytes = 8 + 5 * 4;
constexpr std::uint8_t kUnlabeled = 255;

static_assert(std::endian::native == std::endian::little, "dataset files are written in host order");

template <typename V>
void put(std::vector<char>& buf, V v) {
  const char* p = reinterpret_cast<const char*>(&v);
  buf.insert(buf.end(), p, p + sizeof(V));
}

template <typename V>
V get(const std::vector<char>& buf, std::size_t& pos) {
  V v;
  std::memcpy(&v, buf.data() + pos, sizeof(V));
  pos += sizeof(V);
  return v;
}

}  // namespace

void save_dataset(const std::string& path, std::span<const Observation> observations, std::size_t n_fft) {
  const std::size_t cols = n_fft / 2;
  for (const auto& o : observations) {
    if (o.rows != kObservationRows || o.cols != cols || o.tensor.size() != o.rows * o.cols) {
      throw InvalidArgument("save_dataset: observation shape differs from 5 x n_fft/2");
    }
  }
  std::vector<char> buf(kDatasetMagic.begin(), kDatasetMagic.end());
  put<std::uint32_t>(buf, kDatasetVersion);
  put<std::uint32_t>(buf, static_cast<std::uint32_t>(n_fft));
  put<std::uint32_t>(buf, static_cast<std::uint32_t>(observations.size()));
  put<std::uint32_t>(buf, static_cast<std::uint32_t>(kObservationRows));
  put<std::uint32_t>(buf, static_cast<std::uint32_t>(cols));
  for (const auto& o : observations) {
    put<std::uint8_t>(buf, o.label ? static_cast<std::uint8_t>(*o.label) : kUnlabeled);
    put<float>(buf, o.meta.sjnr_db ? static_cast<float>(*o.meta.sjnr_db) : std::nanf(""));
    put<float>(buf, static_cast<float>(o.meta.distance_m));
    for (double v : o.tensor) put<float>(buf, static_cast<float>(v));
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write dataset '" + path + "'");
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) throw std::runtime_error("failed writing dataset '" + path + "'");
}

LoadedDataset load_dataset(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open dataset '" + path + "'");
  const std::vector<char> buf(std::istreambuf_iterator<char>(in), {});
  if (buf.size() < kDatasetMagic.size() || !std::equal(kDatasetMagic.begin(), kDatasetMagic.end(), buf.begin())) {
    throw FormatError("not a dataset file (bad magic)", 0);
  }
  if (buf.size() < kHeaderBytes) throw FormatError("dataset header truncated", buf.size());
  std::size_t pos = kDatasetMagic.size();
  if (const auto v = get<std::uint32_t>(buf, pos); v != kDatasetVersion) {
    throw FormatError("unsupported dataset version " + std::to_string(v), 8);
  }
  LoadedDataset ds;
  ds.n_fft = get<std::uint32_t>(buf, pos);
  const std::size_t n_obs = get<std::uint32_t>(buf, pos);
  const std::size_t rows = get<std::uint32_t>(buf, pos);
  const std::size_t cols = get<std::uint32_t>(buf, pos);
  if (rows != kObservationRows) throw FormatError("dataset rows must be 5", 20);
  if (cols == 0 || cols != ds.n_fft / 2) throw FormatError("dataset cols must equal n_fft/2", 24);

  const std::size_t record = 1 + 4 + 4 + 4 * rows * cols;
  const std::size_t available = (buf.size() - kHeaderBytes) / record;
  if (available < n_obs) {
    throw FormatError("record " + std::to_string(available) + " truncated", kHeaderBytes + available * record);
  }
  if (buf.size() != kHeaderBytes + n_obs * record) {
    throw FormatError("trailing bytes after the last record", kHeaderBytes + n_obs * record);
  }
  ds.observations.reserve(n_obs);
  for (std::size_t i = 0; i < n_obs; ++i) {
    const std::size_t at = pos;
    Observation o;
    o.cols = cols;
    const auto label = get<std::uint8_t>(buf, pos);
    if (label == 0 || label == 1) {
      o.label = static_cast<Hypothesis>(label);
    } else if (label != kUnlabeled) {
      throw FormatError("record " + std::to_string(i) + " has invalid label " + std::to_string(label), at);
    }
    const float sjnr = get<float>(buf, pos);
    if (!std::isnan(sjnr)) o.meta.sjnr_db = sjnr;
    o.meta.distance_m = get<float>(buf, pos);
    o.tensor.resize(rows * cols);
    for (auto& v : o.tensor) v = get<float>(buf, pos);
    ds.observations.push_back(std::move(o));
  }
  return ds;
}

void write_iq_csv(const std::string& path, std::span<const Complex> samples) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write IQ file '" + path + "'");
  out << "I,Q\n" << std::setprecision(17);
  for (const auto& s : samples) out << s.real() << ',' << s.imag() << '\n';
}

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

bool parse_double(std::string_view s, double& out) {
  s = trim(s);
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  const auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return !s.empty() && ec == std::errc{} && end == s.data() + s.size() && std::isfinite(out);
}

}  // namespace

ComplexVec read_iq_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open IQ file '" + path + "'");
  ComplexVec samples;
  std::string raw;
  std::size_t line = 0;
  while (std::getline(in, raw)) {
    ++line;
    const std::string_view s = trim(raw);
    if (s.empty()) continue;
    const auto comma = s.find(',');
    double i = 0.0, q = 0.0;
    const bool ok = comma != std::string_view::npos && s.find(',', comma + 1) == std::string_view::npos &&
                    parse_double(s.substr(0, comma), i) && parse_double(s.substr(comma + 1), q);
    if (!ok) {
      if (line == 1 && samples.empty()) continue;  // header
      throw ParseError("expected two numeric fields 'I,Q'", line);
    }
    samples.emplace_back(i, q);
  }
  return samples;
}

void apply_agc(ResourceGrid& grid, const TimeSignal& signal, SampleRange span) {
  if (span.end > signal.samples.size() || span.size() == 0) throw InvalidArgument("apply_agc: span outside the signal");
  const double p = mean_power(std::span<const Complex>(signal.samples).subspan(span.begin, span.size()));
  if (!(p > 0.0)) return;
  const double g = 1.0 / std::sqrt(p);
  for (std::size_t l = 0; l < grid.n_symbols(); ++l) {
    for (auto& c : grid.symbol(l)) c *= g;
  }
}

Observation ingest_capture(const TimeSignal& signal, const SyncOptions& opt, bool receiver_agc) {
  const SyncResult sync = synchronize(signal, opt);
  ResourceGrid grid = extract_ssb(signal, sync.t_off, sync.cfo_hz, opt.n_fft, opt.cp_length);
  if (receiver_agc) apply_agc(grid, signal, {sync.t_off, sync.t_off + kSsbSymbols * (opt.n_fft + opt.cp_length)});
  ObservationMeta meta;
  meta.n_id2 = sync.n_id2;
  return observation_from_grid(grid, opt.n_fft, std::nullopt, meta);
}

Observation ingest_iq_csv(const std::string& path, const SyncOptions& opt, bool receiver_agc) {
  TimeSignal sig;
  sig.samples = read_iq_csv(path);
  sig.n_fft = opt.n_fft;
  sig.sample_rate_hz = static_cast<double>(opt.n_fft) * opt.scs_hz;
  sig.cp_lengths.assign(kSsbSymbols, opt.cp_length);
  return ingest_capture(sig, opt, receiver_agc);
}

}  // namespace ssbjam
