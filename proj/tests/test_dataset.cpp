#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>

#include "doctest.h"
#include "ssbjam/dataset.hpp"
#include "support.hpp"

using namespace ssbjam;
namespace fs = std::filesystem;

namespace {

std::string temp_path(const std::string& name) { return (fs::temp_directory_path() / ("ssbjam_ds_" + name)).string(); }

ScenarioConfig small_config(std::size_t per_class = 24) {
  ScenarioConfig cfg;
  cfg.n_fft = 256;
  cfg.n_obs_per_class = per_class;
  cfg.master_seed = 5;
  return cfg;
}

double relative_error(const std::vector<double>& a, const std::vector<double>& b) {
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    num += (a[i] - b[i]) * (a[i] - b[i]);
    den += b[i] * b[i];
  }
  return std::sqrt(num / den);
}

double span_power(const ComplexVec& x, SampleRange r) {
  return mean_power(std::span<const Complex>(x).subspan(r.begin, r.size()));
}

}  // namespace

TEST_SUITE("dataset") {
  TEST_CASE("grids and carrier width") {
    CHECK(linear_grid(-10, 30, 1).size() == 41);
    const auto d = linear_grid(10, 490, 20);
    CHECK(d.size() == 25);
    CHECK(d.back() == 490.0);
    CHECK_THROWS_AS(linear_grid(1, 0, 1), InvalidArgument);
    ScenarioConfig cfg;
    CHECK(cfg.carrier_subcarriers() == 1632);
    CHECK(cfg.sample_rate_hz() == 61.44e6);
    CHECK(cfg.cp_length() == 144);
    cfg.n_fft = 256;
    CHECK(cfg.carrier_subcarriers() == 240);
    cfg.n_fft = 300;
    CHECK_THROWS_AS(cfg.validate(), InvalidArgument);
  }

  TEST_CASE("link budget from transmit power, free-space loss and thermal noise") {
    const ScenarioConfig cfg;
    const double lambda = kSpeedOfLight / 632e6;
    const double noise_db = 10.0 * std::log10(1.380649e-23 * 290.0 * 61.44e6);
    for (double dist : {10.0, 130.0, 490.0}) {
      const double oracle = 30.0 + 20.0 * std::log10(lambda * lambda / (4.0 * kPi * kPi * dist * dist)) - noise_db;
      CHECK(expected_snr_db(cfg, dist) == doctest::Approx(oracle).epsilon(1e-12));
    }
    CHECK(expected_snr_db(cfg, 10.0) == doctest::Approx(71.2).epsilon(0.001));
    CHECK(std::abs(expected_snr_db(cfg, 490.0) - 3.6) < 0.05);
    const auto all = feasible_distances(cfg, -10.0);
    CHECK(all.size() == 25);
    const auto some = feasible_distances(cfg, 20.0);
    CHECK(!some.empty());
    CHECK(some.size() < all.size());
    for (double d : some) CHECK(expected_snr_db(cfg, d) >= 21.0);
    CHECK(feasible_distances(cfg, 80.0).empty());
  }

  TEST_CASE("jammed capture minus its jammer equals the clean capture of the same seed") {
    const ScenarioConfig cfg = small_config();
    ScenarioDraw draw;
    draw.sjnr_db = 3.0;
    draw.distance_m = 50.0;
    draw.modulation = Modulation::QAM64;
    draw.n_id2 = 2;
    const CaptureLayout layout{100, 50, 0.0};
    const Capture h1 = synthesize_capture(cfg, draw, true, 77, layout);
    const Capture h0 = synthesize_capture(cfg, draw, false, 77, layout);
    REQUIRE(h1.feasible);
    double err = 0.0, ref = 0.0;
    for (std::size_t i = 0; i < h0.signal.samples.size(); ++i) {
      err = std::max(err, std::abs(h1.signal.samples[i] - h1.jammer[i] - h0.signal.samples[i]));
      ref = std::max(ref, std::abs(h0.signal.samples[i]));
    }
    CHECK(err <= 1e-12 * ref);
    for (auto v : h0.jammer) REQUIRE(v == Complex{});
    CHECK(h1.ssb_span.begin == 100);
    CHECK(h1.ssb_span.size() == 4 * (256 + 18));
  }

  TEST_CASE("achieved SJNR over the SSB span") {
    const ScenarioConfig cfg = small_config();
    for (double sjnr : {-10.0, 0.0, 10.0, 25.0}) {
      ScenarioDraw draw;
      draw.sjnr_db = sjnr;
      draw.distance_m = feasible_distances(cfg, sjnr).back();
      const Capture h1 = synthesize_capture(cfg, draw, true, 13);
      const Capture h0 = synthesize_capture(cfg, draw, false, 13);
      REQUIRE(h1.feasible);
      CHECK(10.0 * std::log10(h1.reference_power / (h1.jam_power + h1.noise_power)) ==
            doctest::Approx(sjnr).epsilon(1e-9));
      // Interference actually present: capture minus the noiseless received SSB.
      ComplexVec interference(h1.signal.samples.size());
      const Capture quiet = [&] {
        ScenarioConfig c = cfg;
        c.noise_temperature_k = 1e-30;
        return synthesize_capture(c, draw, false, 13);
      }();
      for (std::size_t i = 0; i < interference.size(); ++i) interference[i] = h1.signal.samples[i] - quiet.signal.samples[i];
      const double measured = 10.0 * std::log10(span_power(quiet.signal.samples, h1.ssb_span) / span_power(interference, h1.ssb_span));
      CHECK(std::abs(measured - sjnr) < 0.2);
      CHECK(h0.reference_power == h1.reference_power);
    }
  }

  TEST_CASE("jamming raises the null-RE energy of the same draw") {
    ScenarioConfig cfg = small_config();
    cfg.receiver_agc = false;
    ScenarioDraw draw;
    draw.sjnr_db = 0.0;
    draw.distance_m = 30.0;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      const Observation h1 = generate_observation(cfg, draw, true, seed);
      const Observation h0 = generate_observation(cfg, draw, false, seed);
      CHECK(h1.epsilon() > h0.epsilon() + 3.0);
      CHECK(h1.label == Hypothesis::H1);
      CHECK(h0.label == Hypothesis::H0);
      CHECK(h1.meta.sjnr_db == 0.0);
      CHECK_FALSE(h0.meta.sjnr_db.has_value());
    }
    draw.sjnr_db = 40.0;
    draw.distance_m = 490.0;
    CHECK_THROWS_AS(generate_observation(cfg, draw, true, 1), InvalidArgument);
  }

  TEST_CASE("receiver gain control normalizes the SSB span power") {
    const ScenarioConfig cfg = small_config();
    ScenarioDraw draw;
    draw.distance_m = 10.0;
    const Capture cap = synthesize_capture(cfg, draw, false, 3);
    ResourceGrid g = extract_ssb(cap.signal, 0, 0.0, 256, 18);
    const ResourceGrid raw = g;
    apply_agc(g, cap.signal, cap.ssb_span);
    const double gain = 1.0 / std::sqrt(span_power(cap.signal.samples, cap.ssb_span));
    CHECK(std::abs(g.at(1, 7) - raw.at(1, 7) * gain) < 1e-12 * std::abs(g.at(1, 7)));
    CHECK_THROWS_AS(apply_agc(g, cap.signal, {0, cap.signal.samples.size() + 1}), InvalidArgument);
  }

  TEST_CASE("dataset layout, stratification and manifest") {
    const ScenarioConfig cfg = small_config(36);
    const Dataset ds = generate_dataset(cfg);
    REQUIRE(ds.observations.size() == 72);
    REQUIRE(ds.manifest.size() == 72);
    std::map<std::pair<int, int>, int> cells_h1, cells_h0;
    for (std::size_t i = 0; i < 72; ++i) {
      const auto& o = ds.observations[i];
      const auto& m = ds.manifest[i];
      CHECK(m.index == i);
      CHECK(o.label == (i < 36 ? Hypothesis::H1 : Hypothesis::H0));
      CHECK(m.label == *o.label);
      CHECK(o.cols == 128);
      CHECK(o.meta.distance_m == m.draw.distance_m);
      CHECK(expected_snr_db(cfg, m.draw.distance_m) >= m.draw.sjnr_db + cfg.feasibility_margin_db);
      auto& cells = i < 36 ? cells_h1 : cells_h0;
      ++cells[{static_cast<int>(m.draw.modulation), m.draw.n_id2}];
      if (o.label == Hypothesis::H1) {
        REQUIRE(o.meta.sjnr_db.has_value());
        CHECK(*o.meta.sjnr_db == m.draw.sjnr_db);
        CHECK(*o.meta.sjnr_db >= -10.0);
        CHECK(*o.meta.sjnr_db <= 30.0);
      }
      for (double v : o.tensor) REQUIRE(v == static_cast<double>(static_cast<float>(v)));
    }
    CHECK(cells_h1.size() == 12);
    for (const auto& [cell, count] : cells_h1) CHECK(count == 3);
    for (const auto& [cell, count] : cells_h0) CHECK(count == 3);

    const std::string path = temp_path("manifest.csv");
    write_manifest(path, ds.manifest);
    std::ifstream in(path);
    std::string line;
    std::size_t rows = 0;
    while (std::getline(in, line)) rows += !line.empty() && line[0] != '#';
    CHECK(rows == 73);
    fs::remove(path);
  }

  TEST_CASE("generation is deterministic and independent of the thread count") {
    ScenarioConfig cfg = small_config(6);
    const Dataset a = generate_dataset(cfg);
    cfg.threads = 3;
    const Dataset b = generate_dataset(cfg);
    for (std::size_t i = 0; i < a.observations.size(); ++i) CHECK(a.observations[i].tensor == b.observations[i].tensor);
    cfg.master_seed = 6;
    const Dataset c = generate_dataset(cfg);
    CHECK(a.observations[0].tensor != c.observations[0].tensor);
  }

  TEST_CASE("dataset files round trip losslessly") {
    const Dataset ds = generate_dataset(small_config(4));
    std::vector<Observation> obs = ds.observations;
    obs[1].label.reset();
    const std::string path = temp_path("rt.bin");
    save_dataset(path, obs, 256);
    const LoadedDataset back = load_dataset(path);
    CHECK(back.n_fft == 256);
    REQUIRE(back.observations.size() == obs.size());
    for (std::size_t i = 0; i < obs.size(); ++i) {
      CHECK(back.observations[i].tensor == obs[i].tensor);
      CHECK(back.observations[i].label == obs[i].label);
      CHECK(back.observations[i].meta.sjnr_db == obs[i].meta.sjnr_db);
      CHECK(back.observations[i].meta.distance_m == obs[i].meta.distance_m);
      CHECK(back.observations[i].cols == 128);
    }

    save_dataset(path, std::span<const Observation>(), 256);
    CHECK(load_dataset(path).observations.empty());
    CHECK_THROWS_AS(save_dataset(path, obs, 512), InvalidArgument);
    fs::remove(path);
  }

  TEST_CASE("corrupt dataset files report what went wrong") {
    const Dataset ds = generate_dataset(small_config(2));
    const std::string path = temp_path("bad.bin");
    save_dataset(path, ds.observations, 256);
    std::vector<char> bytes;
    {
      std::ifstream in(path, std::ios::binary);
      bytes.assign(std::istreambuf_iterator<char>(in), {});
    }
    const auto write = [&](const std::vector<char>& b) {
      std::ofstream out(path, std::ios::binary);
      out.write(b.data(), static_cast<std::streamsize>(b.size()));
    };
    const std::size_t record = 1 + 4 + 4 + 4 * 5 * 128;

    auto cut = bytes;
    cut.resize(28 + 2 * record + 10);
    write(cut);
    try {
      load_dataset(path);
      FAIL("expected a format error");
    } catch (const FormatError& e) {
      CHECK(std::string(e.what()).find("record 2 truncated") != std::string::npos);
      CHECK(e.byte_offset() == 28 + 2 * record);
    }

    auto label = bytes;
    label[28 + record] = 7;
    write(label);
    CHECK_THROWS_AS(load_dataset(path), FormatError);

    auto magic = bytes;
    magic[3] = 'x';
    write(magic);
    CHECK_THROWS_AS(load_dataset(path), FormatError);

    auto extra = bytes;
    extra.push_back(1);
    write(extra);
    CHECK_THROWS_AS(load_dataset(path), FormatError);
    fs::remove(path);
  }

  TEST_CASE("IQ CSV round trip and parse errors") {
    const ComplexVec x = testing::random_complex(50, 4, 1e-3);
    const std::string path = temp_path("iq.csv");
    write_iq_csv(path, x);
    CHECK(read_iq_csv(path) == x);
    {
      std::ofstream out(path);
      out << "I,Q\n1,2\n3,4\n\n5,6\n7,8\n9;10\n";
    }
    try {
      read_iq_csv(path);
      FAIL("expected a parse error");
    } catch (const ParseError& e) {
      CHECK(e.line() == 7);
    }
    {
      std::ofstream out(path);
      out << "0.5,-0.25\n1e-3,2\n";
    }
    CHECK(read_iq_csv(path) == ComplexVec{{0.5, -0.25}, {1e-3, 2.0}});
    fs::remove(path);
  }

  TEST_CASE("IQ CSV loopback matches the known-timing features") {
    const ScenarioConfig cfg = small_config();
    SyncOptions opt;
    opt.n_fft = cfg.n_fft;
    opt.cp_length = cfg.cp_length();
    for (bool jammed : {false, true}) {
      ScenarioDraw draw;
      draw.sjnr_db = 15.0;
      draw.distance_m = 30.0;
      draw.n_id2 = 1;
      const Capture cap = synthesize_capture(cfg, draw, jammed, 21, CaptureLayout{700, 400, 0.0});
      ResourceGrid grid = extract_ssb(cap.signal, cap.ssb_span.begin, 0.0, cfg.n_fft, cfg.cp_length());
      apply_agc(grid, cap.signal, cap.ssb_span);
      const Observation direct = observation_from_grid(grid, cfg.n_fft, std::nullopt, {});

      const std::string path = temp_path("loop.csv");
      write_iq_csv(path, cap.signal.samples);
      const Observation ingested = ingest_iq_csv(path, opt, true);
      fs::remove(path);
      CHECK_FALSE(ingested.label.has_value());
      CHECK(ingested.meta.n_id2 == 1);
      CHECK(relative_error(ingested.tensor, direct.tensor) < 1e-3);
    }
  }

  TEST_CASE("ingesting pure noise reports that no SSB was found") {
    TimeSignal s;
    s.n_fft = 2048;
    s.sample_rate_hz = 61.44e6;
    s.samples = testing::random_complex(12000, 8);
    SyncOptions opt;
    CHECK_THROWS_AS(ingest_capture(s, opt), NoSsbFound);
  }
}
