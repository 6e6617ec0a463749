#include <cmath>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "ssbjam/dnn.hpp"
#include "support.hpp"

using namespace ssbjam;
namespace fs = std::filesystem;

namespace {

std::string temp_path(const std::string& name) { return (fs::temp_directory_path() / ("ssbjam_dnn_" + name)).string(); }

std::vector<char> read_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

void write_bytes(const std::string& path, const std::vector<char>& b) {
  std::ofstream out(path, std::ios::binary);
  out.write(b.data(), static_cast<std::streamsize>(b.size()));
}

template <typename T>
bool same_blocks(const ConvBlock<T>& a, const ConvBlock<T>& b) {
  return a.weight == b.weight && a.gamma == b.gamma && a.beta == b.beta && a.running_mean == b.running_mean &&
         a.running_var == b.running_var;
}

}  // namespace

TEST_SUITE("dnn") {
  TEST_CASE("valid-convolution extents for the full-size layout") {
    const ModelLayout m;
    const auto e = m.extents();
    REQUIRE(e.size() == 4);
    CHECK(e[0].channels == 1);
    CHECK(e[0].height == 5);
    CHECK(e[0].width == 1024);
    CHECK((e[1].channels == 256 && e[1].height == 4 && e[1].width == 1020));
    CHECK((e[2].channels == 128 && e[2].height == 3 && e[2].width == 1016));
    CHECK((e[3].channels == 128 && e[3].height == 3 && e[3].width == 1015));
    CHECK(m.flat_size() == 128u * 3u * 1015u);
    const std::vector<std::size_t> ch{8, 4, 2};
    const ModelLayout n = m.with_channels(ch);
    CHECK(n.conv[1].channels == 4);
    CHECK(n.conv[1].kernel_w == 5);
    CHECK(n.flat_size() == 2u * 3u * 1015u);
  }

  TEST_CASE("parameter count matches the layout arithmetic") {
    const ModelLayout m = testing::tiny_layout();
    const auto net = ModelParams::initialize(m, 1);
    // conv weights + BN gain/offset + dense layers (input normalization is not trainable)
    const std::size_t conv = 4 * 6 * 1 + 3 * 6 * 4 + 3 * 2 * 3;
    const std::size_t bn = 2 * (4 + 3 + 3);
    const std::size_t dense = 99 * 6 + 6 + 6 * 2 + 2;
    CHECK(net.parameter_count() == conv + bn + dense);
    std::size_t total = 0;
    auto mut = net;
    for (auto g : mut.trainable()) total += g.size();
    CHECK(total == conv + bn + dense);
    CHECK(mut.trainable_names().size() == mut.trainable().size());
  }

  TEST_CASE("softmax over ordered logits and clamped NLL") {
    const ScorePair s = softmax_scores(2.0, -1.0);
    CHECK(s.zeta_h1 + s.zeta_h0 == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(s.zeta_h1 == doctest::Approx(1.0 / (1.0 + std::exp(-3.0))).epsilon(1e-14));
    CHECK(decide(s) == Hypothesis::H1);
    const ScorePair big = softmax_scores(1000.0, -1000.0);
    CHECK(big.zeta_h1 == 1.0);
    CHECK(std::isfinite(big.zeta_h0));
    CHECK(decide(ScorePair{0.5, 0.5}) == Hypothesis::H0);

    const ScorePair scores[] = {{0.2, 0.8}, {0.9, 0.1}, {1.0, 0.0}};
    const Hypothesis labels[] = {Hypothesis::H1, Hypothesis::H0, Hypothesis::H1};
    const double expect = -(std::log(0.8) + std::log(0.9) + std::log(1e-12)) / 3.0;
    CHECK(nll_loss(scores, labels) == doctest::Approx(expect).epsilon(1e-12));
  }

  TEST_CASE("analytic gradients agree with central differences") {
    const auto data = testing::toy_observations(6, 16, 0.7, 5);
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
      auto net = Network<double>::initialize(testing::tiny_layout(), seed);
      const GradientCheck gc = gradient_check(net, data);
      CAPTURE(seed);
      CHECK(gc.max_relative_error < 1e-4);
      CHECK(gc.groups.size() == gc.group_errors.size());
    }
  }

  TEST_CASE("frozen blocks drop out of the trainable set and the gradient check still holds") {
    const auto data = testing::toy_observations(6, 16, 0.7, 9);
    auto net = Network<double>::initialize(testing::tiny_layout(), 4);
    const std::size_t all = net.trainable().size();
    net.frozen_blocks = 2;
    CHECK(net.trainable().size() == all - 2 * 3);
    CHECK(net.trainable_names().front() == "conv3.weight");
    const GradientCheck gc = gradient_check(net, data);
    CHECK(gc.max_relative_error < 1e-4);
  }

  TEST_CASE("momentum update rule") {
    std::vector<double> p{1.0, -2.0}, g{0.5, 0.25}, v{0.1, -0.3};
    sgdm_step<double>(p, g, v, 0.01, 0.9);
    CHECK(v[0] == doctest::Approx(0.9 * 0.1 - 0.01 * 0.5).epsilon(1e-15));
    CHECK(v[1] == doctest::Approx(0.9 * -0.3 - 0.01 * 0.25).epsilon(1e-15));
    CHECK(p[0] == doctest::Approx(1.0 + 0.085).epsilon(1e-15));
    CHECK(p[1] == doctest::Approx(-2.0 - 0.2725).epsilon(1e-15));
  }

  TEST_CASE("batch-norm running statistics follow the momentum update with unbiased variance") {
    const auto data = testing::toy_observations(5, 16, 0.4, 2);
    const auto refs = refs_of(data);
    auto net = Network<double>::initialize(testing::tiny_layout(), 8);
    const auto& w = net.blocks[0].weight;
    forward(net, std::span<const Observation* const>(refs), Mode::Train, true);
    for (Eigen::Index o = 0; o < w.rows(); ++o) {
      std::vector<double> z;
      for (const auto* obs : refs)
        for (std::size_t r = 0; r + 1 < 5; ++r)
          for (std::size_t c = 0; c + 2 < 16; ++c) {
            double acc = 0.0;
            for (std::size_t i = 0; i < 2; ++i)
              for (std::size_t j = 0; j < 3; ++j) acc += w(o, static_cast<Eigen::Index>(i * 3 + j)) * obs->at(r + i, c + j);
            z.push_back(acc);
          }
      double mean = 0.0;
      for (double v : z) mean += v / static_cast<double>(z.size());
      double var = 0.0;
      for (double v : z) var += (v - mean) * (v - mean) / static_cast<double>(z.size() - 1);
      CHECK(net.blocks[0].running_mean[o] == doctest::Approx(0.1 * mean).epsilon(1e-10));
      CHECK(net.blocks[0].running_var[o] == doctest::Approx(0.9 + 0.1 * var).epsilon(1e-10));
    }
    // Inference leaves the statistics untouched.
    const auto before = net.blocks[1].running_mean;
    forward(net, std::span<const Observation* const>(refs), Mode::Infer, true);
    CHECK(net.blocks[1].running_mean == before);
  }

  TEST_CASE("inference scores do not depend on batch composition") {
    const auto data = testing::toy_observations(70, 16, 0.5, 12);
    auto net = ModelParams::initialize(testing::tiny_layout(), 2);
    net.blocks[0].running_mean.setConstant(0.1f);
    const auto all = predict(net, data);
    for (std::size_t i = 0; i < data.size(); i += 9) {
      const auto one = predict(net, std::span<const Observation>(&data[i], 1));
      CHECK(one[0].zeta_h1 == all[i].zeta_h1);
      CHECK(one[0].zeta_h0 == all[i].zeta_h0);
    }
  }

  TEST_CASE("model file round trip is exact") {
    const auto data = testing::toy_observations(20, 16, 0.5, 3);
    auto net = ModelParams::initialize(testing::tiny_layout(), 6);
    net.input_shift.setConstant(0.25f);
    net.blocks[2].running_var.setConstant(2.5f);
    const std::string path = temp_path("roundtrip.bin");
    save_model(path, net);
    const ModelParams back = load_model(path);
    CHECK(back.layout == net.layout);
    CHECK(back.input_shift == net.input_shift);
    CHECK(back.input_scale == net.input_scale);
    for (std::size_t b = 0; b < 3; ++b) CHECK(same_blocks(back.blocks[b], net.blocks[b]));
    CHECK(back.fc1.weight == net.fc1.weight);
    CHECK(back.fc2.bias == net.fc2.bias);
    const auto a = predict(net, data), c = predict(back, data);
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i].zeta_h1 == c[i].zeta_h1);
    fs::remove(path);
  }

  TEST_CASE("corrupt model files are rejected with a format error") {
    const auto net = ModelParams::initialize(testing::tiny_layout(), 6);
    const std::string path = temp_path("corrupt.bin");
    save_model(path, net);
    const auto bytes = read_bytes(path);

    auto truncated = bytes;
    truncated.resize(bytes.size() / 2);
    write_bytes(path, truncated);
    CHECK_THROWS_AS(load_model(path), FormatError);

    auto magic = bytes;
    magic[0] = 'X';
    write_bytes(path, magic);
    CHECK_THROWS_AS(load_model(path), FormatError);

    auto trailing = bytes;
    trailing.push_back(0);
    write_bytes(path, trailing);
    CHECK_THROWS_AS(load_model(path), FormatError);

    fs::remove(path);
    CHECK_THROWS(load_model(path));
  }

  TEST_CASE("training separates an easy toy problem") {
    const auto train_set = testing::toy_observations(400, 16, 1.0, 21);
    const auto test_set = testing::toy_observations(200, 16, 1.0, 22);
    TrainConfig cfg;
    cfg.max_epochs = 5;
    cfg.learning_rate = 0.01;
    cfg.seed = 1;
    const TrainResult res = train(train_set, cfg, testing::tiny_layout());
    const auto refs = refs_of(test_set);
    CHECK(accuracy(predict(res.params, std::span<const Observation* const>(refs)), refs) > 0.95);
    REQUIRE_FALSE(res.log.empty());
    CHECK(res.log.back().validation_accuracy.has_value());
    CHECK(res.log.back().loss < res.log.front().loss);
    for (const auto& e : res.log) CHECK(e.stage == 0);
  }

  TEST_CASE("training is deterministic for a fixed seed") {
    const auto data = testing::toy_observations(100, 16, 1.0, 4);
    TrainConfig cfg;
    cfg.max_epochs = 2;
    cfg.seed = 7;
    const auto a = train(data, cfg, testing::tiny_layout());
    const auto b = train(data, cfg, testing::tiny_layout());
    CHECK(a.params.fc2.weight == b.params.fc2.weight);
    CHECK(a.params.blocks[0].running_var == b.params.blocks[0].running_var);
  }

  TEST_CASE("cascade training freezes blocks stage by stage") {
    const auto data = testing::toy_observations(200, 16, 1.0, 31);
    TrainConfig cfg;
    cfg.max_epochs = 2;
    cfg.learning_rate = 0.01;
    cfg.seed = 3;
    const ModelLayout full = testing::tiny_layout();
    ModelLayout one = full;
    one.conv.resize(1);
    const TrainResult a = cascade_train(data, cfg, full);
    const TrainResult b = cascade_train(data, cfg, one);
    // The first stage sees the same data and seeds in both runs, and later stages never
    // touch a frozen block.
    CHECK(same_blocks(a.params.blocks[0], b.params.blocks[0]));
    CHECK(a.params.frozen_blocks == 0);
    std::size_t max_stage = 0;
    for (const auto& e : a.log) max_stage = std::max(max_stage, e.stage);
    CHECK(max_stage == 4);
    const auto refs = refs_of(data);
    CHECK(accuracy(predict(a.params, std::span<const Observation* const>(refs)), refs) > 0.9);
  }

  TEST_CASE("training requires both classes and a matching input width") {
    auto data = testing::toy_observations(40, 16, 1.0, 2);
    for (auto& o : data) o.label = Hypothesis::H0;
    TrainConfig cfg;
    cfg.max_epochs = 1;
    CHECK_THROWS_AS(train(data, cfg, testing::tiny_layout()), InvalidArgument);
    const auto wide = testing::toy_observations(40, 20, 1.0, 2);
    CHECK_THROWS_AS(train(wide, cfg, testing::tiny_layout()), InvalidArgument);
  }

  TEST_CASE("training log records the hyperparameters") {
    const auto data = testing::toy_observations(60, 16, 1.0, 2);
    TrainConfig cfg;
    cfg.max_epochs = 1;
    const auto res = train(data, cfg, testing::tiny_layout());
    const std::string path = temp_path("log.csv");
    write_train_log_csv(path, res.log, cfg, testing::tiny_layout());
    std::ifstream in(path);
    std::string first, line, header;
    std::getline(in, first);
    CHECK(first == "# optimizer=sgdm");
    bool saw_batch = false;
    while (std::getline(in, line) && line.rfind('#', 0) == 0) saw_batch |= line == "# batch_size=25";
    CHECK(saw_batch);
    CHECK(line == "stage,epoch,iteration,loss,validation_accuracy");
    fs::remove(path);
  }
}
