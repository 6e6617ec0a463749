#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ssbjam/features.hpp"
#include "ssbjam/types.hpp"

namespace ssbjam {

struct ConvSpec {
  std::size_t kernel_h = 1;
  std::size_t kernel_w = 1;
  std::size_t channels = 1;
  bool operator==(const ConvSpec&) const = default;
};

// Convolution blocks are conv (valid, stride 1) -> batch norm -> ReLU. The head is
// flatten -> dense(fc_hidden) -> ReLU -> dense(2) -> softmax.
struct ModelLayout {
  std::size_t input_rows = kObservationRows;
  std::size_t input_cols = 1024;
  std::vector<ConvSpec> conv = {{2, 5, 256}, {2, 5, 128}, {1, 2, 128}};
  std::size_t fc_hidden = 128;

  struct Extent {
    std::size_t channels = 0, height = 0, width = 0;
    std::size_t positions() const { return height * width; }
    std::size_t size() const { return channels * height * width; }
  };

  // extents()[0] is the input; extents()[i + 1] is the output of block i.
  std::vector<Extent> extents() const;
  std::size_t flat_size() const { return extents().back().size(); }

  // Same kernels and head, different channel counts per block.
  ModelLayout with_channels(std::span<const std::size_t> channels) const;

  bool operator==(const ModelLayout&) const = default;
};

template <typename T>
using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;
template <typename T>
using Vec = Eigen::Matrix<T, Eigen::Dynamic, 1>;

template <typename T>
struct ConvBlock {
  ConvSpec spec;
  std::size_t in_channels = 1;
  Mat<T> weight;  // channels x (kernel_h * kernel_w * in_channels)
  Vec<T> gamma, beta;
  Vec<T> running_mean, running_var;
};

template <typename T>
struct DenseLayer {
  Mat<T> weight;  // out x in
  Vec<T> bias;
};

template <typename T>
struct Network {
  ModelLayout layout;
  Vec<T> input_shift, input_scale;  // per input row: (x - shift) * scale
  std::vector<ConvBlock<T>> blocks;
  DenseLayer<T> fc1, fc2;
  std::size_t frozen_blocks = 0;  // leading blocks run in inference mode and are not trained

  // He-uniform weights, unit BN gain, zero biases, identity input normalization.
  static Network initialize(const ModelLayout& layout, std::uint64_t seed);

  // Same structure, every numeric entry zero (gradient / velocity buffers).
  Network zeros_like() const;

  std::size_t parameter_count() const;

  // Parameter groups touched by the optimizer, in a fixed order.
  std::vector<std::span<T>> trainable();
  std::vector<std::string> trainable_names() const;

  template <typename U>
  Network<U> cast() const {
    Network<U> out;
    out.layout = layout;
    out.input_shift = input_shift.template cast<U>();
    out.input_scale = input_scale.template cast<U>();
    for (const auto& b : blocks) {
      ConvBlock<U> c;
      c.spec = b.spec;
      c.in_channels = b.in_channels;
      c.weight = b.weight.template cast<U>();
      c.gamma = b.gamma.template cast<U>();
      c.beta = b.beta.template cast<U>();
      c.running_mean = b.running_mean.template cast<U>();
      c.running_var = b.running_var.template cast<U>();
      out.blocks.push_back(std::move(c));
    }
    out.fc1 = {fc1.weight.template cast<U>(), fc1.bias.template cast<U>()};
    out.fc2 = {fc2.weight.template cast<U>(), fc2.bias.template cast<U>()};
    out.frozen_blocks = frozen_blocks;
    return out;
  }
};

using ModelParams = Network<float>;

inline constexpr double kBatchNormEpsilon = 1e-5;
inline constexpr double kBatchNormMomentum = 0.1;

struct ScorePair {
  double zeta_h0 = 0.5;
  double zeta_h1 = 0.5;
};

// The hypothesis with the higher score; ties go to H0.
inline Hypothesis decide(const ScorePair& s) { return s.zeta_h1 > s.zeta_h0 ? Hypothesis::H1 : Hypothesis::H0; }

// Softmax over logits ordered (H1, H0), matching one-hot H1 = [1 0], H0 = [0 1].
ScorePair softmax_scores(double logit_h1, double logit_h0);

// -mean log ζ_true with probabilities clamped at 1e-12.
double nll_loss(std::span<const ScorePair> scores, std::span<const Hypothesis> labels);

enum class Mode { Train, Infer };

using ObservationRefs = std::vector<const Observation*>;
ObservationRefs refs_of(std::span<const Observation> data);

// One batch through the network. Train mode normalizes with batch statistics and,
// when update_running_stats is set, folds them into the running estimates.
template <typename T>
std::vector<ScorePair> forward(Network<T>& net, std::span<const Observation* const> batch, Mode mode,
                               bool update_running_stats = true);

// Inference-mode scores for many observations, processed in chunks.
template <typename T>
std::vector<ScorePair> predict(const Network<T>& net, std::span<const Observation* const> data);
std::vector<ScorePair> predict(const ModelParams& net, std::span<const Observation> data);

// Train-mode forward plus backward for the mean NLL. Fills grads (same structure as
// net) for trainable groups and returns the loss. Running statistics are untouched.
template <typename T>
double loss_and_gradient(const Network<T>& net, std::span<const Observation* const> batch,
                         Network<T>& grads);

// v <- momentum * v - lr * g; theta <- theta + v.
template <typename T>
void sgdm_step(std::span<T> params, std::span<const T> grads, std::span<T> velocity, double lr,
               double momentum);
template <typename T>
void sgdm_step(Network<T>& net, Network<T>& grads, Network<T>& velocity, double lr, double momentum);

struct GradientCheck {
  double max_relative_error = 0.0;
  std::vector<std::string> groups;
  std::vector<double> group_errors;  // ||analytic - numeric|| / max(||analytic||, ||numeric||)
  std::vector<std::vector<double>> analytic, numeric;
};

// Central finite differences of the train-mode batch loss for every trainable entry.
GradientCheck gradient_check(const Network<double>& net, std::span<const Observation> batch,
                             double step = 1e-5);

struct TrainConfig {
  std::size_t batch_size = 25;
  double learning_rate = 0.001;
  double momentum = 0.9;
  std::size_t max_epochs = 20;
  double validation_fraction = 0.30;
  std::size_t validation_frequency = 80;  // iterations
  std::uint64_t seed = 0;
  bool verbose = false;
};

struct TrainLogEntry {
  std::size_t stage = 0;  // 0 for end-to-end; 1..4 for cascade stages
  std::size_t epoch = 0;
  std::size_t iteration = 0;
  double loss = 0.0;
  std::optional<double> validation_accuracy;
};

struct TrainResult {
  ModelParams params;
  std::vector<TrainLogEntry> log;
};

// Splits off validation_fraction of the data for validation and trains end to end.
TrainResult train(std::span<const Observation> data, const TrainConfig& cfg, const ModelLayout& layout);
TrainResult train(const ObservationRefs& train_set, const ObservationRefs& validation_set,
                  const TrainConfig& cfg, const ModelLayout& layout);

// Layer-wise training: each block is trained under a temporary head, then frozen; the
// last stage trains the real head on the frozen features.
TrainResult cascade_train(std::span<const Observation> data, const TrainConfig& cfg,
                          const ModelLayout& layout);
TrainResult cascade_train(const ObservationRefs& train_set, const ObservationRefs& validation_set,
                          const TrainConfig& cfg, const ModelLayout& layout);

double accuracy(std::span<const ScorePair> scores, std::span<const Observation* const> data);

void write_train_log_csv(const std::string& path, std::span<const TrainLogEntry> log,
                         const TrainConfig& cfg, const ModelLayout& layout);

// Binary model file (little-endian).
void save_model(const std::string& path, const ModelParams& params);
ModelParams load_model(const std::string& path);

}  // namespace ssbjam
