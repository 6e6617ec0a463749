#include "ssbjam/dnn.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <numeric>
#include <random>

namespace ssbjam {

std::vector<ModelLayout::Extent> ModelLayout::extents() const {
  if (input_rows == 0 || input_cols == 0) throw InvalidArgument("layout: empty input");
  std::vector<Extent> e{{1, input_rows, input_cols}};
  for (const auto& c : conv) {
    const Extent& p = e.back();
    if (c.kernel_h == 0 || c.kernel_w == 0 || c.channels == 0 || c.kernel_h > p.height ||
        c.kernel_w > p.width) {
      throw InvalidArgument("layout: kernel does not fit its input");
    }
    e.push_back({c.channels, p.height - c.kernel_h + 1, p.width - c.kernel_w + 1});
  }
  return e;
}

ModelLayout ModelLayout::with_channels(std::span<const std::size_t> channels) const {
  if (channels.size() != conv.size()) throw InvalidArgument("layout: channel list length differs from block count");
  ModelLayout out = *this;
  for (std::size_t i = 0; i < channels.size(); ++i) out.conv[i].channels = channels[i];
  return out;
}

template <typename T>
Network<T> Network<T>::initialize(const ModelLayout& layout, std::uint64_t seed) {
  const auto ext = layout.extents();
  if (layout.fc_hidden == 0) throw InvalidArgument("layout: hidden width must be positive");
  Network net;
  net.layout = layout;
  net.input_shift = Vec<T>::Zero(static_cast<Eigen::Index>(layout.input_rows));
  net.input_scale = Vec<T>::Ones(static_cast<Eigen::Index>(layout.input_rows));

  std::mt19937_64 rng(mix_seed(seed, 0xd22));
  auto he_uniform = [&](Mat<T>& w, std::size_t fan_in) {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in));
    for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = static_cast<T>(limit * u(rng));
  };

  for (std::size_t i = 0; i < layout.conv.size(); ++i) {
    ConvBlock<T> b;
    b.spec = layout.conv[i];
    b.in_channels = ext[i].channels;
    const std::size_t fan_in = b.spec.kernel_h * b.spec.kernel_w * b.in_channels;
    const auto ch = static_cast<Eigen::Index>(b.spec.channels);
    b.weight.resize(ch, static_cast<Eigen::Index>(fan_in));
    he_uniform(b.weight, fan_in);
    b.gamma = Vec<T>::Ones(ch);
    b.beta = Vec<T>::Zero(ch);
    b.running_mean = Vec<T>::Zero(ch);
    b.running_var = Vec<T>::Ones(ch);
    net.blocks.push_back(std::move(b));
  }
  const auto flat = static_cast<Eigen::Index>(ext.back().size());
  const auto hidden = static_cast<Eigen::Index>(layout.fc_hidden);
  net.fc1.weight.resize(hidden, flat);
  he_uniform(net.fc1.weight, ext.back().size());
  net.fc1.bias = Vec<T>::Zero(hidden);
  net.fc2.weight.resize(2, hidden);
  he_uniform(net.fc2.weight, layout.fc_hidden);
  net.fc2.bias = Vec<T>::Zero(2);
  return net;
}

template <typename T>
Network<T> Network<T>::zeros_like() const {
  Network out = *this;
  out.input_shift.setZero();
  out.input_scale.setZero();
  for (auto& b : out.blocks) {
    b.weight.setZero();
    b.gamma.setZero();
    b.beta.setZero();
    b.running_mean.setZero();
    b.running_var.setZero();
  }
  out.fc1.weight.setZero();
  out.fc1.bias.setZero();
  out.fc2.weight.setZero();
  out.fc2.bias.setZero();
  return out;
}

template <typename T>
std::size_t Network<T>::parameter_count() const {
  std::size_t n = 0;
  for (const auto& b : blocks) n += static_cast<std::size_t>(b.weight.size() + b.gamma.size() + b.beta.size());
  n += static_cast<std::size_t>(fc1.weight.size() + fc1.bias.size() + fc2.weight.size() + fc2.bias.size());
  return n;
}

template <typename T>
std::vector<std::span<T>> Network<T>::trainable() {
  std::vector<std::span<T>> g;
  auto add = [&](auto& m) { g.emplace_back(m.data(), static_cast<std::size_t>(m.size())); };
  for (std::size_t i = frozen_blocks; i < blocks.size(); ++i) {
    add(blocks[i].weight);
    add(blocks[i].gamma);
    add(blocks[i].beta);
  }
  add(fc1.weight);
  add(fc1.bias);
  add(fc2.weight);
  add(fc2.bias);
  return g;
}

template <typename T>
std::vector<std::string> Network<T>::trainable_names() const {
  std::vector<std::string> n;
  for (std::size_t i = frozen_blocks; i < blocks.size(); ++i) {
    const std::string k = std::to_string(i + 1);
    n.push_back("conv" + k + ".weight");
    n.push_back("bn" + k + ".gain");
    n.push_back("bn" + k + ".offset");
  }
  for (const char* s : {"fc1.weight", "fc1.bias", "fc2.weight", "fc2.bias"}) n.emplace_back(s);
  return n;
}

ScorePair softmax_scores(double logit_h1, double logit_h0) {
  const double m = std::max(logit_h1, logit_h0);
  const double e1 = std::exp(logit_h1 - m);
  const double e0 = std::exp(logit_h0 - m);
  const double s = e1 + e0;
  return {e0 / s, e1 / s};
}

double nll_loss(std::span<const ScorePair> scores, std::span<const Hypothesis> labels) {
  if (scores.size() != labels.size()) throw InvalidArgument("nll_loss: scores and labels differ in length");
  if (scores.empty()) return 0.0;
  double acc = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const double p = labels[i] == Hypothesis::H1 ? scores[i].zeta_h1 : scores[i].zeta_h0;
    acc -= std::log(std::max(p, 1e-12));
  }
  return acc / static_cast<double>(scores.size());
}

ObservationRefs refs_of(std::span<const Observation> data) {
  ObservationRefs r;
  r.reserve(data.size());
  for (const auto& o : data) r.push_back(&o);
  return r;
}

namespace {

using Extent = ModelLayout::Extent;

// Column p = oh*Wout + ow of `cols` stacks the kernel window, channel-fastest:
// row (i*kw + j)*C + c holds x(c, (oh+i)*W + ow + j).
template <typename T>
void im2col(const Mat<T>& x, const Extent& in, const ConvSpec& k, Mat<T>& cols) {
  const std::size_t C = in.channels, W = in.width;
  const std::size_t Ho = in.height - k.kernel_h + 1, Wo = in.width - k.kernel_w + 1;
  cols.resize(static_cast<Eigen::Index>(k.kernel_h * k.kernel_w * C), static_cast<Eigen::Index>(Ho * Wo));
  for (std::size_t oh = 0; oh < Ho; ++oh) {
    for (std::size_t ow = 0; ow < Wo; ++ow) {
      T* dst = cols.col(static_cast<Eigen::Index>(oh * Wo + ow)).data();
      for (std::size_t i = 0; i < k.kernel_h; ++i) {
        for (std::size_t j = 0; j < k.kernel_w; ++j) {
          const T* src = x.col(static_cast<Eigen::Index>((oh + i) * W + ow + j)).data();
          std::copy(src, src + C, dst + (i * k.kernel_w + j) * C);
        }
      }
    }
  }
}

template <typename T>
void col2im(const Mat<T>& dcols, const Extent& in, const ConvSpec& k, Mat<T>& dx) {
  const std::size_t C = in.channels, W = in.width;
  const std::size_t Ho = in.height - k.kernel_h + 1, Wo = in.width - k.kernel_w + 1;
  dx.setZero(static_cast<Eigen::Index>(C), static_cast<Eigen::Index>(in.positions()));
  for (std::size_t oh = 0; oh < Ho; ++oh) {
    for (std::size_t ow = 0; ow < Wo; ++ow) {
      const T* src = dcols.col(static_cast<Eigen::Index>(oh * Wo + ow)).data();
      for (std::size_t i = 0; i < k.kernel_h; ++i) {
        for (std::size_t j = 0; j < k.kernel_w; ++j) {
          T* dst = dx.col(static_cast<Eigen::Index>((oh + i) * W + ow + j)).data();
          const T* s = src + (i * k.kernel_w + j) * C;
          for (std::size_t c = 0; c < C; ++c) dst[c] += s[c];
        }
      }
    }
  }
}

template <typename T>
class Engine {
 public:
  explicit Engine(const Network<T>& net) : net_(net), ext_(net.layout.extents()) {
    if (net.blocks.size() != net.layout.conv.size()) throw InvalidArgument("network: block count differs from layout");
  }

  std::vector<ScorePair> run(std::span<const Observation* const> batch, Mode mode, Network<T>* stats_sink) {
    B_ = batch.size();
    if (B_ == 0) return {};
    const std::size_t L = net_.blocks.size();
    acts_.assign(L + 1, std::vector<Mat<T>>(B_));
    xhat_.assign(L, {});
    inv_std_.assign(L, {});
    for (std::size_t b = 0; b < B_; ++b) load_input(*batch[b], acts_[0][b]);

    for (std::size_t i = 0; i < L; ++i) {
      const ConvBlock<T>& blk = net_.blocks[i];
      const Extent& in = ext_[i];
      const auto C = static_cast<Eigen::Index>(ext_[i + 1].channels);
      const bool batch_stats = mode == Mode::Train && i >= net_.frozen_blocks;
      if (!batch_stats) {
        const Vec<T> scale = (blk.gamma.array() / (blk.running_var.array() + T(kBatchNormEpsilon)).sqrt()).matrix();
        const Vec<T> shift = blk.beta - blk.running_mean.cwiseProduct(scale);
        for (std::size_t b = 0; b < B_; ++b) {
          im2col(acts_[i][b], in, blk.spec, cols_);
          Mat<T> z = blk.weight * cols_;
          acts_[i + 1][b] = ((z.array().colwise() * scale.array()).colwise() + shift.array()).max(T(0)).matrix();
        }
      } else {
        auto& xh = xhat_[i];
        xh.resize(B_);
        Vec<T> sum = Vec<T>::Zero(C);
        for (std::size_t b = 0; b < B_; ++b) {
          im2col(acts_[i][b], in, blk.spec, cols_);
          xh[b].noalias() = blk.weight * cols_;
          sum += xh[b].rowwise().sum();
        }
        const T m = static_cast<T>(B_ * ext_[i + 1].positions());
        const Vec<T> mean = sum / m;
        Vec<T> sq = Vec<T>::Zero(C);
        for (std::size_t b = 0; b < B_; ++b) sq += (xh[b].colwise() - mean).array().square().matrix().rowwise().sum();
        const Vec<T> var = sq / m;
        inv_std_[i] = (var.array() + T(kBatchNormEpsilon)).rsqrt().matrix();
        for (std::size_t b = 0; b < B_; ++b) {
          xh[b] = ((xh[b].colwise() - mean).array().colwise() * inv_std_[i].array()).matrix();
          acts_[i + 1][b] = ((xh[b].array().colwise() * blk.gamma.array()).colwise() + blk.beta.array()).max(T(0)).matrix();
        }
        if (stats_sink) {
          auto& s = stats_sink->blocks[i];
          const T mom = T(kBatchNormMomentum);
          const T unbias = m > 1 ? m / (m - 1) : T(1);
          s.running_mean = (T(1) - mom) * s.running_mean + mom * mean;
          s.running_var = (T(1) - mom) * s.running_var + mom * unbias * var;
        }
      }
      // Inputs of frozen or inference blocks are never revisited.
      if (!(mode == Mode::Train && i >= net_.frozen_blocks)) {
        if (!(mode == Mode::Train && i + 1 == net_.frozen_blocks)) acts_[i].clear();
      }
    }

    const std::size_t F = ext_.back().size();
    flat_.resize(static_cast<Eigen::Index>(F), static_cast<Eigen::Index>(B_));
    for (std::size_t b = 0; b < B_; ++b) {
      flat_.col(static_cast<Eigen::Index>(b)) = Eigen::Map<const Vec<T>>(acts_[L][b].data(), static_cast<Eigen::Index>(F));
    }
    acts_[L].clear();
    if (mode == Mode::Train) {
      h1_ = ((net_.fc1.weight * flat_).colwise() + net_.fc1.bias).cwiseMax(T(0));
      logits_ = (net_.fc2.weight * h1_).colwise() + net_.fc2.bias;
    } else {
      // Column by column so an observation scores identically in any batch.
      h1_.resize(net_.fc1.weight.rows(), flat_.cols());
      logits_.resize(2, flat_.cols());
      for (Eigen::Index b = 0; b < flat_.cols(); ++b) {
        h1_.col(b).noalias() = net_.fc1.weight * flat_.col(b);
        h1_.col(b) = (h1_.col(b) + net_.fc1.bias).cwiseMax(T(0));
        logits_.col(b).noalias() = net_.fc2.weight * h1_.col(b);
        logits_.col(b) += net_.fc2.bias;
      }
    }

    std::vector<ScorePair> scores(B_);
    for (std::size_t b = 0; b < B_; ++b) {
      const auto j = static_cast<Eigen::Index>(b);
      scores[b] = softmax_scores(static_cast<double>(logits_(0, j)), static_cast<double>(logits_(1, j)));
    }
    scores_ = scores;
    return scores;
  }

  double backward(std::span<const Observation* const> batch, Network<T>& g) {
    const std::size_t L = net_.blocks.size();
    const auto B = static_cast<Eigen::Index>(B_);
    Mat<T> dlogits(2, B);
    double loss = 0.0;
    for (std::size_t b = 0; b < B_; ++b) {
      if (!batch[b]->label) throw InvalidArgument("training observation without a label");
      const bool h1 = *batch[b]->label == Hypothesis::H1;
      const auto j = static_cast<Eigen::Index>(b);
      dlogits(0, j) = static_cast<T>((scores_[b].zeta_h1 - (h1 ? 1.0 : 0.0)) / static_cast<double>(B_));
      dlogits(1, j) = static_cast<T>((scores_[b].zeta_h0 - (h1 ? 0.0 : 1.0)) / static_cast<double>(B_));
      loss -= std::log(std::max(h1 ? scores_[b].zeta_h1 : scores_[b].zeta_h0, 1e-12));
    }
    loss /= static_cast<double>(B_);

    g.fc2.weight.noalias() = dlogits * h1_.transpose();
    g.fc2.bias = dlogits.rowwise().sum();
    Mat<T> dh = net_.fc2.weight.transpose() * dlogits;
    dh = dh.cwiseProduct((h1_.array() > T(0)).template cast<T>().matrix());
    g.fc1.weight.noalias() = dh * flat_.transpose();
    g.fc1.bias = dh.rowwise().sum();
    if (net_.frozen_blocks >= L) return loss;

    const Mat<T> dflat = net_.fc1.weight.transpose() * dh;
    std::vector<Mat<T>> dA(B_);
    const auto CL = static_cast<Eigen::Index>(ext_.back().channels);
    const auto PL = static_cast<Eigen::Index>(ext_.back().positions());
    for (std::size_t b = 0; b < B_; ++b) {
      dA[b] = Eigen::Map<const Mat<T>>(dflat.col(static_cast<Eigen::Index>(b)).data(), CL, PL);
    }

    for (std::size_t i = L; i-- > net_.frozen_blocks;) {
      const ConvBlock<T>& blk = net_.blocks[i];
      const auto C = static_cast<Eigen::Index>(ext_[i + 1].channels);
      const auto& xh = xhat_[i];
      const T m = static_cast<T>(B_ * ext_[i + 1].positions());

      Vec<T> dgamma = Vec<T>::Zero(C), dbeta = Vec<T>::Zero(C);
      for (std::size_t b = 0; b < B_; ++b) {
        const auto y = (xh[b].array().colwise() * blk.gamma.array()).colwise() + blk.beta.array();
        dA[b] = (y > T(0)).select(dA[b].array(), T(0)).matrix();
        dgamma += dA[b].cwiseProduct(xh[b]).rowwise().sum();
        dbeta += dA[b].rowwise().sum();
      }
      auto& gb = g.blocks[i];
      gb.gamma = dgamma;
      gb.beta = dbeta;
      gb.weight.setZero(blk.weight.rows(), blk.weight.cols());

      const Vec<T> a = blk.gamma * m;
      const Vec<T> s1 = blk.gamma.cwiseProduct(dbeta);
      const Vec<T> s2 = blk.gamma.cwiseProduct(dgamma);
      const Vec<T> post = inv_std_[i] / m;
      const bool need_dx = i > net_.frozen_blocks;
      std::vector<Mat<T>> dX(need_dx ? B_ : 0);
      Mat<T> dz, dcols;
      for (std::size_t b = 0; b < B_; ++b) {
        dz = (((dA[b].array().colwise() * a.array()).colwise() - s1.array()) -
              (xh[b].array().colwise() * s2.array()))
                 .colwise() *
             post.array();
        im2col(acts_[i][b], ext_[i], blk.spec, cols_);
        gb.weight.noalias() += dz * cols_.transpose();
        if (need_dx) {
          dcols.noalias() = blk.weight.transpose() * dz;
          col2im(dcols, ext_[i], blk.spec, dX[b]);
        }
      }
      dA = std::move(dX);
    }
    return loss;
  }

 private:
  void load_input(const Observation& obs, Mat<T>& x) const {
    const auto& lay = net_.layout;
    if (obs.rows != lay.input_rows || obs.cols != lay.input_cols || obs.tensor.size() != obs.rows * obs.cols) {
      throw InvalidArgument("observation shape " + std::to_string(obs.rows) + "x" + std::to_string(obs.cols) +
                            " does not match the model input " + std::to_string(lay.input_rows) + "x" +
                            std::to_string(lay.input_cols));
    }
    x.resize(1, static_cast<Eigen::Index>(obs.tensor.size()));
    for (std::size_t r = 0; r < obs.rows; ++r) {
      const T shift = net_.input_shift(static_cast<Eigen::Index>(r));
      const T scale = net_.input_scale(static_cast<Eigen::Index>(r));
      for (std::size_t c = 0; c < obs.cols; ++c) {
        const std::size_t q = r * obs.cols + c;
        x(0, static_cast<Eigen::Index>(q)) = (static_cast<T>(obs.tensor[q]) - shift) * scale;
      }
    }
  }

  const Network<T>& net_;
  std::vector<Extent> ext_;
  std::size_t B_ = 0;
  std::vector<std::vector<Mat<T>>> acts_;
  std::vector<std::vector<Mat<T>>> xhat_;
  std::vector<Vec<T>> inv_std_;
  Mat<T> cols_, flat_, h1_, logits_;
  std::vector<ScorePair> scores_;
};

template <typename T>
double batch_loss(const Network<T>& net, std::span<const Observation* const> batch) {
  Engine<T> e(net);
  const auto scores = e.run(batch, Mode::Train, nullptr);
  std::vector<Hypothesis> labels;
  for (const auto* o : batch) {
    if (!o->label) throw InvalidArgument("observation without a label");
    labels.push_back(*o->label);
  }
  return nll_loss(scores, labels);
}

void require_both_classes(const ObservationRefs& data) {
  std::size_t n0 = 0, n1 = 0;
  for (const auto* o : data) {
    if (!o->label) throw InvalidArgument("training observation without a label");
    (*o->label == Hypothesis::H0 ? n0 : n1)++;
  }
  if (n0 == 0 || n1 == 0) throw InvalidArgument("training data must contain both H0 and H1 observations");
}

void fit_input_normalization(ModelParams& net, const ObservationRefs& data) {
  const std::size_t rows = net.layout.input_rows;
  std::vector<double> sum(rows, 0.0), sq(rows, 0.0);
  std::size_t n = 0;
  for (const auto* o : data) {
    for (std::size_t r = 0; r < rows; ++r) {
      for (double v : o->row(r)) sum[r] += v;
    }
    n += o->cols;
  }
  for (std::size_t r = 0; r < rows; ++r) {
    const double mean = sum[r] / static_cast<double>(n);
    for (const auto* o : data) {
      for (double v : o->row(r)) sq[r] += (v - mean) * (v - mean);
    }
    const double sd = std::sqrt(sq[r] / static_cast<double>(n));
    net.input_shift(static_cast<Eigen::Index>(r)) = static_cast<float>(mean);
    net.input_scale(static_cast<Eigen::Index>(r)) = sd > 1e-30 ? static_cast<float>(1.0 / sd) : 1.0f;
  }
}

void check_layout_matches(const ModelLayout& layout, const ObservationRefs& data) {
  for (const auto* o : data) {
    if (o->rows != layout.input_rows || o->cols != layout.input_cols) {
      throw InvalidArgument("observation shape does not match the model layout");
    }
  }
}

void run_sgdm(ModelParams& net, const ObservationRefs& train_set, const ObservationRefs& validation_set,
              const TrainConfig& cfg, std::size_t stage, std::vector<TrainLogEntry>& log) {
  if (cfg.batch_size == 0) throw InvalidArgument("train: batch size must be positive");
  const std::size_t n_batches = train_set.size() / cfg.batch_size;
  if (n_batches == 0) throw InvalidArgument("train: fewer observations than one mini-batch");

  ModelParams grads = net.zeros_like();
  ModelParams velocity = net.zeros_like();
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), 0);
  ObservationRefs batch(cfg.batch_size);
  std::size_t iteration = 0;

  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    std::mt19937_64 rng(mix_seed(cfg.seed, stage * 1000 + epoch));
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    for (std::size_t k = 0; k < n_batches; ++k) {
      for (std::size_t j = 0; j < cfg.batch_size; ++j) batch[j] = train_set[order[k * cfg.batch_size + j]];
      Engine<float> engine(net);
      engine.run(batch, Mode::Train, &net);
      const double loss = engine.backward(batch, grads);
      sgdm_step(net, grads, velocity, cfg.learning_rate, cfg.momentum);
      ++iteration;
      epoch_loss += loss;

      TrainLogEntry entry{stage, epoch, iteration, loss, std::nullopt};
      const bool last = epoch == cfg.max_epochs && k + 1 == n_batches;
      if (!validation_set.empty() && cfg.validation_frequency > 0 &&
          (iteration % cfg.validation_frequency == 0 || last)) {
        entry.validation_accuracy = accuracy(predict(net, validation_set), validation_set);
      }
      log.push_back(entry);
    }
    if (cfg.verbose) {
      std::cerr << "stage " << stage << " epoch " << epoch << " mean loss "
                << epoch_loss / static_cast<double>(n_batches) << "\n";
    }
  }
}

std::pair<ObservationRefs, ObservationRefs> split_validation(std::span<const Observation> data,
                                                             const TrainConfig& cfg) {
  if (!(cfg.validation_fraction > 0.0 && cfg.validation_fraction < 1.0)) {
    throw InvalidArgument("train: validation fraction must lie in (0, 1)");
  }
  ObservationRefs all = refs_of(data);
  std::mt19937_64 rng(mix_seed(cfg.seed, 0x5b1));
  std::shuffle(all.begin(), all.end(), rng);
  const auto n_val = static_cast<std::size_t>(std::llround(cfg.validation_fraction * static_cast<double>(all.size())));
  ObservationRefs val(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(n_val));
  ObservationRefs tr(all.begin() + static_cast<std::ptrdiff_t>(n_val), all.end());
  return {tr, val};
}

}  // namespace

template <typename T>
std::vector<ScorePair> forward(Network<T>& net, std::span<const Observation* const> batch, Mode mode,
                               bool update_running_stats) {
  Engine<T> e(net);
  return e.run(batch, mode, mode == Mode::Train && update_running_stats ? &net : nullptr);
}

template <typename T>
std::vector<ScorePair> predict(const Network<T>& net, std::span<const Observation* const> data) {
  constexpr std::size_t kChunk = 64;
  std::vector<ScorePair> out;
  out.reserve(data.size());
  Engine<T> e(net);
  for (std::size_t i = 0; i < data.size(); i += kChunk) {
    const auto part = e.run(data.subspan(i, std::min(kChunk, data.size() - i)), Mode::Infer, nullptr);
    out.insert(out.end(), part.begin(), part.end());
  }
  return out;
}

std::vector<ScorePair> predict(const ModelParams& net, std::span<const Observation> data) {
  const ObservationRefs refs = refs_of(data);
  return predict(net, std::span<const Observation* const>(refs));
}

template <typename T>
double loss_and_gradient(const Network<T>& net, std::span<const Observation* const> batch,
                         Network<T>& grads) {
  Engine<T> e(net);
  e.run(batch, Mode::Train, nullptr);
  return e.backward(batch, grads);
}

template <typename T>
void sgdm_step(std::span<T> params, std::span<const T> grads, std::span<T> velocity, double lr,
               double momentum) {
  if (params.size() != grads.size() || params.size() != velocity.size()) {
    throw InvalidArgument("sgdm_step: parameter, gradient and velocity sizes differ");
  }
  const T mu = static_cast<T>(momentum), eta = static_cast<T>(lr);
  for (std::size_t i = 0; i < params.size(); ++i) {
    velocity[i] = mu * velocity[i] - eta * grads[i];
    params[i] += velocity[i];
  }
}

template <typename T>
void sgdm_step(Network<T>& net, Network<T>& grads, Network<T>& velocity, double lr, double momentum) {
  auto p = net.trainable();
  auto g = grads.trainable();
  auto v = velocity.trainable();
  if (p.size() != g.size() || p.size() != v.size()) throw InvalidArgument("sgdm_step: parameter group mismatch");
  for (std::size_t i = 0; i < p.size(); ++i) sgdm_step<T>(p[i], g[i], v[i], lr, momentum);
}

GradientCheck gradient_check(const Network<double>& net, std::span<const Observation> batch, double step) {
  const ObservationRefs refs = refs_of(batch);
  Network<double> work = net;
  Network<double> grads = work.zeros_like();
  loss_and_gradient(work, std::span<const Observation* const>(refs), grads);

  GradientCheck res;
  res.groups = work.trainable_names();
  auto params = work.trainable();
  auto analytic = grads.trainable();
  for (std::size_t g = 0; g < params.size(); ++g) {
    std::vector<double> a(analytic[g].begin(), analytic[g].end());
    std::vector<double> n(a.size());
    for (std::size_t i = 0; i < params[g].size(); ++i) {
      const double orig = params[g][i];
      params[g][i] = orig + step;
      const double up = batch_loss(work, std::span<const Observation* const>(refs));
      params[g][i] = orig - step;
      const double down = batch_loss(work, std::span<const Observation* const>(refs));
      params[g][i] = orig;
      n[i] = (up - down) / (2.0 * step);
    }
    double diff = 0, na = 0, nn = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
      diff += (a[i] - n[i]) * (a[i] - n[i]);
      na += a[i] * a[i];
      nn += n[i] * n[i];
    }
    const double denom = std::sqrt(std::max(na, nn));
    const double err = denom > 0 ? std::sqrt(diff) / denom : 0.0;
    res.group_errors.push_back(err);
    res.max_relative_error = std::max(res.max_relative_error, err);
    res.analytic.push_back(std::move(a));
    res.numeric.push_back(std::move(n));
  }
  return res;
}

double accuracy(std::span<const ScorePair> scores, std::span<const Observation* const> data) {
  if (scores.size() != data.size()) throw InvalidArgument("accuracy: size mismatch");
  if (data.empty()) return 0.0;
  std::size_t ok = 0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (data[i]->label && decide(scores[i]) == *data[i]->label) ++ok;
  }
  return static_cast<double>(ok) / static_cast<double>(data.size());
}

TrainResult train(std::span<const Observation> data, const TrainConfig& cfg, const ModelLayout& layout) {
  auto [tr, val] = split_validation(data, cfg);
  return train(tr, val, cfg, layout);
}

TrainResult train(const ObservationRefs& train_set, const ObservationRefs& validation_set,
                  const TrainConfig& cfg, const ModelLayout& layout) {
  require_both_classes(train_set);
  check_layout_matches(layout, train_set);
  check_layout_matches(layout, validation_set);
  TrainResult res{ModelParams::initialize(layout, cfg.seed), {}};
  fit_input_normalization(res.params, train_set);
  run_sgdm(res.params, train_set, validation_set, cfg, 0, res.log);
  return res;
}

TrainResult cascade_train(std::span<const Observation> data, const TrainConfig& cfg,
                          const ModelLayout& layout) {
  auto [tr, val] = split_validation(data, cfg);
  return cascade_train(tr, val, cfg, layout);
}

TrainResult cascade_train(const ObservationRefs& train_set, const ObservationRefs& validation_set,
                          const TrainConfig& cfg, const ModelLayout& layout) {
  require_both_classes(train_set);
  check_layout_matches(layout, train_set);
  check_layout_matches(layout, validation_set);
  TrainResult res{ModelParams::initialize(layout, cfg.seed), {}};
  ModelParams& final_net = res.params;
  fit_input_normalization(final_net, train_set);

  const std::size_t L = layout.conv.size();
  for (std::size_t s = 0; s < L; ++s) {
    ModelLayout sub = layout;
    sub.conv.resize(s + 1);
    ModelParams stage = ModelParams::initialize(sub, mix_seed(cfg.seed, 100 + s));
    stage.input_shift = final_net.input_shift;
    stage.input_scale = final_net.input_scale;
    for (std::size_t j = 0; j <= s; ++j) stage.blocks[j] = final_net.blocks[j];
    stage.frozen_blocks = s;
    run_sgdm(stage, train_set, validation_set, cfg, s + 1, res.log);
    final_net.blocks[s] = stage.blocks[s];
    if (s + 1 == L) {
      final_net.fc1 = stage.fc1;
      final_net.fc2 = stage.fc2;
    }
  }
  final_net.frozen_blocks = L;
  run_sgdm(final_net, train_set, validation_set, cfg, L + 1, res.log);
  final_net.frozen_blocks = 0;
  return res;
}

void write_train_log_csv(const std::string& path, std::span<const TrainLogEntry> log,
                         const TrainConfig& cfg, const ModelLayout& layout) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write training log '" + path + "'");
  out << "# optimizer=sgdm\n"
      << "# batch_size=" << cfg.batch_size << "\n"
      << "# learning_rate=" << cfg.learning_rate << "\n"
      << "# momentum=" << cfg.momentum << "\n"
      << "# max_epochs=" << cfg.max_epochs << "\n"
      << "# validation_fraction=" << cfg.validation_fraction << "\n"
      << "# validation_frequency=" << cfg.validation_frequency << "\n"
      << "# seed=" << cfg.seed << "\n"
      << "# input=" << layout.input_rows << "x" << layout.input_cols << "\n";
  for (std::size_t i = 0; i < layout.conv.size(); ++i) {
    const auto& c = layout.conv[i];
    out << "# conv" << i + 1 << "=" << c.kernel_h << "x" << c.kernel_w << "@" << c.channels << "\n";
  }
  out << "# fc=" << layout.fc_hidden << ",2\n";
  out << "stage,epoch,iteration,loss,validation_accuracy\n";
  out.precision(9);
  for (const auto& e : log) {
    out << e.stage << ',' << e.epoch << ',' << e.iteration << ',' << e.loss << ',';
    if (e.validation_accuracy) out << *e.validation_accuracy;
    out << '\n';
  }
}

template struct Network<float>;
template struct Network<double>;
template std::vector<ScorePair> forward(Network<float>&, std::span<const Observation* const>, Mode, bool);
template std::vector<ScorePair> forward(Network<double>&, std::span<const Observation* const>, Mode, bool);
template std::vector<ScorePair> predict(const Network<float>&, std::span<const Observation* const>);
template std::vector<ScorePair> predict(const Network<double>&, std::span<const Observation* const>);
template double loss_and_gradient(const Network<float>&, std::span<const Observation* const>, Network<float>&);
template double loss_and_gradient(const Network<double>&, std::span<const Observation* const>, Network<double>&);
template void sgdm_step(std::span<float>, std::span<const float>, std::span<float>, double, double);
template void sgdm_step(std::span<double>, std::span<const double>, std::span<double>, double, double);
template void sgdm_step(Network<float>&, Network<float>&, Network<float>&, double, double);
template void sgdm_step(Network<double>&, Network<double>&, Network<double>&, double, double);

}  // namespace ssbjam
