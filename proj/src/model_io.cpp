#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "ssbjam/dnn.hpp"

namespace ssbjam {

namespace {

constexpr std::array<char, 8> kMagic = {'S', 'S', 'B', 'N', 'N', '0', '0', '1'};
constexpr std::uint32_t kVersion = 1;

enum Tag : std::uint8_t { kInputNorm = 1, kConv = 2, kBatchNorm = 3, kDense = 4 };

static_assert(std::endian::native == std::endian::little, "model files are written in host order");

class Writer {
 public:
  void bytes(const void* p, std::size_t n) {
    const auto* c = static_cast<const char*>(p);
    buf_.insert(buf_.end(), c, c + n);
  }
  void u8(std::uint8_t v) { bytes(&v, 1); }
  void u32(std::uint32_t v) { bytes(&v, 4); }
  void size(std::size_t v) { u32(static_cast<std::uint32_t>(v)); }
  template <typename M>
  void floats(const M& m) {
    for (Eigen::Index i = 0; i < m.size(); ++i) {
      const float f = m.data()[i];
      bytes(&f, 4);
    }
  }
  const std::vector<char>& data() const { return buf_; }

 private:
  std::vector<char> buf_;
};

class Reader {
 public:
  explicit Reader(std::vector<char> buf) : buf_(std::move(buf)) {}
  void bytes(void* p, std::size_t n) {
    if (pos_ + n > buf_.size()) throw FormatError("model file truncated", pos_);
    std::memcpy(p, buf_.data() + pos_, n);
    pos_ += n;
  }
  std::uint8_t u8() {
    std::uint8_t v;
    bytes(&v, 1);
    return v;
  }
  std::uint32_t u32() {
    std::uint32_t v;
    bytes(&v, 4);
    return v;
  }
  // Dimension fields must be positive and small enough that the tensor they
  // describe can fit in the rest of the file.
  std::size_t dim() {
    const std::size_t at = pos_;
    const std::uint32_t v = u32();
    if (v == 0 || v > buf_.size()) throw FormatError("implausible dimension " + std::to_string(v), at);
    return v;
  }
  template <typename M>
  void floats(M& m) {
    const std::size_t n = static_cast<std::size_t>(m.size()) * 4;
    if (pos_ + n > buf_.size()) throw FormatError("model file truncated", pos_);
    for (Eigen::Index i = 0; i < m.size(); ++i) bytes(m.data() + i, 4);
  }
  // Checked before allocating a tensor of `count` floats.
  void need_floats(std::size_t count) const {
    if (count > (buf_.size() - pos_) / 4) throw FormatError("layer larger than the remaining file", pos_);
  }
  std::size_t pos() const { return pos_; }
  bool done() const { return pos_ == buf_.size(); }

 private:
  std::vector<char> buf_;
  std::size_t pos_ = 0;
};

}  // namespace

void save_model(const std::string& path, const ModelParams& p) {
  Writer w;
  w.bytes(kMagic.data(), kMagic.size());
  w.u32(kVersion);
  w.size(1 + 2 * p.blocks.size() + 2);

  w.u8(kInputNorm);
  w.size(p.layout.input_rows);
  w.size(p.layout.input_cols);
  w.floats(p.input_shift);
  w.floats(p.input_scale);

  for (const auto& b : p.blocks) {
    w.u8(kConv);
    w.size(b.spec.kernel_h);
    w.size(b.spec.kernel_w);
    w.size(b.in_channels);
    w.size(b.spec.channels);
    w.floats(b.weight);
    w.u8(kBatchNorm);
    w.size(b.spec.channels);
    w.floats(b.gamma);
    w.floats(b.beta);
    w.floats(b.running_mean);
    w.floats(b.running_var);
  }
  for (const auto* d : {&p.fc1, &p.fc2}) {
    w.u8(kDense);
    w.size(static_cast<std::size_t>(d->weight.cols()));
    w.size(static_cast<std::size_t>(d->weight.rows()));
    const Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm = d->weight;
    w.floats(rm);
    w.floats(d->bias);
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write model file '" + path + "'");
  out.write(w.data().data(), static_cast<std::streamsize>(w.data().size()));
  if (!out) throw std::runtime_error("failed writing model file '" + path + "'");
}

ModelParams load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open model file '" + path + "'");
  Reader r(std::vector<char>(std::istreambuf_iterator<char>(in), {}));

  std::array<char, 8> magic{};
  r.bytes(magic.data(), magic.size());
  if (magic != kMagic) throw FormatError("not a model file (bad magic)", 0);
  const std::size_t version_at = r.pos();
  if (const auto v = r.u32(); v != kVersion) throw FormatError("unsupported model version " + std::to_string(v), version_at);
  const std::size_t count_at = r.pos();
  const std::uint32_t layer_count = r.u32();

  ModelParams p;
  p.layout.conv.clear();
  bool have_input = false;
  std::size_t dense_seen = 0;
  std::uint32_t layers = 0;
  std::size_t prev_channels = 1;

  while (!r.done()) {
    const std::size_t tag_at = r.pos();
    const std::uint8_t tag = r.u8();
    ++layers;
    if (tag == kInputNorm) {
      if (have_input || layers != 1) throw FormatError("input normalization must be the first layer", tag_at);
      p.layout.input_rows = r.dim();
      p.layout.input_cols = r.dim();
      p.input_shift.resize(static_cast<Eigen::Index>(p.layout.input_rows));
      p.input_scale.resize(static_cast<Eigen::Index>(p.layout.input_rows));
      r.floats(p.input_shift);
      r.floats(p.input_scale);
      have_input = true;
    } else if (tag == kConv) {
      if (!have_input || dense_seen) throw FormatError("convolution layer out of order", tag_at);
      ConvBlock<float> b;
      b.spec.kernel_h = r.dim();
      b.spec.kernel_w = r.dim();
      const std::size_t in_at = r.pos();
      b.in_channels = r.dim();
      if (b.in_channels != prev_channels) throw FormatError("convolution input channels do not chain", in_at);
      b.spec.channels = r.dim();
      r.need_floats(b.spec.channels * b.spec.kernel_h * b.spec.kernel_w * b.in_channels);
      b.weight.resize(static_cast<Eigen::Index>(b.spec.channels),
                      static_cast<Eigen::Index>(b.spec.kernel_h * b.spec.kernel_w * b.in_channels));
      r.floats(b.weight);
      const std::size_t bn_at = r.pos();
      if (r.u8() != kBatchNorm) throw FormatError("convolution must be followed by batch norm", bn_at);
      ++layers;
      const std::size_t ch_at = r.pos();
      if (r.dim() != b.spec.channels) throw FormatError("batch norm width differs from convolution", ch_at);
      const auto c = static_cast<Eigen::Index>(b.spec.channels);
      b.gamma.resize(c);
      b.beta.resize(c);
      b.running_mean.resize(c);
      b.running_var.resize(c);
      r.floats(b.gamma);
      r.floats(b.beta);
      r.floats(b.running_mean);
      r.floats(b.running_var);
      prev_channels = b.spec.channels;
      p.layout.conv.push_back(b.spec);
      p.blocks.push_back(std::move(b));
    } else if (tag == kDense) {
      if (!have_input || dense_seen >= 2) throw FormatError("unexpected dense layer", tag_at);
      const std::size_t in_at = r.pos();
      const std::size_t n_in = r.dim();
      const std::size_t n_out = r.dim();
      r.need_floats(n_in * n_out);
      Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> w(
          static_cast<Eigen::Index>(n_out), static_cast<Eigen::Index>(n_in));
      r.floats(w);
      DenseLayer<float>& d = dense_seen == 0 ? p.fc1 : p.fc2;
      d.weight = w;
      d.bias.resize(static_cast<Eigen::Index>(n_out));
      r.floats(d.bias);
      if (dense_seen == 0) {
        std::size_t flat = 0;
        try {
          flat = p.layout.flat_size();
        } catch (const InvalidArgument& e) {
          throw FormatError(std::string("inconsistent layer shapes: ") + e.what(), in_at);
        }
        if (n_in != flat) throw FormatError("dense input width does not match the convolution output", in_at);
        p.layout.fc_hidden = n_out;
      } else {
        if (n_in != p.layout.fc_hidden) throw FormatError("output layer width does not chain", in_at);
        if (n_out != 2) throw FormatError("output layer must have two units", in_at);
      }
      ++dense_seen;
    } else {
      throw FormatError("unknown layer tag " + std::to_string(tag), tag_at);
    }
  }
  if (!have_input || dense_seen != 2) throw FormatError("model file is missing layers", r.pos());
  if (layers != layer_count) throw FormatError("layer count does not match header", count_at);
  return p;
}

}  // namespace ssbjam
