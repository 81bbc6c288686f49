#include "kdsel/selector.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <random>
#include <sstream>

#include "kdsel/errors.hpp"

namespace kdsel {

std::string_view encoder_name(EncoderKind kind) {
  return kind == EncoderKind::Mlp ? "mlp" : "temporal-conv";
}

EncoderKind encoder_from_name(std::string_view name) {
  if (name == "mlp") return EncoderKind::Mlp;
  if (name == "temporal-conv" || name == "conv") return EncoderKind::TemporalConv;
  throw ConfigError("unknown encoder '" + std::string(name) + "'");
}

std::size_t ModelShape::feature_dim() const noexcept {
  return encoder == EncoderKind::Mlp ? kMlpHidden2 : kConvChannels[2];
}

namespace {

std::size_t product(const std::vector<std::size_t>& dims) {
  std::size_t p = 1;
  for (auto d : dims) p *= d;
  return p;
}

Param make_param(std::string name, std::vector<std::size_t> shape) {
  Param p{std::move(name), std::move(shape), {}};
  p.data.assign(product(p.shape), 0.0f);
  return p;
}

// Expected (name, shape) manifest for a model shape, in storage order.
std::vector<std::pair<std::string, std::vector<std::size_t>>> manifest(const ModelShape& s) {
  std::vector<std::pair<std::string, std::vector<std::size_t>>> m;
  if (s.encoder == EncoderKind::Mlp) {
    m.push_back({"enc.w1", {kMlpHidden1, s.window}});
    m.push_back({"enc.b1", {kMlpHidden1}});
    m.push_back({"enc.w2", {kMlpHidden2, kMlpHidden1}});
    m.push_back({"enc.b2", {kMlpHidden2}});
  } else {
    std::size_t in = 1;
    for (int l = 0; l < 3; ++l) {
      const std::string tag = "enc.conv" + std::to_string(l + 1);
      m.push_back({tag + ".w", {kConvChannels[l], in, kConvKernel}});
      m.push_back({tag + ".b", {kConvChannels[l]}});
      in = kConvChannels[l];
    }
  }
  const std::size_t feat = s.feature_dim();
  m.push_back({"cls.w", {s.classes, feat}});
  m.push_back({"cls.b", {s.classes}});
  if (s.has_projections()) {
    m.push_back({"proj_t.w1", {s.proj_hidden, feat}});
    m.push_back({"proj_t.b1", {s.proj_hidden}});
    m.push_back({"proj_t.w2", {s.proj_dim, s.proj_hidden}});
    m.push_back({"proj_t.b2", {s.proj_dim}});
    m.push_back({"proj_k.w1", {s.proj_hidden, s.text_dim}});
    m.push_back({"proj_k.b1", {s.proj_hidden}});
    m.push_back({"proj_k.w2", {s.proj_dim, s.proj_hidden}});
    m.push_back({"proj_k.b2", {s.proj_dim}});
  }
  return m;
}

std::size_t fan_in(const Param& p) {
  if (p.shape.size() < 2) return 0;
  std::size_t f = 1;
  for (std::size_t i = 1; i < p.shape.size(); ++i) f *= p.shape[i];
  return f;
}

}  // namespace

SelectorModel SelectorModel::create(const ModelShape& shape, std::uint64_t seed) {
  if (shape.window < 2) throw ConfigError("model window must be >= 2");
  if (shape.classes < 2) throw ConfigError("model needs at least two classes");
  SelectorModel model;
  for (auto& [name, dims] : manifest(shape)) model.params_.push_back(make_param(name, dims));
  std::mt19937_64 rng(seed);
  for (auto& p : model.params_) {
    const std::size_t f = fan_in(p);
    if (f == 0) continue;  // bias
    const double bound = 1.0 / std::sqrt(static_cast<double>(f));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (auto& v : p.data) v = static_cast<float>(dist(rng));
  }
  model.bind(shape);
  return model;
}

void SelectorModel::bind(const ModelShape& shape) {
  const auto expected = manifest(shape);
  if (expected.size() != params_.size())
    throw DimensionError("parameter count " + std::to_string(params_.size()) + " does not match model shape");
  for (std::size_t i = 0; i < expected.size(); ++i) {
    if (params_[i].name != expected[i].first || params_[i].shape != expected[i].second ||
        params_[i].data.size() != product(expected[i].second))
      throw DimensionError("parameter '" + params_[i].name + "' does not match the expected manifest");
  }
  shape_ = shape;
  auto idx = [&](std::string_view n) {
    for (std::size_t i = 0; i < params_.size(); ++i)
      if (params_[i].name == n) return i;
    return params_.size();
  };
  layout_ = Layout{};
  layout_.encoder_begin = 0;
  layout_.cls_w = idx("cls.w");
  layout_.encoder_end = layout_.cls_w;
  layout_.cls_b = idx("cls.b");
  if (shape.has_projections()) {
    layout_.pt_w1 = idx("proj_t.w1");
    layout_.pt_b1 = idx("proj_t.b1");
    layout_.pt_w2 = idx("proj_t.w2");
    layout_.pt_b2 = idx("proj_t.b2");
    layout_.pk_w1 = idx("proj_k.w1");
    layout_.pk_b1 = idx("proj_k.b1");
    layout_.pk_w2 = idx("proj_k.w2");
    layout_.pk_b2 = idx("proj_k.b2");
  }
}

Param& SelectorModel::param(std::string_view name) {
  for (auto& p : params_)
    if (p.name == name) return p;
  throw LookupError("no parameter named '" + std::string(name) + "'");
}

const Param& SelectorModel::param(std::string_view name) const {
  return const_cast<SelectorModel*>(this)->param(name);
}

std::size_t SelectorModel::parameter_count() const noexcept {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.data.size();
  return n;
}

// --- gradients --------------------------------------------------------------

Gradients::Gradients(const SelectorModel& model) {
  groups_.reserve(model.params().size());
  for (const auto& p : model.params()) groups_.emplace_back(p.data.size(), 0.0);
}

void Gradients::zero() {
  for (auto& g : groups_) std::fill(g.begin(), g.end(), 0.0);
}

void Gradients::scale(double factor) {
  for (auto& g : groups_)
    for (auto& v : g) v *= factor;
}

double Gradients::global_norm() const {
  double s = 0.0;
  for (const auto& g : groups_)
    for (double v : g) s += v * v;
  return std::sqrt(s);
}

bool Gradients::finite() const {
  for (const auto& g : groups_)
    for (double v : g)
      if (!std::isfinite(v)) return false;
  return true;
}

// --- dense helpers ----------------------------------------------------------

namespace {

// y = W x + b with W stored row-major [out][in].
void dense(const Param& w, const Param& b, std::span<const double> x, std::vector<double>& y) {
  const std::size_t out = w.shape[0];
  const std::size_t in = w.shape[1];
  if (x.size() != in) throw DimensionError(w.name + ": expected input of size " + std::to_string(in));
  y.assign(out, 0.0);
  for (std::size_t o = 0; o < out; ++o) {
    const float* row = w.data.data() + o * in;
    double acc = b.data[o];
    for (std::size_t i = 0; i < in; ++i) acc += static_cast<double>(row[i]) * x[i];
    y[o] = acc;
  }
}

void relu(std::vector<double>& v) {
  for (auto& x : v) x = x > 0.0 ? x : 0.0;
}

// Accumulates dW += dy x^T, db += dy and returns dx = W^T dy.
std::vector<double> dense_backward(const Param& w, std::span<const double> x, std::span<const double> dy,
                                   std::vector<double>& dw, std::vector<double>& db) {
  const std::size_t out = w.shape[0];
  const std::size_t in = w.shape[1];
  std::vector<double> dx(in, 0.0);
  for (std::size_t o = 0; o < out; ++o) {
    const double g = dy[o];
    if (g == 0.0) continue;
    db[o] += g;
    double* dwrow = dw.data() + o * in;
    const float* wrow = w.data.data() + o * in;
    for (std::size_t i = 0; i < in; ++i) {
      dwrow[i] += g * x[i];
      dx[i] += g * static_cast<double>(wrow[i]);
    }
  }
  return dx;
}

void mask_relu(std::vector<double>& grad, std::span<const double> activation) {
  for (std::size_t i = 0; i < grad.size(); ++i)
    if (!(activation[i] > 0.0)) grad[i] = 0.0;
}

// 'same' zero-padded 1-D convolution; w is [out][in][k], x is [in][T].
void conv1d(const Param& w, const Param& b, std::span<const double> x, std::size_t steps, std::vector<double>& y) {
  const std::size_t out = w.shape[0];
  const std::size_t in = w.shape[1];
  const std::size_t k = w.shape[2];
  const auto pad = static_cast<std::ptrdiff_t>(k / 2);
  y.assign(out * steps, 0.0);
  for (std::size_t o = 0; o < out; ++o) {
    double* yrow = y.data() + o * steps;
    std::fill(yrow, yrow + steps, static_cast<double>(b.data[o]));
    for (std::size_t c = 0; c < in; ++c) {
      const double* xrow = x.data() + c * steps;
      const float* wk = w.data.data() + (o * in + c) * k;
      for (std::size_t j = 0; j < k; ++j) {
        const double wv = wk[j];
        const std::ptrdiff_t shift = static_cast<std::ptrdiff_t>(j) - pad;
        const std::size_t t0 = shift < 0 ? static_cast<std::size_t>(-shift) : 0;
        const std::size_t t1 = shift > 0 ? steps - static_cast<std::size_t>(shift) : steps;
        for (std::size_t t = t0; t < t1; ++t) yrow[t] += wv * xrow[static_cast<std::ptrdiff_t>(t) + shift];
      }
    }
  }
}

std::vector<double> conv1d_backward(const Param& w, std::span<const double> x, std::size_t steps,
                                    std::span<const double> dy, std::vector<double>& dw, std::vector<double>& db) {
  const std::size_t out = w.shape[0];
  const std::size_t in = w.shape[1];
  const std::size_t k = w.shape[2];
  const auto pad = static_cast<std::ptrdiff_t>(k / 2);
  std::vector<double> dx(in * steps, 0.0);
  for (std::size_t o = 0; o < out; ++o) {
    const double* dyrow = dy.data() + o * steps;
    double bsum = 0.0;
    for (std::size_t t = 0; t < steps; ++t) bsum += dyrow[t];
    db[o] += bsum;
    for (std::size_t c = 0; c < in; ++c) {
      const double* xrow = x.data() + c * steps;
      double* dxrow = dx.data() + c * steps;
      const float* wk = w.data.data() + (o * in + c) * k;
      double* dwk = dw.data() + (o * in + c) * k;
      for (std::size_t j = 0; j < k; ++j) {
        const double wv = wk[j];
        const std::ptrdiff_t shift = static_cast<std::ptrdiff_t>(j) - pad;
        const std::size_t t0 = shift < 0 ? static_cast<std::size_t>(-shift) : 0;
        const std::size_t t1 = shift > 0 ? steps - static_cast<std::size_t>(shift) : steps;
        double acc = 0.0;
        for (std::size_t t = t0; t < t1; ++t) {
          const auto src = static_cast<std::size_t>(static_cast<std::ptrdiff_t>(t) + shift);
          acc += dyrow[t] * xrow[src];
          dxrow[src] += dyrow[t] * wv;
        }
        dwk[j] += acc;
      }
    }
  }
  return dx;
}

}  // namespace

std::vector<double> softmax(std::span<const double> logits) {
  std::vector<double> p(logits.size());
  if (logits.empty()) return p;
  const double mx = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    p[i] = std::exp(logits[i] - mx);
    sum += p[i];
  }
  for (auto& v : p) v /= sum;
  return p;
}

ForwardResult forward(const SelectorModel& model, std::span<const double> window) {
  const auto& shape = model.shape();
  if (window.size() != shape.window)
    throw DimensionError("window length " + std::to_string(window.size()) + " does not match model L=" +
                         std::to_string(shape.window));
  const auto& ps = model.params();
  ForwardResult fr;
  fr.input.assign(window.begin(), window.end());
  if (shape.encoder == EncoderKind::Mlp) {
    std::vector<double> h1, h2;
    dense(ps[0], ps[1], fr.input, h1);
    relu(h1);
    dense(ps[2], ps[3], h1, h2);
    relu(h2);
    fr.activations.push_back(std::move(h1));
    fr.activations.push_back(std::move(h2));
    fr.features = fr.activations.back();
  } else {
    const std::size_t steps = shape.window;
    std::span<const double> cur(fr.input);
    for (std::size_t l = 0; l < 3; ++l) {
      std::vector<double> y;
      conv1d(ps[2 * l], ps[2 * l + 1], cur, steps, y);
      relu(y);
      fr.activations.push_back(std::move(y));
      cur = fr.activations.back();
    }
    const std::size_t channels = kConvChannels[2];
    fr.features.assign(channels, 0.0);
    const auto& last = fr.activations.back();
    for (std::size_t c = 0; c < channels; ++c) {
      double s = 0.0;
      for (std::size_t t = 0; t < steps; ++t) s += last[c * steps + t];
      fr.features[c] = s / static_cast<double>(steps);
    }
  }
  const auto& lay = model.layout();
  dense(ps[lay.cls_w], ps[lay.cls_b], fr.features, fr.logits);
  fr.probs = softmax(fr.logits);
  return fr;
}

void backward(const SelectorModel& model, const ForwardResult& fr, std::span<const double> dlogits,
              std::span<const double> dfeatures, Gradients& grads) {
  const auto& shape = model.shape();
  const auto& ps = model.params();
  const auto& lay = model.layout();
  if (dlogits.size() != shape.classes) throw DimensionError("dlogits has wrong size");
  if (!dfeatures.empty() && dfeatures.size() != fr.features.size()) throw DimensionError("dfeatures has wrong size");

  std::vector<double> dz = dense_backward(ps[lay.cls_w], fr.features, dlogits, grads[lay.cls_w], grads[lay.cls_b]);
  for (std::size_t i = 0; i < dfeatures.size(); ++i) dz[i] += dfeatures[i];

  if (shape.encoder == EncoderKind::Mlp) {
    mask_relu(dz, fr.activations[1]);
    auto dh1 = dense_backward(ps[2], fr.activations[0], dz, grads[2], grads[3]);
    mask_relu(dh1, fr.activations[0]);
    dense_backward(ps[0], fr.input, dh1, grads[0], grads[1]);
  } else {
    const std::size_t steps = shape.window;
    const std::size_t channels = kConvChannels[2];
    std::vector<double> dy(channels * steps);
    for (std::size_t c = 0; c < channels; ++c)
      for (std::size_t t = 0; t < steps; ++t) dy[c * steps + t] = dz[c] / static_cast<double>(steps);
    for (std::size_t l = 3; l-- > 0;) {
      mask_relu(dy, fr.activations[l]);
      std::span<const double> input = l == 0 ? std::span<const double>(fr.input) : fr.activations[l - 1];
      dy = conv1d_backward(ps[2 * l], input, steps, dy, grads[2 * l], grads[2 * l + 1]);
    }
  }
  if (!grads.finite()) throw NumericFault("non-finite gradient in backward pass");
}

ProjectionResult project(const SelectorModel& model, Head head, std::span<const double> input) {
  if (!model.shape().has_projections()) throw ConfigError("model has no projection heads");
  const auto& ps = model.params();
  const auto& lay = model.layout();
  const bool series = head == Head::Series;
  ProjectionResult pr;
  pr.input.assign(input.begin(), input.end());
  dense(ps[series ? lay.pt_w1 : lay.pk_w1], ps[series ? lay.pt_b1 : lay.pk_b1], pr.input, pr.hidden);
  relu(pr.hidden);
  dense(ps[series ? lay.pt_w2 : lay.pk_w2], ps[series ? lay.pt_b2 : lay.pk_b2], pr.hidden, pr.output);
  return pr;
}

std::vector<double> backward_projection(const SelectorModel& model, Head head, const ProjectionResult& pr,
                                        std::span<const double> dout, Gradients& grads) {
  const auto& ps = model.params();
  const auto& lay = model.layout();
  const bool series = head == Head::Series;
  const std::size_t w1 = series ? lay.pt_w1 : lay.pk_w1;
  const std::size_t b1 = series ? lay.pt_b1 : lay.pk_b1;
  const std::size_t w2 = series ? lay.pt_w2 : lay.pk_w2;
  const std::size_t b2 = series ? lay.pt_b2 : lay.pk_b2;
  auto dh = dense_backward(ps[w2], pr.hidden, dout, grads[w2], grads[b2]);
  mask_relu(dh, pr.hidden);
  return dense_backward(ps[w1], pr.input, dh, grads[w1], grads[b1]);
}

double clip_global_norm(Gradients& grads, double bound) {
  const double norm = grads.global_norm();
  if (bound > 0.0 && norm > bound) grads.scale(bound / norm);
  return norm;
}

void sgd_step(SelectorModel& model, Gradients& grads, const SgdOptions& options, OptimizerState* state) {
  if (!(options.learning_rate > 0.0)) throw ConfigError("learning rate must be > 0");
  if (!grads.finite()) throw NumericFault("non-finite gradient before SGD step");
  clip_global_norm(grads, options.clip_bound);
  auto& ps = model.params();
  const bool use_momentum = options.momentum > 0.0 && state != nullptr;
  if (use_momentum && state->velocity.size() != ps.size()) {
    state->velocity.clear();
    for (const auto& p : ps) state->velocity.emplace_back(p.data.size(), 0.0);
  }
  for (std::size_t g = 0; g < ps.size(); ++g) {
    auto& data = ps[g].data;
    const auto& grad = grads[g];
    for (std::size_t i = 0; i < data.size(); ++i) {
      double step = grad[i];
      if (use_momentum) {
        double& v = state->velocity[g][i];
        v = options.momentum * v + grad[i];
        step = v;
      }
      data[i] = static_cast<float>(static_cast<double>(data[i]) - options.learning_rate * step);
    }
  }
}

// --- persistence ------------------------------------------------------------

namespace {

constexpr std::array<char, 4> kMagic = {'K', 'D', 'S', 'L'};

class Writer {
 public:
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
  }
  void bytes(const void* p, std::size_t n) {
    const auto* c = static_cast<const char*>(p);
    buf_.insert(buf_.end(), c, c + n);
  }
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    bytes(s.data(), s.size());
  }
  void f32(float f) { u32(std::bit_cast<std::uint32_t>(f)); }
  std::vector<char>& buffer() { return buf_; }

 private:
  std::vector<char> buf_;
};

class Reader {
 public:
  explicit Reader(std::span<const char> data) : data_(data) {}
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
    pos_ += 4;
    return v;
  }
  std::string str(std::size_t limit) {
    const auto n = u32();
    if (n > limit) throw LoadError("model file: string field too long (corrupt file?)");
    need(n);
    std::string s(data_.data() + pos_, n);
    pos_ += n;
    return s;
  }
  float f32() { return std::bit_cast<float>(u32()); }
  std::size_t remaining() const { return data_.size() - pos_; }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > data_.size()) throw LoadError("model file truncated");
  }
  std::span<const char> data_;
  std::size_t pos_ = 0;
};

std::uint32_t fnv1a(std::span<const char> data) {
  std::uint32_t h = 2166136261u;
  for (char c : data) {
    h ^= static_cast<unsigned char>(c);
    h *= 16777619u;
  }
  return h;
}

}  // namespace

void save_model(const SelectorModel& model, std::ostream& out) {
  Writer w;
  w.bytes(kMagic.data(), kMagic.size());
  w.u32(SelectorModel::kFormatVersion);
  w.str(model.config_json);
  const auto& s = model.shape();
  w.u32(static_cast<std::uint32_t>(s.encoder));
  w.u32(static_cast<std::uint32_t>(s.window));
  w.u32(static_cast<std::uint32_t>(s.classes));
  w.u32(static_cast<std::uint32_t>(s.text_dim));
  w.u32(static_cast<std::uint32_t>(s.proj_dim));
  w.u32(static_cast<std::uint32_t>(s.proj_hidden));
  w.u32(static_cast<std::uint32_t>(model.params().size()));
  for (const auto& p : model.params()) {
    w.str(p.name);
    w.u32(static_cast<std::uint32_t>(p.shape.size()));
    for (auto d : p.shape) w.u32(static_cast<std::uint32_t>(d));
  }
  for (const auto& p : model.params())
    for (float f : p.data) w.f32(f);
  const auto checksum = fnv1a(w.buffer());
  w.u32(checksum);
  out.write(w.buffer().data(), static_cast<std::streamsize>(w.buffer().size()));
  if (!out) throw Error("failed to write model");
}

void save_model(const SelectorModel& model, const std::filesystem::path& path) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write model file " + tmp.string());
    save_model(model, out);
  }
  std::filesystem::rename(tmp, path);
}

SelectorModel load_model(std::istream& in) {
  std::vector<char> data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (data.size() < 8) throw LoadError("model file truncated");
  if (!std::equal(kMagic.begin(), kMagic.end(), data.begin())) throw LoadError("not a KDSL model file (bad magic)");
  Reader r(std::span<const char>(data).subspan(4));
  const auto version = r.u32();
  if (version != SelectorModel::kFormatVersion)
    throw LoadError("unsupported model format version " + std::to_string(version) + " (expected " +
                    std::to_string(SelectorModel::kFormatVersion) + ")");
  if (data.size() < 12) throw LoadError("model file truncated");
  const auto stored = static_cast<std::uint32_t>(static_cast<unsigned char>(data[data.size() - 4])) |
                      static_cast<std::uint32_t>(static_cast<unsigned char>(data[data.size() - 3])) << 8 |
                      static_cast<std::uint32_t>(static_cast<unsigned char>(data[data.size() - 2])) << 16 |
                      static_cast<std::uint32_t>(static_cast<unsigned char>(data[data.size() - 1])) << 24;
  SelectorModel model;
  model.config_json = r.str(data.size());
  ModelShape shape;
  const auto enc = r.u32();
  if (enc > 1) throw LoadError("unknown encoder kind in model file");
  shape.encoder = static_cast<EncoderKind>(enc);
  shape.window = r.u32();
  shape.classes = r.u32();
  shape.text_dim = r.u32();
  shape.proj_dim = r.u32();
  shape.proj_hidden = r.u32();
  const auto count = r.u32();
  if (count > 64) throw LoadError("model file: implausible parameter count");
  std::size_t total = 0;
  for (std::uint32_t i = 0; i < count; ++i) {
    Param p;
    p.name = r.str(256);
    const auto ndim = r.u32();
    if (ndim > 8) throw LoadError("model file: implausible tensor rank");
    for (std::uint32_t d = 0; d < ndim; ++d) p.shape.push_back(r.u32());
    const auto n = product(p.shape);
    total += n;
    if (total * 4 > data.size()) throw LoadError("model file truncated");
    p.data.resize(n);
    model.params().push_back(std::move(p));
  }
  for (auto& p : model.params())
    for (auto& f : p.data) f = r.f32();
  if (r.remaining() != 4) throw LoadError("model file has trailing or missing bytes");
  if (fnv1a(std::span<const char>(data).first(data.size() - 4)) != stored)
    throw LoadError("model file checksum mismatch (corrupt file)");
  try {
    model.bind(shape);
  } catch (const DimensionError& e) {
    throw LoadError(std::string("model file manifest invalid: ") + e.what());
  }
  return model;
}

SelectorModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError("cannot open model file " + path.string());
  return load_model(in);
}

}  // namespace kdsel
