#pragma once

// The trainable selector: encoder + linear classifier, plus the two
// projection heads used for metadata alignment. Parameters are stored as f32
// (the on-disk precision) and all arithmetic runs in double.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace kdsel {

enum class EncoderKind : std::uint32_t { Mlp = 0, TemporalConv = 1 };

std::string_view encoder_name(EncoderKind kind);
EncoderKind encoder_from_name(std::string_view name);

struct ModelShape {
  EncoderKind encoder = EncoderKind::Mlp;
  std::size_t window = 64;    // L
  std::size_t classes = 6;    // m
  std::size_t text_dim = 0;   // d_K; 0 disables the projection heads
  std::size_t proj_dim = 64;  // H
  std::size_t proj_hidden = 256;

  bool has_projections() const noexcept { return text_dim > 0 && proj_dim > 0; }
  std::size_t feature_dim() const noexcept;
  bool operator==(const ModelShape&) const = default;
};

// Layer sizes of the two encoders.
inline constexpr std::size_t kMlpHidden1 = 256;
inline constexpr std::size_t kMlpHidden2 = 128;
inline constexpr std::size_t kConvKernel = 7;
inline constexpr std::size_t kConvChannels[3] = {32, 64, 64};

struct Param {
  std::string name;
  std::vector<std::size_t> shape;
  std::vector<float> data;
};

class SelectorModel {
 public:
  static constexpr std::uint32_t kFormatVersion = 1;

  SelectorModel() = default;
  // Fan-in uniform weights, zero biases.
  static SelectorModel create(const ModelShape& shape, std::uint64_t seed);

  const ModelShape& shape() const noexcept { return shape_; }
  std::vector<Param>& params() noexcept { return params_; }
  const std::vector<Param>& params() const noexcept { return params_; }
  Param& param(std::string_view name);
  const Param& param(std::string_view name) const;
  std::size_t parameter_count() const noexcept;

  // Free-form JSON echo of the run configuration, persisted with the model.
  std::string config_json;

  // Indices into params() for the fixed layer layout.
  struct Layout {
    std::size_t encoder_begin = 0, encoder_end = 0;
    std::size_t cls_w = 0, cls_b = 0;
    std::size_t pt_w1 = 0, pt_b1 = 0, pt_w2 = 0, pt_b2 = 0;
    std::size_t pk_w1 = 0, pk_b1 = 0, pk_w2 = 0, pk_b2 = 0;
  };
  const Layout& layout() const noexcept { return layout_; }

  // Rebuilds the layout from params() after loading; validates shapes.
  void bind(const ModelShape& shape);

 private:
  ModelShape shape_;
  std::vector<Param> params_;
  Layout layout_;
};

class Gradients {
 public:
  Gradients() = default;
  explicit Gradients(const SelectorModel& model);

  std::vector<std::vector<double>>& groups() noexcept { return groups_; }
  const std::vector<std::vector<double>>& groups() const noexcept { return groups_; }
  std::vector<double>& operator[](std::size_t i) { return groups_[i]; }
  const std::vector<double>& operator[](std::size_t i) const { return groups_[i]; }

  void zero();
  void scale(double factor);
  double global_norm() const;
  bool finite() const;

 private:
  std::vector<std::vector<double>> groups_;
};

struct ForwardResult {
  std::vector<double> input;
  // Post-ReLU activations, one entry per encoder layer. For the convolutional
  // encoder each entry is channel-major [channel][time].
  std::vector<std::vector<double>> activations;
  std::vector<double> features;  // z_T
  std::vector<double> logits;
  std::vector<double> probs;
};

ForwardResult forward(const SelectorModel& model, std::span<const double> window);

// Accumulates parameter gradients given upstream gradients on the logits and,
// optionally, extra gradient on the features (from the series projection).
void backward(const SelectorModel& model, const ForwardResult& fr, std::span<const double> dlogits,
              std::span<const double> dfeatures, Gradients& grads);

enum class Head { Series, Text };

struct ProjectionResult {
  std::vector<double> input;
  std::vector<double> hidden;  // post-ReLU
  std::vector<double> output;
};

ProjectionResult project(const SelectorModel& model, Head head, std::span<const double> input);
// Returns the gradient with respect to the projection input.
std::vector<double> backward_projection(const SelectorModel& model, Head head, const ProjectionResult& pr,
                                        std::span<const double> dout, Gradients& grads);

std::vector<double> softmax(std::span<const double> logits);

struct SgdOptions {
  double learning_rate = 0.01;
  double clip_bound = 1.0;  // <= 0 disables clipping
  double momentum = 0.0;
};

struct OptimizerState {
  std::vector<std::vector<double>> velocity;
};

// Scales grads in place so their global norm is at most `bound`; returns the
// norm before clipping.
double clip_global_norm(Gradients& grads, double bound);

// Global-norm clip, then theta <- theta - lr * g (with optional momentum).
void sgd_step(SelectorModel& model, Gradients& grads, const SgdOptions& options, OptimizerState* state = nullptr);

void save_model(const SelectorModel& model, std::ostream& out);
void save_model(const SelectorModel& model, const std::filesystem::path& path);
SelectorModel load_model(std::istream& in);
SelectorModel load_model(const std::filesystem::path& path);

}  // namespace kdsel
