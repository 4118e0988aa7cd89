#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "nefnet/angular.hpp"
#include "nefnet/autodiff.hpp"
#include "nefnet/ecg_data.hpp"
#include "nefnet/fieldops.hpp"

namespace nef {

/// Architecture hyper-parameters. Each encoder block halves the time axis
/// (stride 2); the decoder mirrors it with transposed convolutions.
struct ModelConfig {
  int signal_length = kCanonicalCycleLength;
  std::vector<int> encoder_channels = {32, 64, 96, 128};
  std::vector<int> encoder_kernels = {7, 5, 5, 3};
  int basic_channels = 64;
  int deflection_channels = 32;
  int bins = 8;
  int angle_hidden = 64;
  std::vector<int> decoder_channels = {64, 32, 16, 8};
  std::uint64_t seed = 0;
  bool use_basic_branch = true;

  int downsample() const { return 1 << encoder_channels.size(); }
  int feature_length() const { return signal_length / downsample(); }
  int feature_channels() const { return encoder_channels.back(); }
  int gate_channels() const {
    return deflection_channels + (use_basic_branch ? basic_channels : 0);
  }

  /// Throws kConfiguration on inconsistent values.
  void validate() const;

  /// c = 8, T_x = 64; used for gradient checks and fast tests.
  static ModelConfig small();

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

struct ParamBlock {
  std::string name;
  std::vector<int> shape;
  std::vector<double> values;

  int rows() const { return shape.front(); }
  int cols() const { return static_cast<int>(values.size()) / shape.front(); }
};

/// Named parameter blocks in a fixed order.
class Parameters {
 public:
  void add(std::string name, std::vector<int> shape, std::vector<double> values);

  const ParamBlock& at(std::string_view name) const;
  ParamBlock& at(std::string_view name);
  std::optional<std::size_t> index_of(std::string_view name) const;

  std::span<const ParamBlock> blocks() const { return blocks_; }
  std::span<ParamBlock> blocks() { return blocks_; }
  std::size_t size() const { return blocks_.size(); }
  std::size_t scalar_count() const;

  friend bool operator==(const Parameters& a, const Parameters& b);

 private:
  std::vector<ParamBlock> blocks_;
  std::map<std::string, std::size_t, std::less<>> index_;
};

/// Fan-in scaled uniform initialization, deterministic in config.seed.
Parameters initialize_parameters(const ModelConfig& config);

/// Throws kConfiguration when names or shapes disagree with the config.
void validate_parameters(const ModelConfig& config, const Parameters& params);

/// One gradient vector per parameter block.
using Gradients = std::vector<std::vector<double>>;
Gradients zero_gradients(const Parameters& params);

/// Electrocardio field representation: an optional basic representation
/// (channels x feature_length) and six deflection representations
/// (channels x bins), plus the deflection lengths in samples.
struct ElectrocardioField {
  std::optional<RowMatrix> basic;
  std::array<RowMatrix, kNumDeflections> deflections;
  DeflectionLengths lengths{};
};

/// Elementwise mean over views; lengths must agree.
ElectrocardioField fuse_views(std::span<const ElectrocardioField> fields);

namespace graph {

/// Graph leaves for every parameter block.
class ParamBinding {
 public:
  ParamBinding(const Parameters& params, bool trainable);

  const ad::Var& operator[](std::string_view name) const;
  bool trainable() const { return trainable_; }

  /// grads[i] += d(root)/d(block i) after ad::backward(root).
  void accumulate_gradients(Gradients& grads) const;

 private:
  std::map<std::string, std::size_t, std::less<>> index_;
  std::vector<ad::Var> vars_;
  bool trainable_;
};

struct FieldVars {
  std::optional<ad::Var> basic;
  std::array<ad::Var, kNumDeflections> deflections;
  DeflectionLengths lengths{};
};

/// Feature extraction f, angle gating by g(A(v)), projection heads, ROIAlign.
FieldVars encode(const ModelConfig& config, const ParamBinding& params,
                 std::span<const double> samples, const Demarcations& demarcations,
                 const AngularCode& code);

/// Mean of the per-view fields (same deflection lengths required).
FieldVars fuse(std::span<const FieldVars> fields);

/// Per-deflection convolutions, reverse ROIAlign, basic branch, query gating,
/// transposed-convolution upsampling and a sigmoid head. Returns 1 x T_x.
ad::Var decode(const ModelConfig& config, const ParamBinding& params, const FieldVars& field,
               const AngularCode& code);

FieldVars detach(const FieldVars& field);
FieldVars constant(const ElectrocardioField& field);
ElectrocardioField values(const FieldVars& field);

}  // namespace graph

/// Immutable model: configuration plus one parameter snapshot. All methods
/// are const and safe to call concurrently.
class NefNet {
 public:
  NefNet(ModelConfig config, Parameters params);

  static NefNet initialize(const ModelConfig& config);

  const ModelConfig& config() const { return config_; }
  const Parameters& parameters() const { return params_; }

  ElectrocardioField encode_view(const CardiacCycle& cycle, Viewpoint view,
                                 Perturbation* perturbation = nullptr) const;
  ElectrocardioField encode_view(std::span<const double> samples, const Demarcations& demarcations,
                                 Viewpoint view, Perturbation* perturbation = nullptr) const;

  /// Encodes every view (no perturbation) and fuses.
  ElectrocardioField encode(const MultiViewCycle& cycle) const;
  ElectrocardioField encode(const MultiViewCycle& cycle, std::span<const std::string> view_names) const;

  std::vector<double> decode_view(const ElectrocardioField& field, Viewpoint query,
                                  Perturbation* perturbation = nullptr) const;

  std::vector<std::vector<double>> panorama(const MultiViewCycle& views,
                                            std::span<const Viewpoint> queries) const;

 private:
  ModelConfig config_;
  Parameters params_;
  std::shared_ptr<const graph::ParamBinding> frozen_;
};

}  // namespace nef
