#include "nefnet/nefnet.hpp"

#include <cmath>
#include <algorithm>
#include <random>
#include <string>
#include <utility>

#include "nefnet/errors.hpp"

namespace nef {

namespace {

constexpr int kHeadKernel = 3;
constexpr int kUpsampleKernel = 4;

enum class Init { kUniform, kOnes, kZeros, kGateBias };

struct BlockSpec {
  std::string name;
  std::vector<int> shape;
  int fan_in = 1;
  Init init = Init::kUniform;
};

std::string indexed(std::string_view prefix, int i, std::string_view suffix) {
  return std::string(prefix) + std::to_string(i) + std::string(suffix);
}

void add_conv(std::vector<BlockSpec>& specs, const std::string& name, int out_c, int in_c, int k) {
  specs.push_back({name + ".weight", {out_c, in_c, k}, in_c * k, Init::kUniform});
  specs.push_back({name + ".bias", {out_c}, in_c * k, Init::kUniform});
}

void add_norm(std::vector<BlockSpec>& specs, const std::string& name, int channels) {
  specs.push_back({name + ".gain", {channels}, 1, Init::kOnes});
  specs.push_back({name + ".bias", {channels}, 1, Init::kZeros});
}

void add_angle_mlp(std::vector<BlockSpec>& specs, const std::string& name, int hidden, int out) {
  specs.push_back({name + ".fc0.weight", {hidden, kAngularCodeSize}, kAngularCodeSize, Init::kUniform});
  specs.push_back({name + ".fc0.bias", {hidden}, kAngularCodeSize, Init::kUniform});
  specs.push_back({name + ".fc1.weight", {out, hidden}, hidden, Init::kUniform});
  specs.push_back({name + ".fc1.bias", {out}, hidden, Init::kGateBias});
}

std::vector<BlockSpec> parameter_layout(const ModelConfig& cfg) {
  std::vector<BlockSpec> specs;
  int in_c = 1;
  for (std::size_t i = 0; i < cfg.encoder_channels.size(); ++i) {
    const int out_c = cfg.encoder_channels[i];
    add_conv(specs, indexed("enc.conv", static_cast<int>(i), ""), out_c, in_c, cfg.encoder_kernels[i]);
    add_norm(specs, indexed("enc.norm", static_cast<int>(i), ""), out_c);
    in_c = out_c;
  }
  add_angle_mlp(specs, "enc.angle", cfg.angle_hidden, cfg.feature_channels());
  if (cfg.use_basic_branch) add_conv(specs, "enc.head_basic", cfg.basic_channels, in_c, kHeadKernel);
  add_conv(specs, "enc.head_deflection", cfg.deflection_channels, in_c, kHeadKernel);

  for (int i = 1; i <= kNumDeflections; ++i) {
    add_conv(specs, indexed("dec.deflection", i, ""), cfg.deflection_channels,
             cfg.deflection_channels, kHeadKernel);
  }
  if (cfg.use_basic_branch) {
    add_conv(specs, "dec.basic", cfg.basic_channels, cfg.basic_channels, kHeadKernel);
  }
  add_angle_mlp(specs, "dec.angle", cfg.angle_hidden, cfg.gate_channels());
  in_c = cfg.gate_channels();
  for (std::size_t j = 0; j < cfg.decoder_channels.size(); ++j) {
    const int out_c = cfg.decoder_channels[j];
    const int fan_in = in_c * kUpsampleKernel / 2;
    const std::string name = indexed("dec.up", static_cast<int>(j), "");
    specs.push_back({name + ".weight", {in_c, out_c, kUpsampleKernel}, fan_in, Init::kUniform});
    specs.push_back({name + ".bias", {out_c}, fan_in, Init::kUniform});
    add_norm(specs, indexed("dec.up_norm", static_cast<int>(j), ""), out_c);
    in_c = out_c;
  }
  add_conv(specs, "dec.out", 1, in_c, kHeadKernel);
  return specs;
}

std::size_t element_count(const std::vector<int>& shape) {
  std::size_t n = 1;
  for (int d : shape) n *= static_cast<std::size_t>(d);
  return n;
}

void require_finite(const ad::Var& v, std::string_view stage) {
  for (double x : v.value()) {
    if (!std::isfinite(x)) {
      throw Error(ErrorKind::kNumericFailure,
                  "non-finite activations at stage '" + std::string(stage) + "'");
    }
  }
}

ad::Var angle_mlp(const graph::ParamBinding& p, const std::string& name, const AngularCode& code) {
  const ad::Var a = ad::constant(std::vector<double>(code.begin(), code.end()), kAngularCodeSize, 1);
  const ad::Var hidden = ad::silu(ad::linear(a, p[name + ".fc0.weight"], p[name + ".fc0.bias"]));
  return ad::linear(hidden, p[name + ".fc1.weight"], p[name + ".fc1.bias"]);
}

ad::Var conv(const graph::ParamBinding& p, const std::string& name, const ad::Var& x,
             ad::ConvGeometry g) {
  return ad::conv1d(x, p[name + ".weight"], p[name + ".bias"], g);
}

}  // namespace

// ---------------------------------------------------------------------------
// ModelConfig

void ModelConfig::validate() const {
  auto fail = [](const std::string& what) { throw Error(ErrorKind::kConfiguration, what); };
  if (encoder_channels.empty()) fail("at least one encoder block is required");
  if (encoder_kernels.size() != encoder_channels.size()) {
    fail("encoder_kernels must have one entry per encoder block");
  }
  if (decoder_channels.size() != encoder_channels.size()) {
    fail("decoder_channels must mirror the encoder depth");
  }
  for (int k : encoder_kernels) {
    if (k < 1 || k % 2 == 0) fail("encoder kernels must be odd and positive");
  }
  for (int c : encoder_channels) if (c < 1) fail("channel counts must be positive");
  for (int c : decoder_channels) if (c < 1) fail("channel counts must be positive");
  if (signal_length < kNumDeflections || signal_length % downsample() != 0) {
    fail("signal_length must be divisible by the downsample factor " + std::to_string(downsample()));
  }
  if (bins < 1) fail("bins must be >= 1");
  if (deflection_channels < 1 || basic_channels < 1 || angle_hidden < 1) {
    fail("representation widths must be positive");
  }
}

ModelConfig ModelConfig::small() {
  ModelConfig cfg;
  cfg.signal_length = 64;
  cfg.encoder_channels = {4, 8};
  cfg.encoder_kernels = {5, 3};
  cfg.basic_channels = 4;
  cfg.deflection_channels = 4;
  cfg.bins = 4;
  cfg.angle_hidden = 8;
  cfg.decoder_channels = {6, 4};
  return cfg;
}

// ---------------------------------------------------------------------------
// Parameters

void Parameters::add(std::string name, std::vector<int> shape, std::vector<double> values) {
  if (shape.empty() || element_count(shape) != values.size()) {
    throw Error(ErrorKind::kShapeMismatch, "parameter '" + name + "' shape does not match values");
  }
  if (index_.count(name) != 0) {
    throw Error(ErrorKind::kConfiguration, "duplicate parameter '" + name + "'");
  }
  index_.emplace(name, blocks_.size());
  blocks_.push_back({std::move(name), std::move(shape), std::move(values)});
}

const ParamBlock& Parameters::at(std::string_view name) const {
  const auto idx = index_of(name);
  if (!idx) throw Error(ErrorKind::kConfiguration, "unknown parameter '" + std::string(name) + "'");
  return blocks_[*idx];
}

ParamBlock& Parameters::at(std::string_view name) {
  return const_cast<ParamBlock&>(std::as_const(*this).at(name));
}

std::optional<std::size_t> Parameters::index_of(std::string_view name) const {
  const auto it = index_.find(name);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::size_t Parameters::scalar_count() const {
  std::size_t n = 0;
  for (const auto& b : blocks_) n += b.values.size();
  return n;
}

bool operator==(const Parameters& a, const Parameters& b) {
  if (a.blocks_.size() != b.blocks_.size()) return false;
  for (std::size_t i = 0; i < a.blocks_.size(); ++i) {
    const auto& x = a.blocks_[i];
    const auto& y = b.blocks_[i];
    if (x.name != y.name || x.shape != y.shape || x.values != y.values) return false;
  }
  return true;
}

Parameters initialize_parameters(const ModelConfig& config) {
  config.validate();
  std::mt19937_64 rng(config.seed);
  Parameters params;
  for (const BlockSpec& spec : parameter_layout(config)) {
    std::vector<double> values(element_count(spec.shape));
    const double bound = 1.0 / std::sqrt(static_cast<double>(spec.fan_in));
    std::uniform_real_distribution<double> uniform(-bound, bound);
    switch (spec.init) {
      case Init::kUniform:
        for (double& v : values) v = uniform(rng);
        break;
      case Init::kOnes:
        std::fill(values.begin(), values.end(), 1.0);
        break;
      case Init::kZeros:
        break;
      case Init::kGateBias:
        // gates start near identity
        for (double& v : values) v = 1.0 + uniform(rng);
        break;
    }
    params.add(spec.name, spec.shape, std::move(values));
  }
  return params;
}

void validate_parameters(const ModelConfig& config, const Parameters& params) {
  config.validate();
  const auto layout = parameter_layout(config);
  if (layout.size() != params.size()) {
    throw Error(ErrorKind::kConfiguration,
                "parameter set has " + std::to_string(params.size()) + " blocks, config expects " +
                    std::to_string(layout.size()));
  }
  for (std::size_t i = 0; i < layout.size(); ++i) {
    const auto& block = params.blocks()[i];
    if (block.name != layout[i].name || block.shape != layout[i].shape) {
      throw Error(ErrorKind::kConfiguration,
                  "parameter block " + std::to_string(i) + " ('" + block.name +
                      "') does not match the config layout ('" + layout[i].name + "')");
    }
  }
}

Gradients zero_gradients(const Parameters& params) {
  Gradients grads;
  grads.reserve(params.size());
  for (const auto& b : params.blocks()) grads.emplace_back(b.values.size(), 0.0);
  return grads;
}

// ---------------------------------------------------------------------------
// Field fusion

ElectrocardioField fuse_views(std::span<const ElectrocardioField> fields) {
  if (fields.empty()) throw Error(ErrorKind::kFusion, "cannot fuse zero views");
  const ElectrocardioField& anchor = fields.front();
  for (const auto& f : fields) {
    const bool basic_ok = f.basic.has_value() == anchor.basic.has_value() &&
                          (!f.basic || (f.basic->rows() == anchor.basic->rows() &&
                                        f.basic->cols() == anchor.basic->cols()));
    bool deflections_ok = true;
    for (int i = 0; i < kNumDeflections; ++i) {
      deflections_ok = deflections_ok && f.deflections[i].rows() == anchor.deflections[i].rows() &&
                       f.deflections[i].cols() == anchor.deflections[i].cols();
    }
    if (!basic_ok || !deflections_ok || f.lengths != anchor.lengths) {
      throw Error(ErrorKind::kFusion, "fields disagree on representation shapes or deflection lengths");
    }
  }
  const double inv = 1.0 / static_cast<double>(fields.size());
  auto average = [&](auto member) {
    const RowMatrix& base = member(anchor);
    RowMatrix offset = RowMatrix::Zero(base.rows(), base.cols());
    for (const auto& f : fields) offset += member(f) - base;
    return RowMatrix(base + offset * inv);
  };
  ElectrocardioField fused;
  fused.lengths = anchor.lengths;
  if (anchor.basic) {
    fused.basic = average([](const ElectrocardioField& f) -> const RowMatrix& { return *f.basic; });
  }
  for (int i = 0; i < kNumDeflections; ++i) {
    fused.deflections[i] =
        average([i](const ElectrocardioField& f) -> const RowMatrix& { return f.deflections[i]; });
  }
  return fused;
}

// ---------------------------------------------------------------------------
// Graph builders

namespace graph {

ParamBinding::ParamBinding(const Parameters& params, bool trainable) : trainable_(trainable) {
  vars_.reserve(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    const ParamBlock& b = params.blocks()[i];
    index_.emplace(b.name, i);
    vars_.push_back(trainable ? ad::variable(b.values, b.rows(), b.cols())
                              : ad::constant(b.values, b.rows(), b.cols()));
  }
}

const ad::Var& ParamBinding::operator[](std::string_view name) const {
  const auto it = index_.find(name);
  if (it == index_.end()) {
    throw Error(ErrorKind::kConfiguration, "model has no parameter '" + std::string(name) + "'");
  }
  return vars_[it->second];
}

void ParamBinding::accumulate_gradients(Gradients& grads) const {
  if (grads.size() != vars_.size()) {
    throw Error(ErrorKind::kShapeMismatch, "gradient buffer does not match the parameter set");
  }
  for (std::size_t i = 0; i < vars_.size(); ++i) {
    const auto g = vars_[i].grad();
    if (g.empty()) continue;
    for (std::size_t k = 0; k < g.size(); ++k) grads[i][k] += g[k];
  }
}

FieldVars encode(const ModelConfig& cfg, const ParamBinding& p, std::span<const double> samples,
                 const Demarcations& demarcations, const AngularCode& code) {
  if (static_cast<int>(samples.size()) != cfg.signal_length) {
    throw Error(ErrorKind::kShapeMismatch, "encoder expects " + std::to_string(cfg.signal_length) +
                                               " samples, got " + std::to_string(samples.size()));
  }
  validate_demarcations(demarcations, cfg.signal_length);

  ad::Var h = ad::constant(std::vector<double>(samples.begin(), samples.end()), 1, cfg.signal_length);
  for (std::size_t i = 0; i < cfg.encoder_channels.size(); ++i) {
    const int k = cfg.encoder_kernels[i];
    const std::string norm = indexed("enc.norm", static_cast<int>(i), "");
    h = conv(p, indexed("enc.conv", static_cast<int>(i), ""), h, {k, 2, k / 2});
    h = ad::silu(ad::layer_norm(h, p[norm + ".gain"], p[norm + ".bias"]));
    require_finite(h, indexed("encoder.block", static_cast<int>(i), ""));
  }

  const ad::Var theta = angle_mlp(p, "enc.angle", code);
  require_finite(theta, "encoder.angle");
  const ad::Var gated = ad::scale_channels(h, theta);

  FieldVars field;
  if (cfg.use_basic_branch) {
    field.basic = conv(p, "enc.head_basic", gated, {kHeadKernel, 1, kHeadKernel / 2});
    require_finite(*field.basic, "encoder.head_basic");
  }
  const ad::Var wd = conv(p, "enc.head_deflection", gated, {kHeadKernel, 1, kHeadKernel / 2});
  require_finite(wd, "encoder.head_deflection");

  const DeflectionSpans spans = map_demarcations(demarcations, cfg.signal_length, cfg.feature_length());
  for (int i = 0; i < kNumDeflections; ++i) {
    field.deflections[i] = ad::roi_align(wd, spans.span(i), cfg.bins);
  }
  field.lengths = deflection_lengths(demarcations);
  return field;
}

FieldVars fuse(std::span<const FieldVars> fields) {
  if (fields.empty()) throw Error(ErrorKind::kFusion, "cannot fuse zero views");
  const FieldVars& anchor = fields.front();
  FieldVars fused;
  fused.lengths = anchor.lengths;
  for (const auto& f : fields) {
    if (f.lengths != anchor.lengths || f.basic.has_value() != anchor.basic.has_value()) {
      throw Error(ErrorKind::kFusion, "fields disagree on deflection lengths or branches");
    }
  }
  std::vector<ad::Var> parts;
  if (anchor.basic) {
    for (const auto& f : fields) parts.push_back(*f.basic);
    fused.basic = ad::mean(parts);
  }
  for (int i = 0; i < kNumDeflections; ++i) {
    parts.clear();
    for (const auto& f : fields) parts.push_back(f.deflections[i]);
    fused.deflections[i] = ad::mean(parts);
  }
  return fused;
}

ad::Var decode(const ModelConfig& cfg, const ParamBinding& p, const FieldVars& field,
               const AngularCode& code) {
  if (field.basic.has_value() != cfg.use_basic_branch) {
    throw Error(ErrorKind::kConfiguration,
                cfg.use_basic_branch ? "model expects a basic representation"
                                     : "model was built without the basic branch");
  }
  int total = 0;
  for (int len : field.lengths) {
    if (len < 1) throw Error(ErrorKind::kShapeMismatch, "deflection lengths must be positive");
    total += len;
  }
  if (total != cfg.signal_length) {
    throw Error(ErrorKind::kShapeMismatch, "deflection lengths sum to " + std::to_string(total) +
                                               ", expected " + std::to_string(cfg.signal_length));
  }

  const int t_w = cfg.feature_length();
  std::array<ad::Var, kNumDeflections> restored;
  for (int i = 0; i < kNumDeflections; ++i) {
    restored[i] = ad::silu(conv(p, indexed("dec.deflection", i + 1, ""), field.deflections[i],
                                {kHeadKernel, 1, kHeadKernel / 2}));
  }
  const auto spans = spans_from_lengths(field.lengths, t_w).all();
  ad::Var m = ad::reverse_roi_align(restored, spans, t_w);
  if (field.basic) {
    const ad::Var mb = ad::silu(conv(p, "dec.basic", *field.basic, {kHeadKernel, 1, kHeadKernel / 2}));
    m = ad::concat_rows(mb, m);
  }
  require_finite(m, "decoder.field");

  const ad::Var gate = angle_mlp(p, "dec.angle", code);
  require_finite(gate, "decoder.angle");
  ad::Var h = ad::scale_channels(m, gate);
  for (std::size_t j = 0; j < cfg.decoder_channels.size(); ++j) {
    const std::string up = indexed("dec.up", static_cast<int>(j), "");
    const std::string norm = indexed("dec.up_norm", static_cast<int>(j), "");
    h = ad::conv_transpose1d(h, p[up + ".weight"], p[up + ".bias"], {kUpsampleKernel, 2, 1});
    h = ad::silu(ad::layer_norm(h, p[norm + ".gain"], p[norm + ".bias"]));
    require_finite(h, indexed("decoder.block", static_cast<int>(j), ""));
  }
  const ad::Var out = ad::sigmoid(conv(p, "dec.out", h, {kHeadKernel, 1, kHeadKernel / 2}));
  require_finite(out, "decoder.output");
  return out;
}

FieldVars detach(const FieldVars& field) {
  FieldVars out;
  out.lengths = field.lengths;
  if (field.basic) out.basic = ad::detach(*field.basic);
  for (int i = 0; i < kNumDeflections; ++i) out.deflections[i] = ad::detach(field.deflections[i]);
  return out;
}

FieldVars constant(const ElectrocardioField& field) {
  FieldVars out;
  out.lengths = field.lengths;
  if (field.basic) out.basic = ad::constant(*field.basic);
  for (int i = 0; i < kNumDeflections; ++i) out.deflections[i] = ad::constant(field.deflections[i]);
  return out;
}

ElectrocardioField values(const FieldVars& field) {
  ElectrocardioField out;
  out.lengths = field.lengths;
  if (field.basic) out.basic = field.basic->matrix();
  for (int i = 0; i < kNumDeflections; ++i) out.deflections[i] = field.deflections[i].matrix();
  return out;
}

}  // namespace graph

// ---------------------------------------------------------------------------
// NefNet

NefNet::NefNet(ModelConfig config, Parameters params)
    : config_(std::move(config)), params_(std::move(params)) {
  validate_parameters(config_, params_);
  frozen_ = std::make_shared<const graph::ParamBinding>(params_, false);
}

NefNet NefNet::initialize(const ModelConfig& config) {
  return NefNet(config, initialize_parameters(config));
}

ElectrocardioField NefNet::encode_view(const CardiacCycle& cycle, Viewpoint view,
                                       Perturbation* perturbation) const {
  return encode_view(cycle.samples, cycle.demarcations, view, perturbation);
}

ElectrocardioField NefNet::encode_view(std::span<const double> samples,
                                       const Demarcations& demarcations, Viewpoint view,
                                       Perturbation* perturbation) const {
  const AngularCode code = perturbation ? angular_encode(view, *perturbation) : angular_encode(view);
  return graph::values(graph::encode(config_, *frozen_, samples, demarcations, code));
}

ElectrocardioField NefNet::encode(const MultiViewCycle& cycle) const {
  validate(cycle);
  std::vector<ElectrocardioField> fields;
  for (const auto& view : cycle.views) fields.push_back(encode_view(view.cycle, view.viewpoint));
  return fuse_views(fields);
}

ElectrocardioField NefNet::encode(const MultiViewCycle& cycle,
                                  std::span<const std::string> view_names) const {
  if (view_names.empty()) return encode(cycle);
  std::vector<ElectrocardioField> fields;
  for (const auto& name : view_names) {
    const View* view = cycle.find(name);
    if (!view) {
      throw Error(ErrorKind::kInvalidArgument,
                  "cycle '" + cycle.record_id + "' has no view named '" + name + "'");
    }
    fields.push_back(encode_view(view->cycle, view->viewpoint));
  }
  return fuse_views(fields);
}

std::vector<double> NefNet::decode_view(const ElectrocardioField& field, Viewpoint query,
                                        Perturbation* perturbation) const {
  const AngularCode code = perturbation ? angular_encode(query, *perturbation) : angular_encode(query);
  const ad::Var out = graph::decode(config_, *frozen_, graph::constant(field), code);
  return {out.value().begin(), out.value().end()};
}

std::vector<std::vector<double>> NefNet::panorama(const MultiViewCycle& views,
                                                  std::span<const Viewpoint> queries) const {
  const ElectrocardioField field = encode(views);
  std::vector<std::vector<double>> out;
  out.reserve(queries.size());
  for (const Viewpoint& q : queries) out.push_back(decode_view(field, q));
  return out;
}

}  // namespace nef
