#include "nefnet/training.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include <json.hpp>

#include "nefnet/errors.hpp"
#include "nefnet/metrics.hpp"

namespace nef {

namespace {

using nlohmann::json;

const View& require_view(const MultiViewCycle& cycle, const std::string& name) {
  const View* v = cycle.find(name);
  if (!v) {
    throw Error(ErrorKind::kInvalidArgument,
                "cycle '" + cycle.record_id + "' has no view named '" + name + "'");
  }
  return *v;
}

struct Moments {
  double sum = 0.0;
  double sq = 0.0;
  int n = 0;

  void add(double x) {
    sum += x;
    sq += x * x;
    ++n;
  }
  double mean() const { return n ? sum / n : 0.0; }
  double stddev() const {
    if (n < 2) return 0.0;
    const double m = mean();
    return std::sqrt(std::max(0.0, sq / n - m * m));
  }
};

struct RowAccumulator {
  Moments psnr;
  Moments ssim;

  void add(double p, double s) {
    psnr.add(p);
    ssim.add(s);
  }
  ScoreRow row(std::string view) const {
    return {std::move(view), psnr.n, psnr.mean(), psnr.stddev(), ssim.mean(), ssim.stddev()};
  }
};

const std::vector<std::string>& scored_group(const ViewGroupSplit& split, EvalMode mode) {
  const auto& group = mode == EvalMode::kTransformation ? split.reconstruction : split.synthesis;
  if (group.empty()) {
    throw Error(ErrorKind::kConfiguration,
                std::string("cannot evaluate: the ") +
                    (mode == EvalMode::kTransformation ? "reconstruction" : "synthesis") +
                    " group is empty");
  }
  return group;
}

using Predictor = std::function<std::vector<std::vector<double>>(const MultiViewCycle&,
                                                                 std::span<const View* const>)>;

EvalReport score(std::span<const MultiViewCycle> data, const ViewGroupSplit& split, EvalMode mode,
                 const Predictor& predict) {
  split.validate(false);
  const auto& group = scored_group(split, mode);
  if (data.empty()) throw Error(ErrorKind::kInsufficientData, "cannot evaluate an empty dataset");
  std::vector<RowAccumulator> per_view(group.size());
  RowAccumulator all;
  std::vector<const View*> targets(group.size());
  for (const auto& cycle : data) {
    for (std::size_t v = 0; v < group.size(); ++v) targets[v] = &require_view(cycle, group[v]);
    const auto predictions = predict(cycle, targets);
    for (std::size_t v = 0; v < group.size(); ++v) {
      const auto& ref = targets[v]->cycle.samples;
      const double p = psnr(ref, predictions[v]);
      const double s = ssim_1d(ref, predictions[v]);
      per_view[v].add(p, s);
      all.add(p, s);
    }
  }
  EvalReport report;
  report.mode = mode;
  for (std::size_t v = 0; v < group.size(); ++v) report.rows.push_back(per_view[v].row(group[v]));
  report.aggregate = all.row("all");
  return report;
}

double mae_value(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size() || a.empty()) {
    throw Error(ErrorKind::kShapeMismatch, "MAE needs equal, non-empty lengths");
  }
  double total = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) total += std::abs(a[i] - b[i]);
  return total / static_cast<double>(a.size());
}

}  // namespace

// ---------------------------------------------------------------------------
// Split and config

void ViewGroupSplit::validate(bool for_training) const {
  if (input.empty()) throw Error(ErrorKind::kConfiguration, "input group (IG) is empty");
  if (for_training && reconstruction.empty()) {
    throw Error(ErrorKind::kConfiguration, "reconstruction group (RG) is empty");
  }
  std::set<std::string> seen;
  for (const auto* group : {&input, &reconstruction, &synthesis}) {
    for (const auto& name : *group) {
      if (!seen.insert(name).second) {
        throw Error(ErrorKind::kConfiguration, "view '" + name + "' appears in more than one group");
      }
    }
  }
}

ViewGroupSplit read_split(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::kLoad, "cannot open split file " + path.string());
  ViewGroupSplit split;
  try {
    const json j = json::parse(in);
    split.input = j.at("IG").get<std::vector<std::string>>();
    split.reconstruction = j.value("RG", std::vector<std::string>{});
    split.synthesis = j.value("SG", std::vector<std::string>{});
  } catch (const json::exception& e) {
    throw Error(ErrorKind::kLoad, "bad split file " + path.string() + ": " + e.what());
  }
  split.validate(false);
  return split;
}

void write_split(const std::filesystem::path& path, const ViewGroupSplit& split) {
  const json j = {{"IG", split.input}, {"RG", split.reconstruction}, {"SG", split.synthesis}};
  std::ofstream out(path);
  out << j.dump(2) << '\n';
  if (!out) throw Error(ErrorKind::kIo, "cannot write split file " + path.string());
}

void TrainConfig::validate() const {
  if (epochs < 1) throw Error(ErrorKind::kConfiguration, "epochs must be >= 1");
  if (batch_size < 1) throw Error(ErrorKind::kConfiguration, "batch_size must be >= 1");
  if (!(lr > 0.0)) throw Error(ErrorKind::kConfiguration, "lr must be > 0");
  if (momentum < 0.0 || momentum >= 1.0) {
    throw Error(ErrorKind::kConfiguration, "momentum must lie in [0, 1)");
  }
  if (perturbation_std < 0.0) throw Error(ErrorKind::kConfiguration, "perturbation std must be >= 0");
}

double lr_at_epoch(const TrainConfig& config, int epoch) {
  double lr = config.lr;
  for (int drop : config.lr_drops) {
    if (epoch >= drop) lr *= config.lr_drop_factor;
  }
  return lr;
}

// ---------------------------------------------------------------------------
// Losses

StandinTerms standin_loss(const ModelConfig& config, const graph::ParamBinding& params,
                          const graph::ParamBinding& frozen, std::span<const graph::FieldVars> per_view,
                          const graph::FieldVars& fused, const AngularCode& query) {
  if (per_view.empty()) throw Error(ErrorKind::kFusion, "standin loss needs at least one view");
  for (const auto& f : per_view) {
    if (f.lengths != fused.lengths || f.basic.has_value() != fused.basic.has_value()) {
      throw Error(ErrorKind::kShapeMismatch, "per-view field does not match the fused field");
    }
  }
  const ad::Var target = graph::decode(config, frozen, graph::detach(fused), query);

  std::vector<ad::Var> basic_terms;
  std::vector<ad::Var> deflection_terms;
  for (const auto& view : per_view) {
    if (fused.basic) {
      graph::FieldVars swapped = fused;
      swapped.basic = view.basic;
      basic_terms.push_back(ad::mae(graph::decode(config, params, swapped, query), target));
    }
    graph::FieldVars swapped = fused;
    swapped.deflections = view.deflections;
    deflection_terms.push_back(ad::mae(graph::decode(config, params, swapped, query), target));
  }
  StandinTerms terms;
  terms.basic = basic_terms.empty() ? ad::constant(std::vector<double>{0.0}, 1, 1) : ad::mean(basic_terms);
  terms.deflection = ad::mean(deflection_terms);
  return terms;
}

std::pair<double, double> standin_loss(const NefNet& model, std::span<const ElectrocardioField> per_view,
                                       const ElectrocardioField& fused, Viewpoint query) {
  const graph::ParamBinding frozen(model.parameters(), false);
  std::vector<graph::FieldVars> views;
  views.reserve(per_view.size());
  for (const auto& f : per_view) views.push_back(graph::constant(f));
  const auto terms = standin_loss(model.config(), frozen, frozen, views, graph::constant(fused),
                                  angular_encode(query));
  return {terms.basic.item(), terms.deflection.item()};
}

double total_loss(std::span<const double> target, std::span<const double> prediction, double l_zb,
                  double l_zd, bool standin_enabled) {
  const double mae = mae_value(target, prediction);
  return standin_enabled ? mae + 0.5 * (l_zb + l_zd) : mae;
}

ad::Var total_loss(const ad::Var& reconstruction_mae, const StandinTerms* standin) {
  if (!standin) return reconstruction_mae;
  return ad::add(reconstruction_mae, ad::scale(ad::add(standin->basic, standin->deflection), 0.5));
}

// ---------------------------------------------------------------------------
// Optimizer

void SgdMomentum::step(Parameters& params, const Gradients& grads, double lr) {
  if (grads.size() != params.size()) {
    throw Error(ErrorKind::kShapeMismatch, "gradient buffer does not match the parameter set");
  }
  const bool first = buffers_.empty();
  if (first) buffers_ = zero_gradients(params);
  auto blocks = params.blocks();
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    auto& values = blocks[b].values;
    auto& buf = buffers_[b];
    const auto& g = grads[b];
    for (std::size_t i = 0; i < values.size(); ++i) {
      buf[i] = first ? g[i] : momentum_ * buf[i] + g[i];
      values[i] -= lr * buf[i];
    }
  }
}

double clip_global_norm(Gradients& grads, double max_norm) {
  double sq = 0.0;
  for (const auto& g : grads) {
    for (double v : g) sq += v * v;
  }
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const double factor = max_norm / norm;
    for (auto& g : grads) {
      for (double& v : g) v *= factor;
    }
  }
  return norm;
}

// ---------------------------------------------------------------------------
// Training loop

TrainResult train(std::span<const MultiViewCycle> data, const ViewGroupSplit& split,
                  const TrainConfig& config, const ModelConfig& model_config,
                  const EpochCallback& on_epoch) {
  config.validate();
  model_config.validate();
  split.validate(true);
  if (data.empty()) throw Error(ErrorKind::kInsufficientData, "training set is empty");

  struct Sample {
    std::vector<const View*> inputs;
    std::vector<const View*> queries;
  };
  std::vector<Sample> samples;
  samples.reserve(data.size());
  for (const auto& cycle : data) {
    validate(cycle);
    if (cycle.length() != model_config.signal_length) {
      throw Error(ErrorKind::kShapeMismatch,
                  "cycle '" + cycle.record_id + "' has length " + std::to_string(cycle.length()) +
                      ", model expects " + std::to_string(model_config.signal_length));
    }
    Sample s;
    for (const auto& name : split.input) s.inputs.push_back(&require_view(cycle, name));
    for (const auto& name : split.reconstruction) s.queries.push_back(&require_view(cycle, name));
    samples.push_back(std::move(s));
  }

  TrainResult result{initialize_parameters(model_config), {}};
  Parameters& params = result.params;
  SgdMomentum optimizer(config.momentum);
  std::mt19937_64 rng(config.seed);
  Perturbation perturbation({config.perturbation, config.perturbation_std,
                             config.seed ^ 0x9e3779b97f4a7c15ull});
  std::uniform_int_distribution<std::size_t> pick_query(0, split.reconstruction.size() - 1);

  std::vector<std::size_t> order(samples.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  long step = 0;

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    const double lr = lr_at_epoch(config, epoch);
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    double rec_sum = 0.0;

    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      ++step;
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      const graph::ParamBinding binding(params, true);
      std::optional<graph::ParamBinding> frozen;
      if (config.standin_enabled) frozen.emplace(params, false);

      try {
        for (std::size_t k = start; k < end; ++k) {
          const Sample& s = samples[order[k]];
          std::vector<graph::FieldVars> fields;
          fields.reserve(s.inputs.size());
          for (const View* v : s.inputs) {
            fields.push_back(graph::encode(model_config, binding, v->cycle.samples,
                                           v->cycle.demarcations,
                                           angular_encode(v->viewpoint, perturbation)));
          }
          const graph::FieldVars fused = graph::fuse(fields);
          const View* query = s.queries[pick_query(rng)];
          const AngularCode code = angular_encode(query->viewpoint, perturbation);

          const ad::Var prediction = graph::decode(model_config, binding, fused, code);
          const ad::Var target = ad::constant(query->cycle.samples, 1, model_config.signal_length);
          const ad::Var reconstruction = ad::mae(prediction, target);

          std::optional<StandinTerms> standin;
          if (frozen) standin = standin_loss(model_config, binding, *frozen, fields, fused, code);
          const ad::Var loss = total_loss(reconstruction, standin ? &*standin : nullptr);
          if (!std::isfinite(loss.item())) {
            throw Error(ErrorKind::kNumericFailure, "loss is not finite");
          }
          ad::backward(loss);
          loss_sum += loss.item();
          rec_sum += reconstruction.item();
        }
      } catch (const Error& e) {
        if (e.kind() != ErrorKind::kNumericFailure) throw;
        throw Error(ErrorKind::kNumericFailure, std::string(e.what()) + " (epoch " +
                                                    std::to_string(epoch) + ", step " +
                                                    std::to_string(step) + ")");
      }

      Gradients grads = zero_gradients(params);
      binding.accumulate_gradients(grads);
      const double inv = 1.0 / static_cast<double>(end - start);
      for (auto& g : grads) {
        for (double& v : g) v *= inv;
      }
      const double norm = clip_global_norm(grads, config.clip_norm);
      if (!std::isfinite(norm)) {
        throw Error(ErrorKind::kNumericFailure, "gradient is not finite (epoch " +
                                                    std::to_string(epoch) + ", step " +
                                                    std::to_string(step) + ")");
      }
      optimizer.step(params, grads, lr);
    }

    const double n = static_cast<double>(samples.size());
    result.history.push_back({epoch, loss_sum / n, rec_sum / n, lr});
    if (on_epoch) on_epoch(result.history.back());
  }
  return result;
}

std::string history_csv(std::span<const EpochRecord> history) {
  std::ostringstream out;
  out << "epoch,loss,lr\n" << std::setprecision(10);
  for (const auto& r : history) out << r.epoch << ',' << r.loss << ',' << r.lr << '\n';
  return out.str();
}

// ---------------------------------------------------------------------------
// Evaluation

std::string_view to_string(EvalMode mode) {
  return mode == EvalMode::kTransformation ? "transformation" : "synthesis";
}

EvalMode parse_eval_mode(std::string_view text) {
  if (text == "transformation") return EvalMode::kTransformation;
  if (text == "synthesis") return EvalMode::kSynthesis;
  throw Error(ErrorKind::kInvalidArgument,
              "unknown evaluation mode '" + std::string(text) + "' (transformation|synthesis)");
}

EvalReport evaluate(const NefNet& model, std::span<const MultiViewCycle> data,
                    const ViewGroupSplit& split, EvalMode mode) {
  return score(data, split, mode, [&](const MultiViewCycle& cycle, std::span<const View* const> targets) {
    const ElectrocardioField field = model.encode(cycle, split.input);
    std::vector<std::vector<double>> out;
    out.reserve(targets.size());
    for (const View* t : targets) out.push_back(model.decode_view(field, t->viewpoint));
    return out;
  });
}

EvalReport evaluate_copy_nearest(std::span<const MultiViewCycle> data, const ViewGroupSplit& split,
                                 EvalMode mode) {
  return score(data, split, mode, [&](const MultiViewCycle& cycle, std::span<const View* const> targets) {
    std::vector<std::vector<double>> out;
    out.reserve(targets.size());
    for (const View* t : targets) {
      const View* nearest = nullptr;
      double best = 0.0;
      for (const auto& name : split.input) {
        const View& candidate = require_view(cycle, name);
        const double d = angular_distance(candidate.viewpoint, t->viewpoint);
        if (!nearest || d < best) {
          nearest = &candidate;
          best = d;
        }
      }
      out.push_back(nearest->cycle.samples);
    }
    return out;
  });
}

EvalReport combine_runs(std::span<const EvalReport> runs) {
  if (runs.empty()) throw Error(ErrorKind::kInsufficientData, "no runs to combine");
  EvalReport combined;
  combined.mode = runs.front().mode;
  combined.runs = static_cast<int>(runs.size());
  auto merge = [&](auto pick, std::string name) {
    RowAccumulator acc;
    int count = 0;
    for (const auto& run : runs) {
      const ScoreRow& row = pick(run);
      acc.add(row.psnr_mean, row.ssim_mean);
      count += row.count;
    }
    ScoreRow out = acc.row(std::move(name));
    out.count = count;
    return out;
  };
  for (std::size_t v = 0; v < runs.front().rows.size(); ++v) {
    const std::string& name = runs.front().rows[v].view;
    for (const auto& run : runs) {
      if (run.rows.size() != runs.front().rows.size() || run.rows[v].view != name ||
          run.mode != combined.mode) {
        throw Error(ErrorKind::kShapeMismatch, "runs do not score the same views");
      }
    }
    combined.rows.push_back(merge([v](const EvalReport& r) -> const ScoreRow& { return r.rows[v]; }, name));
  }
  combined.aggregate = merge([](const EvalReport& r) -> const ScoreRow& { return r.aggregate; }, "all");
  return combined;
}

std::string format_report(const EvalReport& report) {
  std::ostringstream out;
  out << "mode: " << to_string(report.mode) << "  runs: " << report.runs << '\n';
  out << std::left << std::setw(24) << "view" << std::setw(8) << "n" << std::setw(22) << "PSNR (dB)"
      << "SSIM\n";
  auto line = [&](const ScoreRow& r) {
    std::ostringstream psnr_text;
    psnr_text << std::fixed << std::setprecision(2) << r.psnr_mean << " +- " << r.psnr_std;
    out << std::left << std::setw(24) << r.view << std::setw(8) << r.count << std::setw(22)
        << psnr_text.str() << std::fixed << std::setprecision(4) << r.ssim_mean << " +- "
        << r.ssim_std << '\n';
  };
  for (const auto& r : report.rows) line(r);
  line(report.aggregate);
  return out.str();
}

}  // namespace nef
