#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <numbers>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "nefnet/nefnet.hpp"

namespace nef {

/// Input, reconstruction and synthesis groups, by view name.
struct ViewGroupSplit {
  std::vector<std::string> input;
  std::vector<std::string> reconstruction;
  std::vector<std::string> synthesis;

  /// Throws kConfiguration unless the groups are pairwise disjoint and IG is
  /// non-empty (RG too when `for_training`).
  void validate(bool for_training = true) const;
};

/// JSON {"IG": [...], "RG": [...], "SG": [...]}.
ViewGroupSplit read_split(const std::filesystem::path& path);
void write_split(const std::filesystem::path& path, const ViewGroupSplit& split);

struct TrainConfig {
  int batch_size = 32;
  int epochs = 150;
  double lr = 0.1;
  std::vector<int> lr_drops = {50, 100};
  double lr_drop_factor = 0.1;
  double momentum = 0.9;
  std::uint64_t seed = 0;
  bool standin_enabled = true;
  double clip_norm = 5.0;  // <= 0 disables clipping
  bool perturbation = true;
  double perturbation_std = std::numbers::pi / 50;

  void validate() const;
};

/// Learning rate in effect during 1-based `epoch`.
double lr_at_epoch(const TrainConfig& config, int epoch);

struct StandinTerms {
  ad::Var basic;       // L_Zb; zero when the model has no basic branch
  ad::Var deflection;  // L_Zd
};

/// Target decode(fused | q) is built from detached representations and the
/// `frozen` parameter copy, so no gradient reaches it. Predictions swap in
/// one view's Z_b (resp. Z_d) while keeping the fused other half.
StandinTerms standin_loss(const ModelConfig& config, const graph::ParamBinding& params,
                          const graph::ParamBinding& frozen, std::span<const graph::FieldVars> per_view,
                          const graph::FieldVars& fused, const AngularCode& query);

/// Value-only form: returns (L_Zb, L_Zd).
std::pair<double, double> standin_loss(const NefNet& model, std::span<const ElectrocardioField> per_view,
                                       const ElectrocardioField& fused, Viewpoint query);

double total_loss(std::span<const double> target, std::span<const double> prediction, double l_zb,
                  double l_zd, bool standin_enabled = true);
ad::Var total_loss(const ad::Var& reconstruction_mae, const StandinTerms* standin);

/// PyTorch-style momentum SGD: buf = momentum * buf + g; p -= lr * buf.
class SgdMomentum {
 public:
  explicit SgdMomentum(double momentum) : momentum_(momentum) {}
  void step(Parameters& params, const Gradients& grads, double lr);

 private:
  double momentum_;
  Gradients buffers_;
};

/// Scales grads in place so their global L2 norm is at most max_norm.
/// Returns the norm before clipping.
double clip_global_norm(Gradients& grads, double max_norm);

struct EpochRecord {
  int epoch = 0;
  double loss = 0.0;            // mean total loss over the epoch's samples
  double reconstruction = 0.0;  // mean reconstruction MAE
  double lr = 0.0;
};

struct TrainResult {
  Parameters params;
  std::vector<EpochRecord> history;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

/// One step per batch: encode IG views (perturbed), fuse, reconstruct one
/// uniformly drawn RG view, add the Standin term, clip, update.
TrainResult train(std::span<const MultiViewCycle> data, const ViewGroupSplit& split,
                  const TrainConfig& config, const ModelConfig& model_config,
                  const EpochCallback& on_epoch = {});

/// CSV with header epoch,loss,lr.
std::string history_csv(std::span<const EpochRecord> history);

enum class EvalMode { kTransformation, kSynthesis };
std::string_view to_string(EvalMode mode);
EvalMode parse_eval_mode(std::string_view text);

struct ScoreRow {
  std::string view;
  int count = 0;
  double psnr_mean = 0.0;
  double psnr_std = 0.0;
  double ssim_mean = 0.0;
  double ssim_std = 0.0;
};

/// Per-view rows plus an aggregate over all scored (cycle, view) pairs.
/// Standard deviations are over cycles for one run, over runs once combined.
struct EvalReport {
  EvalMode mode = EvalMode::kTransformation;
  int runs = 1;
  std::vector<ScoreRow> rows;
  ScoreRow aggregate;
};

/// Scores RG views (transformation) or SG views (synthesis) from the fused
/// IG views.
EvalReport evaluate(const NefNet& model, std::span<const MultiViewCycle> data,
                    const ViewGroupSplit& split, EvalMode mode);

/// Baseline: each scored view is predicted by the IG view nearest in angle.
EvalReport evaluate_copy_nearest(std::span<const MultiViewCycle> data, const ViewGroupSplit& split,
                                 EvalMode mode);

/// Mean and std of the per-run means.
EvalReport combine_runs(std::span<const EvalReport> runs);

std::string format_report(const EvalReport& report);

}  // namespace nef
