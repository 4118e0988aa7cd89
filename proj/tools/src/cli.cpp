#include "panoserve/cli.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <numbers>

#include <CLI11.hpp>
#include <json.hpp>

#include "nefnet/checkpoint.hpp"
#include "nefnet/dataset.hpp"
#include "nefnet/dipole.hpp"
#include "nefnet/errors.hpp"
#include "nefnet/scratchsynth.hpp"
#include "nefnet/training.hpp"
#include "panoserve/service.hpp"

namespace panoserve {

using nlohmann::json;
using nef::Error;
using nef::ErrorKind;
namespace fs = std::filesystem;

namespace {

std::vector<std::string> all_lead_names() {
  std::vector<std::string> names;
  for (const auto& lead : nef::kLeadAngleTable) names.emplace_back(lead.name);
  return names;
}

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::kLoad, "cannot open '" + path.string() + "'");
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::kLoad, "'" + path.string() + "' is not valid JSON: " + e.what());
  }
}

void write_json(const fs::path& path, const json& doc) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  out << doc.dump() << '\n';
  if (!out) throw Error(ErrorKind::kIo, "cannot write '" + path.string() + "'");
}

/// {"views": [{"theta", "phi" | "name", "samples", "demarcations"}],
///  "sampling_rate"?}. Views are preprocessed when a sampling rate is given.
nef::MultiViewCycle read_cycle_json(const fs::path& path, int length) {
  const json doc = read_json(path);
  nef::MultiViewCycle cycle;
  cycle.record_id = path.stem().string();
  try {
    const double rate = doc.value("sampling_rate", 0.0);
    for (const auto& v : doc.at("views")) {
      nef::View view;
      if (v.contains("theta")) {
        view.viewpoint = nef::canonicalize({v.at("theta").get<double>(), v.at("phi").get<double>()});
        view.name = v.value("name", nef::default_view_name(view.viewpoint));
      } else {
        view.name = v.at("name").get<std::string>();
        const auto vp = nef::lead_viewpoint(view.name);
        if (!vp) throw Error(ErrorKind::kLoad, "view '" + view.name + "' needs theta and phi");
        view.viewpoint = *vp;
      }
      const auto samples = v.at("samples").get<std::vector<double>>();
      const auto d = v.at("demarcations").get<std::vector<int>>();
      if (d.size() != nef::kNumDemarcations) throw Error(ErrorKind::kLoad, "'demarcations' needs 7 entries");
      nef::Demarcations dem{};
      std::copy(d.begin(), d.end(), dem.begin());
      if (rate > 0.0) {
        nef::PreprocessOptions opt;
        opt.cycle_length = length;
        view.cycle = nef::preprocess_cycle(samples, rate, dem, opt);
      } else {
        if (static_cast<int>(samples.size()) != length) {
          throw Error(ErrorKind::kShapeMismatch, "view '" + view.name + "' has " + std::to_string(samples.size()) +
                                                     " samples; the model expects " + std::to_string(length) +
                                                     " (give sampling_rate to preprocess raw input)");
        }
        nef::validate_demarcations(dem, length);
        view.cycle.samples = samples;
        view.cycle.demarcations = dem;
        view.cycle.original_length = length;
      }
      cycle.views.push_back(std::move(view));
    }
  } catch (const json::exception& e) {
    throw Error(ErrorKind::kLoad, "malformed cycle file '" + path.string() + "': " + e.what());
  }
  if (cycle.views.empty()) throw Error(ErrorKind::kLoad, "cycle file has no views");
  nef::validate(cycle);
  return cycle;
}

/// lo, lo + step, ... up to `hi`. A step given to a few decimals (1.0472 for
/// pi / 3) still reaches `hi`: the count allows 0.1% slack and the last value
/// is clamped.
std::vector<double> angle_steps(double lo, double hi, double step) {
  if (!(step > 0.0)) throw Error(ErrorKind::kInvalidArgument, "angle steps must be positive");
  const int n = static_cast<int>(std::floor((hi - lo) / step + 1e-3)) + 1;
  std::vector<double> out(n);
  for (int i = 0; i < n; ++i) out[i] = std::min(lo + i * step, hi);
  return out;
}

std::string one_line(std::string s) {
  for (char& c : s) {
    if (c == '\n' || c == '\r') c = ' ';
  }
  return s;
}

struct Options {
  // prepare-data / gen-synthetic
  std::string input, out;
  double rate = nef::kTargetRateHz;
  int length = nef::kCanonicalCycleLength;
  bool remove_baseline = false;
  double baseline_window = 0.2;
  bool inline_samples = false;
  int n = 200;
  std::uint64_t seed = 0;
  double noise = 0.01;
  std::vector<std::string> views;
  std::string label;
  std::string record_id = "dipole";
  // train / eval
  std::string data, split, ckpt, history;
  std::vector<std::string> ckpts;
  nef::TrainConfig train;
  bool no_standin = false, no_perturbation = false, no_basic = false;
  std::string mode = "synthesis";
  bool baseline = false;
  // panorama
  double theta_step = std::numbers::pi / 3, phi_step = std::numbers::pi / 3;
  // bank / synth
  std::string bank;
  double alpha = 1.0, beta = 1.0;
  // serve
  std::string host = "127.0.0.1";
  int port = 8080;
  int session_ttl = 1800;
};

int cmd_prepare(const Options& o, std::ostream& out) {
  nef::PreprocessOptions p;
  p.target_rate = o.rate;
  p.cycle_length = o.length;
  p.remove_baseline = o.remove_baseline;
  p.baseline_window_seconds = o.baseline_window;
  const auto cycles = nef::load_dataset(o.input, p);
  nef::write_dataset(o.out, cycles, {o.inline_samples});
  out << "wrote " << cycles.size() << " cycles to " << o.out << '\n';
  return 0;
}

int cmd_generate(const Options& o, std::ostream& out) {
  nef::DipoleDatasetOptions d;
  d.n_cycles = o.n;
  d.views = nef::standard_leads(o.views.empty() ? all_lead_names() : o.views);
  d.noise_std = o.noise;
  d.seed = o.seed;
  d.length = o.length;
  if (!o.label.empty()) d.label = o.label;
  d.record_id = o.record_id;
  const auto cycles = nef::generate_dipole_dataset(d);
  nef::write_dataset(o.out, cycles, {o.inline_samples});
  out << "wrote " << cycles.size() << " cycles to " << o.out << '\n';
  return 0;
}

int cmd_train(const Options& o, std::ostream& out) {
  nef::TrainConfig tc = o.train;
  tc.seed = o.seed;
  tc.standin_enabled = !o.no_standin;
  tc.perturbation = !o.no_perturbation;
  nef::ModelConfig mc;
  mc.seed = o.seed;
  mc.use_basic_branch = !o.no_basic;
  const auto data = nef::load_dataset(o.data);
  const auto split = nef::read_split(o.split);

  out << "epoch,loss,lr\n";
  const auto result = nef::train(data, split, tc, mc, [&](const nef::EpochRecord& r) {
    const std::string row = nef::history_csv(std::span(&r, 1));
    out << row.substr(row.find('\n') + 1) << std::flush;
  });
  nef::save_checkpoint(o.out, mc, result.params);
  if (!o.history.empty()) {
    std::ofstream h(o.history);
    h << nef::history_csv(result.history);
    if (!h) throw Error(ErrorKind::kIo, "cannot write '" + o.history + "'");
  }
  return 0;
}

int cmd_eval(const Options& o, std::ostream& out) {
  const auto mode = nef::parse_eval_mode(o.mode);
  const auto data = nef::load_dataset(o.data);
  const auto split = nef::read_split(o.split);
  split.validate(false);
  if (o.baseline) {
    out << nef::format_report(nef::evaluate_copy_nearest(data, split, mode));
    return 0;
  }
  if (o.ckpts.empty()) throw Error(ErrorKind::kInvalidArgument, "eval needs --ckpt (or --baseline)");
  std::vector<nef::EvalReport> runs;
  for (const auto& path : o.ckpts) runs.push_back(nef::evaluate(nef::load_model(path), data, split, mode));
  out << nef::format_report(runs.size() == 1 ? runs.front() : nef::combine_runs(runs));
  return 0;
}

int cmd_panorama(const Options& o, std::ostream& out) {
  const nef::NefNet model = nef::load_model(o.ckpt);
  const auto cycle = read_cycle_json(o.input, model.config().signal_length);
  const auto field = model.encode(cycle);
  const auto thetas = angle_steps(0.0, std::numbers::pi, o.theta_step);
  const auto phis = angle_steps(-std::numbers::pi, std::numbers::pi, o.phi_step);
  json cells = json::array();
  for (double t : thetas) {
    for (double p : phis) cells.push_back({{"theta", t}, {"phi", p}, {"samples", model.decode_view(field, {t, p})}});
  }
  write_json(o.out, {{"model", nef::model_version(model.parameters())},
                     {"theta_step", o.theta_step},
                     {"phi_step", o.phi_step},
                     {"thetas", thetas},
                     {"phis", phis},
                     {"demarcations", nef::demarcations_from_lengths(field.lengths)},
                     {"cells", std::move(cells)}});
  out << "wrote " << thetas.size() << " x " << phis.size() << " grid to " << o.out << '\n';
  return 0;
}

int cmd_build_bank(const Options& o, std::ostream& out) {
  const nef::NefNet model = nef::load_model(o.ckpt);
  const auto data = nef::load_dataset(o.data);
  nef::MemoryBank bank = nef::build_bank(model, data);
  bank.checkpoint = fs::absolute(o.ckpt).string();
  nef::save_bank(o.out, bank);
  out << "stored " << bank.entries.size() << " entries in " << o.out << '\n';
  return 0;
}

nef::NefNet model_for_bank(const nef::MemoryBank& bank, const std::string& override_path) {
  const std::string path = override_path.empty() ? bank.checkpoint : override_path;
  if (path.empty()) throw Error(ErrorKind::kConfiguration, "bank names no checkpoint; pass --ckpt");
  nef::NefNet model = nef::load_model(path);
  if (nef::model_version(model.parameters()) != bank.model_version) {
    throw Error(ErrorKind::kConfiguration, "checkpoint '" + path + "' is not the model the bank was built with");
  }
  return model;
}

int cmd_synth(const Options& o, std::ostream& out) {
  const nef::MemoryBank bank = nef::load_bank(o.bank);
  const nef::NefNet model = model_for_bank(bank, o.ckpt);
  nef::ScratchOptions s;
  s.label = o.label;
  s.n = o.n;
  s.seed = o.seed;
  s.alpha = o.alpha;
  s.beta = o.beta;
  const auto leads = nef::standard_leads(o.views.empty() ? all_lead_names() : o.views);
  const auto cycles = nef::synthesize_scratch(model, bank, leads, s);
  nef::write_dataset(o.out, cycles, {o.inline_samples});
  out << "wrote " << cycles.size() << " synthetic cycles to " << o.out << '\n';
  return 0;
}

int cmd_serve(const Options& o, std::ostream& out) {
  std::optional<nef::MemoryBank> bank;
  if (!o.bank.empty()) bank = nef::load_bank(o.bank);
  Service service(nef::load_model(o.ckpt), std::move(bank), std::chrono::seconds(o.session_ttl));
  out << "serving model " << service.version() << " on http://" << o.host << ':' << o.port << "/v1\n"
      << std::flush;
  if (!serve(service, o.host, o.port)) {
    throw Error(ErrorKind::kIo, "cannot listen on " + o.host + ":" + std::to_string(o.port));
  }
  return 0;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Electrocardio panorama: train, evaluate and serve Nef-Net models", "nefnet"};
  app.require_subcommand(1);
  Options o;

  auto* prep = app.add_subcommand("prepare-data", "Preprocess a raw dataset into canonical cycles");
  prep->add_option("--input", o.input, "Raw dataset directory or manifest")->required();
  prep->add_option("--out", o.out, "Output dataset directory")->required();
  prep->add_option("--rate", o.rate, "Target sampling rate (Hz)");
  prep->add_option("--length", o.length, "Canonical cycle length");
  prep->add_flag("--remove-baseline", o.remove_baseline, "Subtract a moving-average baseline");
  prep->add_option("--baseline-window", o.baseline_window, "Baseline window (s)");
  prep->add_flag("--inline", o.inline_samples, "Store samples inside the manifest");

  auto* gen = app.add_subcommand("gen-synthetic", "Generate a dipole-oracle dataset");
  gen->add_option("--out", o.out, "Output dataset directory")->required();
  gen->add_option("--n", o.n, "Number of cycles");
  gen->add_option("--seed", o.seed, "Random seed");
  gen->add_option("--noise", o.noise, "Noise standard deviation before normalization");
  gen->add_option("--views", o.views, "Lead names (default: all 12)")->delimiter(',');
  gen->add_option("--label", o.label, "Label for every cycle");
  gen->add_option("--length", o.length, "Cycle length");
  gen->add_option("--record-id", o.record_id, "Record id");
  gen->add_flag("--inline", o.inline_samples, "Store samples inside the manifest");

  auto* tr = app.add_subcommand("train", "Train a model; prints the epoch,loss,lr history");
  tr->add_option("--data", o.data, "Dataset directory")->required();
  tr->add_option("--split", o.split, "View-group split JSON {IG, RG, SG}")->required();
  tr->add_option("--out", o.out, "Checkpoint to write")->required();
  tr->add_option("--epochs", o.train.epochs, "Epochs");
  tr->add_option("--seed", o.seed, "Seed for initialization, shuffling and perturbation");
  tr->add_option("--batch-size", o.train.batch_size, "Cycles per step");
  tr->add_option("--lr", o.train.lr, "Initial learning rate");
  tr->add_option("--lr-drops", o.train.lr_drops, "Epochs at which lr is multiplied by the drop factor")
      ->delimiter(',');
  tr->add_option("--lr-drop-factor", o.train.lr_drop_factor, "Learning-rate drop factor");
  tr->add_option("--momentum", o.train.momentum, "SGD momentum");
  tr->add_option("--clip-norm", o.train.clip_norm, "Global gradient-norm clip (<= 0 disables)");
  tr->add_flag("--no-standin", o.no_standin, "Disable the Standin loss");
  tr->add_flag("--no-perturbation", o.no_perturbation, "Disable angle perturbation");
  tr->add_flag("--no-basic-branch", o.no_basic, "Deflection representations only (needed for build-bank)");
  tr->add_option("--history", o.history, "Also write the history CSV here");

  auto* ev = app.add_subcommand("eval", "Score transformation (RG) or synthesis (SG) views");
  ev->add_option("--ckpt", o.ckpts, "Checkpoint; repeat to combine runs");
  ev->add_option("--data", o.data, "Dataset directory")->required();
  ev->add_option("--split", o.split, "View-group split JSON")->required();
  ev->add_option("--mode", o.mode, "transformation or synthesis")
      ->check(CLI::IsMember({"transformation", "synthesis"}));
  ev->add_flag("--baseline", o.baseline, "Score the copy-nearest-input-view baseline instead");

  auto* pano = app.add_subcommand("panorama", "Decode a viewpoint grid from one cycle");
  pano->add_option("--ckpt", o.ckpt, "Checkpoint")->required();
  pano->add_option("--input", o.input, "Cycle JSON {views: [...]}")->required();
  pano->add_option("--out", o.out, "Grid JSON to write")->required();
  pano->add_option("--theta-step", o.theta_step, "Polar step (rad)");
  pano->add_option("--phi-step", o.phi_step, "Azimuthal step (rad)");

  auto* bb = app.add_subcommand("build-bank", "Store fused deflection representations");
  bb->add_option("--ckpt", o.ckpt, "Checkpoint trained with --no-basic-branch")->required();
  bb->add_option("--data", o.data, "Dataset directory")->required();
  bb->add_option("--out", o.out, "Bank file to write")->required();

  auto* sy = app.add_subcommand("synth", "Synthesize multi-lead cycles from scratch");
  sy->add_option("--bank", o.bank, "Memory bank")->required();
  sy->add_option("--label", o.label, "Category to mix (empty for unlabeled data)");
  sy->add_option("--n", o.n, "Number of cycles")->default_val(1);
  sy->add_option("--seed", o.seed, "Random seed");
  sy->add_option("--out", o.out, "Output dataset directory")->required();
  sy->add_option("--ckpt", o.ckpt, "Checkpoint (default: the one recorded in the bank)");
  sy->add_option("--alpha", o.alpha, "Beta distribution alpha");
  sy->add_option("--beta", o.beta, "Beta distribution beta");
  sy->add_option("--views", o.views, "Lead names (default: all 12)")->delimiter(',');
  sy->add_flag("--inline", o.inline_samples, "Store samples inside the manifest");

  auto* sv = app.add_subcommand("serve", "Run the HTTP API");
  sv->add_option("--ckpt", o.ckpt, "Checkpoint")->required();
  sv->add_option("--bank", o.bank, "Memory bank for /v1/synthesize");
  sv->add_option("--host", o.host, "Bind address");
  sv->add_option("--port", o.port, "Port");
  sv->add_option("--session-ttl", o.session_ttl, "Idle session lifetime (s)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    const auto subs = app.get_subcommands();
    out << (subs.empty() ? app.help() : subs.back()->help());
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    const auto subs = app.get_subcommands();
    err << "usage error: " << e.what() << "\n\n" << (subs.empty() ? app.help() : subs.back()->help());
    return 2;
  }

  try {
    if (*prep) return cmd_prepare(o, out);
    if (*gen) return cmd_generate(o, out);
    if (*tr) return cmd_train(o, out);
    if (*ev) return cmd_eval(o, out);
    if (*pano) return cmd_panorama(o, out);
    if (*bb) return cmd_build_bank(o, out);
    if (*sy) return cmd_synth(o, out);
    if (*sv) return cmd_serve(o, out);
  } catch (const Error& e) {
    err << "error: kind=" << nef::to_string(e.kind()) << " message=" << one_line(e.what()) << '\n';
    return 1;
  } catch (const std::exception& e) {
    err << "error: kind=internal message=" << one_line(e.what()) << '\n';
    return 1;
  }
  return 2;
}

}  // namespace panoserve
