#include "nefnet/scratchsynth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <set>

#include <json.hpp>

#include "config_json.hpp"
#include "nefnet/checkpoint.hpp"
#include "nefnet/errors.hpp"

namespace nef {

namespace {

using nlohmann::json;

json matrix_to_json(const RowMatrix& m) {
  return {{"rows", m.rows()}, {"cols", m.cols()},
          {"values", std::vector<double>(m.data(), m.data() + m.size())}};
}

RowMatrix matrix_from_json(const json& j) {
  const int rows = j.at("rows").get<int>();
  const int cols = j.at("cols").get<int>();
  const auto values = j.at("values").get<std::vector<double>>();
  if (rows < 1 || cols < 1 || values.size() != static_cast<std::size_t>(rows) * cols) {
    throw Error(ErrorKind::kLoad, "bank matrix has inconsistent shape");
  }
  return Eigen::Map<const RowMatrix>(values.data(), rows, cols);
}

double draw_beta(std::mt19937_64& rng, double alpha, double beta) {
  std::gamma_distribution<double> ga(alpha, 1.0);
  std::gamma_distribution<double> gb(beta, 1.0);
  const double x = ga(rng);
  const double y = gb(rng);
  return x + y > 0.0 ? x / (x + y) : 0.5;
}

}  // namespace

std::size_t MemoryBank::count(std::string_view label) const {
  return static_cast<std::size_t>(std::count_if(
      entries.begin(), entries.end(), [&](const BankEntry& e) { return e.label == label; }));
}

std::vector<std::string> MemoryBank::labels() const {
  std::set<std::string> seen;
  for (const auto& e : entries) seen.insert(e.label);
  return {seen.begin(), seen.end()};
}

MemoryBank build_bank(const NefNet& model, std::span<const MultiViewCycle> data) {
  if (model.config().use_basic_branch) {
    throw Error(ErrorKind::kConfiguration,
                "memory banks need a model trained without the basic branch");
  }
  MemoryBank bank;
  bank.config = model.config();
  bank.model_version = model_version(model.parameters());
  bank.entries.reserve(data.size());
  for (const auto& cycle : data) {
    ElectrocardioField field = model.encode(cycle);
    bank.entries.push_back({std::move(field.deflections), field.lengths, cycle.label.value_or(""),
                            cycle.record_id});
  }
  return bank;
}

void save_bank(const std::filesystem::path& path, const MemoryBank& bank) {
  json entries = json::array();
  for (const auto& e : bank.entries) {
    json deflections = json::array();
    for (const auto& d : e.deflections) deflections.push_back(matrix_to_json(d));
    entries.push_back({{"label", e.label}, {"source", e.source}, {"lengths", e.lengths},
                       {"deflections", std::move(deflections)}});
  }
  const json doc = {{"model_version", bank.model_version},
                    {"checkpoint", bank.checkpoint},
                    {"seed", bank.config.seed},
                    {"config", detail::config_to_json(bank.config)},
                    {"entries", std::move(entries)}};
  std::ofstream out(path);
  out << doc.dump() << '\n';
  if (!out) throw Error(ErrorKind::kIo, "cannot write bank " + path.string());
}

MemoryBank load_bank(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::kLoad, "cannot open bank " + path.string());
  MemoryBank bank;
  try {
    const json doc = json::parse(in);
    bank.model_version = doc.at("model_version").get<std::string>();
    bank.checkpoint = doc.value("checkpoint", "");
    bank.config = detail::config_from_json(doc.at("config"), doc.at("seed").get<std::uint64_t>());
    for (const auto& je : doc.at("entries")) {
      BankEntry e;
      e.label = je.at("label").get<std::string>();
      e.source = je.value("source", "");
      e.lengths = je.at("lengths").get<DeflectionLengths>();
      const auto& jd = je.at("deflections");
      if (jd.size() != kNumDeflections) throw Error(ErrorKind::kLoad, "bank entry needs 6 deflections");
      for (int i = 0; i < kNumDeflections; ++i) e.deflections[i] = matrix_from_json(jd[i]);
      bank.entries.push_back(std::move(e));
    }
  } catch (const json::exception& ex) {
    throw Error(ErrorKind::kLoad, "bad bank file " + path.string() + ": " + ex.what());
  }
  return bank;
}

DeflectionLengths mix_lengths(const DeflectionLengths& p, const DeflectionLengths& q, double a) {
  const int total_p = std::accumulate(p.begin(), p.end(), 0);
  const int total_q = std::accumulate(q.begin(), q.end(), 0);
  if (total_p != total_q) {
    throw Error(ErrorKind::kShapeMismatch, "parents have different cycle lengths");
  }
  std::array<double, kNumDeflections> exact{};
  DeflectionLengths out{};
  int assigned = 0;
  for (int i = 0; i < kNumDeflections; ++i) {
    exact[i] = a * p[i] + (1.0 - a) * q[i];
    out[i] = static_cast<int>(std::floor(exact[i]));
    assigned += out[i];
  }
  std::array<int, kNumDeflections> order{};
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int x, int y) {
    return exact[x] - out[x] > exact[y] - out[y];
  });
  for (int k = 0; assigned < total_p; k = (k + 1) % kNumDeflections, ++assigned) ++out[order[k]];
  // a deflection can only floor to zero if both parents are shorter than one
  // sample, which valid demarcations rule out
  for (int& len : out) {
    if (len < 1) throw Error(ErrorKind::kShapeMismatch, "mixed deflection length is not positive");
  }
  return out;
}

MixedField mix(const BankEntry& p, const BankEntry& q, double a) {
  if (p.label != q.label) {
    throw Error(ErrorKind::kLabelMismatch,
                "cannot mix label '" + p.label + "' with label '" + q.label + "'");
  }
  if (!(a >= 0.0 && a <= 1.0)) {
    throw Error(ErrorKind::kInvalidArgument, "mixing coefficient must lie in [0, 1]");
  }
  MixedField out;
  for (int i = 0; i < kNumDeflections; ++i) {
    if (p.deflections[i].rows() != q.deflections[i].rows() ||
        p.deflections[i].cols() != q.deflections[i].cols()) {
      throw Error(ErrorKind::kShapeMismatch, "bank entries have different representation shapes");
    }
    if (a == 1.0) {
      out.deflections[i] = p.deflections[i];
    } else if (a == 0.0) {
      out.deflections[i] = q.deflections[i];
    } else {
      out.deflections[i] = a * p.deflections[i] + (1.0 - a) * q.deflections[i];
    }
  }
  out.lengths = a == 1.0 ? p.lengths : a == 0.0 ? q.lengths : mix_lengths(p.lengths, q.lengths, a);
  return out;
}

ElectrocardioField to_field(const MixedField& mixed) {
  ElectrocardioField f;
  f.deflections = mixed.deflections;
  f.lengths = mixed.lengths;
  return f;
}

ElectrocardioField to_field(const BankEntry& entry) {
  ElectrocardioField f;
  f.deflections = entry.deflections;
  f.lengths = entry.lengths;
  return f;
}

MultiViewCycle decode_cycle(const NefNet& model, const ElectrocardioField& field,
                            std::span<const NamedViewpoint> viewpoints, std::string record_id,
                            std::optional<std::string> label) {
  MultiViewCycle cycle;
  cycle.record_id = std::move(record_id);
  cycle.label = std::move(label);
  const Demarcations d = demarcations_from_lengths(field.lengths);
  for (const auto& vp : viewpoints) {
    CardiacCycle c;
    c.samples = model.decode_view(field, vp.viewpoint);
    c.sampling_rate = kTargetRateHz;
    c.demarcations = d;
    c.original_length = c.length();
    cycle.views.push_back({vp.name, vp.viewpoint, std::move(c)});
  }
  return cycle;
}

std::vector<MultiViewCycle> synthesize_scratch(const NefNet& model, const MemoryBank& bank,
                                               std::span<const NamedViewpoint> viewpoints,
                                               const ScratchOptions& options) {
  if (options.n < 0) throw Error(ErrorKind::kInvalidArgument, "n must be >= 0");
  if (!(options.alpha > 0.0 && options.beta > 0.0)) {
    throw Error(ErrorKind::kInvalidArgument, "Beta parameters must be positive");
  }
  std::vector<const BankEntry*> pool;
  for (const auto& e : bank.entries) {
    if (e.label == options.label) pool.push_back(&e);
  }
  if (options.n == 0) return {};
  if (pool.size() < 2) {
    throw Error(ErrorKind::kInsufficientData,
                "label '" + options.label + "' has " + std::to_string(pool.size()) +
                    " bank entries, at least 2 are needed");
  }
  std::mt19937_64 rng(options.seed);
  std::uniform_int_distribution<std::size_t> first(0, pool.size() - 1);
  std::uniform_int_distribution<std::size_t> second(0, pool.size() - 2);
  std::optional<std::string> label;
  if (!options.label.empty()) label = options.label;

  std::vector<MultiViewCycle> out;
  out.reserve(options.n);
  for (int k = 0; k < options.n; ++k) {
    const std::size_t i = first(rng);
    std::size_t j = second(rng);
    if (j >= i) ++j;
    const double a = options.forced_a ? *options.forced_a : draw_beta(rng, options.alpha, options.beta);
    const MixedField mixed = mix(*pool[i], *pool[j], a);
    const std::string id = "scratch" + (options.label.empty() ? "" : "_" + options.label) + "_" +
                           std::to_string(k);
    out.push_back(decode_cycle(model, to_field(mixed), viewpoints, id, label));
  }
  return out;
}

}  // namespace nef
