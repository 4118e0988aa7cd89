#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "nefnet/dipole.hpp"
#include "nefnet/nefnet.hpp"

namespace nef {

/// Fused deflection representations of one training cycle.
struct BankEntry {
  std::array<RowMatrix, kNumDeflections> deflections;
  DeflectionLengths lengths{};
  std::string label;  // empty for unlabeled data
  std::string source;
};

struct MemoryBank {
  ModelConfig config;
  std::string model_version;
  std::string checkpoint;  // path the bank was built from, informational
  std::vector<BankEntry> entries;

  std::size_t count(std::string_view label) const;
  std::vector<std::string> labels() const;
};

/// Requires a model without the basic branch.
MemoryBank build_bank(const NefNet& model, std::span<const MultiViewCycle> data);

void save_bank(const std::filesystem::path& path, const MemoryBank& bank);
MemoryBank load_bank(const std::filesystem::path& path);

struct MixedField {
  std::array<RowMatrix, kNumDeflections> deflections;
  DeflectionLengths lengths{};
};

/// a * p + (1 - a) * q for every deflection length, rounded by largest
/// remainder so the result keeps the parents' common total.
DeflectionLengths mix_lengths(const DeflectionLengths& p, const DeflectionLengths& q, double a);

/// Convex combination of two same-label entries.
MixedField mix(const BankEntry& p, const BankEntry& q, double a);

ElectrocardioField to_field(const MixedField& mixed);
ElectrocardioField to_field(const BankEntry& entry);

struct ScratchOptions {
  std::string label;
  int n = 1;
  std::uint64_t seed = 0;
  double alpha = 1.0;
  double beta = 1.0;
  std::optional<double> forced_a;
};

/// n draws of two distinct same-label entries (with replacement across
/// draws), a ~ Beta(alpha, beta), decoded at every viewpoint.
std::vector<MultiViewCycle> synthesize_scratch(const NefNet& model, const MemoryBank& bank,
                                               std::span<const NamedViewpoint> viewpoints,
                                               const ScratchOptions& options);

/// Decodes a field at each viewpoint into one multi-view cycle.
MultiViewCycle decode_cycle(const NefNet& model, const ElectrocardioField& field,
                            std::span<const NamedViewpoint> viewpoints, std::string record_id,
                            std::optional<std::string> label);

}  // namespace nef
