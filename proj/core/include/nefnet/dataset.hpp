#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "nefnet/ecg_data.hpp"

namespace nef {

/// On-disk dataset layout:
///
///   DIR/manifest.json
///   {"records": [{"id": str, "sampling_rate": number,
///                 "leads": [{"name": str, "file": str}            // raw f32 LE
///                           | {"name": str, "samples": [...]}],   // inline
///                 "cycles": [{"demarcations": [7 ints]}],
///                 "label": str | null}]}
///
/// A lead covers all cycles of its record concatenated; cycle k spans
/// demarcations[6] samples. Leads not in kLeadAngleTable must carry explicit
/// "theta"/"phi" in radians.
struct LeadEntry {
  std::string name;
  Viewpoint viewpoint;
  std::optional<std::string> file;
  std::vector<double> inline_samples;
};

struct RecordEntry {
  std::string id;
  double sampling_rate = kTargetRateHz;
  std::vector<LeadEntry> leads;
  std::vector<Demarcations> cycles;
  std::optional<std::string> label;

  std::size_t declared_length() const;
};

struct DatasetManifest {
  std::filesystem::path root;
  std::vector<RecordEntry> records;
};

/// Accepts either the dataset directory or the manifest file itself.
DatasetManifest read_manifest(const std::filesystem::path& path);

std::vector<double> read_lead_samples(const DatasetManifest& manifest, const RecordEntry& record,
                                      const LeadEntry& lead);

std::vector<MultiViewCycle> load_dataset(const std::filesystem::path& path,
                                         const PreprocessOptions& options = {});

struct WriteOptions {
  bool inline_samples = false;
};

/// Writes cycles as a dataset directory. Consecutive cycles sharing a record
/// id form one record; every cycle of a record must expose the same views.
void write_dataset(const std::filesystem::path& dir, std::span<const MultiViewCycle> cycles,
                   const WriteOptions& options = {});

std::vector<float> read_f32_file(const std::filesystem::path& path);
void write_f32_file(const std::filesystem::path& path, std::span<const double> samples);

}  // namespace nef
