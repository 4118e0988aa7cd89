#include "nefnet/dataset.hpp"

#include <fstream>
#include <iterator>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "nefnet/binary_io.hpp"
#include "nefnet/errors.hpp"

namespace nef {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

[[noreturn]] void fail_record(const std::string& id, const std::string& what) {
  throw Error(ErrorKind::kLoad, "record '" + id + "': " + what);
}

fs::path manifest_file(const fs::path& path) {
  return fs::is_directory(path) ? path / "manifest.json" : path;
}

LeadEntry parse_lead(const json& j, const std::string& record_id) {
  LeadEntry lead;
  lead.name = j.at("name").get<std::string>();
  if (j.contains("theta") || j.contains("phi")) {
    if (!j.contains("theta") || !j.contains("phi")) {
      fail_record(record_id, "lead '" + lead.name + "' must give both theta and phi");
    }
    lead.viewpoint = canonicalize({j.at("theta").get<double>(), j.at("phi").get<double>()});
  } else if (auto v = lead_viewpoint(lead.name)) {
    lead.viewpoint = *v;
  } else {
    fail_record(record_id, "lead '" + lead.name + "' is not a standard lead and has no theta/phi");
  }
  if (j.contains("file")) {
    lead.file = j.at("file").get<std::string>();
  } else if (j.contains("samples")) {
    lead.inline_samples = j.at("samples").get<std::vector<double>>();
  } else {
    fail_record(record_id, "lead '" + lead.name + "' has neither 'file' nor 'samples'");
  }
  return lead;
}

RecordEntry parse_record(const json& j) {
  RecordEntry record;
  record.id = j.at("id").get<std::string>();
  try {
    record.sampling_rate = j.at("sampling_rate").get<double>();
    if (!(record.sampling_rate > 0.0)) fail_record(record.id, "sampling_rate must be positive");
    for (const auto& lead : j.at("leads")) record.leads.push_back(parse_lead(lead, record.id));
    for (const auto& cycle : j.at("cycles")) {
      const auto values = cycle.at("demarcations").get<std::vector<int>>();
      if (values.size() != kNumDemarcations) {
        fail_record(record.id, "each cycle needs exactly 7 demarcations");
      }
      Demarcations d{};
      std::copy(values.begin(), values.end(), d.begin());
      record.cycles.push_back(d);
    }
    if (j.contains("label") && !j.at("label").is_null()) {
      record.label = j.at("label").get<std::string>();
    }
  } catch (const json::exception& e) {
    fail_record(record.id, std::string("malformed entry: ") + e.what());
  }
  return record;
}

std::string safe_file_stem(std::string s) {
  for (char& c : s) {
    const bool ok = std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == '.';
    if (!ok) c = '_';
  }
  return s;
}

}  // namespace

std::size_t RecordEntry::declared_length() const {
  std::size_t total = 0;
  for (const auto& d : cycles) total += static_cast<std::size_t>(std::max(0, d.back()));
  return total;
}

std::vector<float> read_f32_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::kIo, "cannot open '" + path.string() + "'");
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.size() % 4 != 0) {
    throw Error(ErrorKind::kLoad, "'" + path.string() + "' is not a whole number of f32 samples");
  }
  std::vector<float> out(bytes.size() / 4);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = binary::f32_from_le(bytes.data() + 4 * i);
  return out;
}

void write_f32_file(const fs::path& path, std::span<const double> samples) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::kIo, "cannot write '" + path.string() + "'");
  for (double x : samples) binary::put_f32(out, static_cast<float>(x));
}

DatasetManifest read_manifest(const fs::path& path) {
  const fs::path file = manifest_file(path);
  std::ifstream in(file);
  if (!in) throw Error(ErrorKind::kLoad, "cannot open manifest '" + file.string() + "'");
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& e) {
    throw Error(ErrorKind::kLoad, "manifest '" + file.string() + "' is not valid JSON: " + e.what());
  }
  DatasetManifest manifest;
  manifest.root = file.parent_path();
  if (!doc.contains("records") || !doc.at("records").is_array()) {
    throw Error(ErrorKind::kLoad, "manifest '" + file.string() + "' has no 'records' array");
  }
  for (const auto& record : doc.at("records")) manifest.records.push_back(parse_record(record));
  return manifest;
}

std::vector<double> read_lead_samples(const DatasetManifest& manifest, const RecordEntry& record,
                                      const LeadEntry& lead) {
  std::vector<double> samples;
  if (lead.file) {
    const fs::path path = manifest.root / *lead.file;
    if (!fs::exists(path)) {
      fail_record(record.id, "signal file '" + path.string() + "' does not exist");
    }
    const auto raw = read_f32_file(path);
    samples.assign(raw.begin(), raw.end());
  } else {
    samples = lead.inline_samples;
  }
  if (samples.size() != record.declared_length()) {
    fail_record(record.id, "lead '" + lead.name + "' has " + std::to_string(samples.size()) +
                               " samples but the cycles declare " +
                               std::to_string(record.declared_length()));
  }
  return samples;
}

std::vector<MultiViewCycle> load_dataset(const fs::path& path, const PreprocessOptions& options) {
  const DatasetManifest manifest = read_manifest(path);
  std::vector<MultiViewCycle> cycles;
  for (const auto& record : manifest.records) {
    if (record.leads.empty()) fail_record(record.id, "no leads");
    for (std::size_t k = 0; k < record.cycles.size(); ++k) {
      try {
        validate_demarcations(record.cycles[k], record.cycles[k].back());
      } catch (const Error& e) {
        fail_record(record.id, "cycle " + std::to_string(k) + ": " + e.what());
      }
    }

    std::vector<std::vector<double>> signals;
    for (const auto& lead : record.leads) signals.push_back(read_lead_samples(manifest, record, lead));

    std::size_t offset = 0;
    for (std::size_t k = 0; k < record.cycles.size(); ++k) {
      const Demarcations& d = record.cycles[k];
      const auto n = static_cast<std::size_t>(d.back());
      MultiViewCycle cycle;
      cycle.record_id = record.id;
      cycle.label = record.label;
      for (std::size_t l = 0; l < record.leads.size(); ++l) {
        const std::span<const double> raw(signals[l].data() + offset, n);
        try {
          cycle.views.push_back({record.leads[l].name, record.leads[l].viewpoint,
                                 preprocess_cycle(raw, record.sampling_rate, d, options)});
        } catch (const Error& e) {
          fail_record(record.id, "cycle " + std::to_string(k) + ", lead '" + record.leads[l].name +
                                     "': " + e.what());
        }
      }
      offset += n;
      cycles.push_back(std::move(cycle));
    }
  }
  return cycles;
}

void write_dataset(const fs::path& dir, std::span<const MultiViewCycle> cycles,
                   const WriteOptions& options) {
  fs::create_directories(dir);
  json records = json::array();

  std::size_t begin = 0;
  int record_index = 0;
  while (begin < cycles.size()) {
    std::size_t end = begin + 1;
    while (end < cycles.size() && cycles[end].record_id == cycles[begin].record_id) ++end;
    const MultiViewCycle& first = cycles[begin];
    validate(first);

    std::string id = first.record_id.empty() ? "record" + std::to_string(record_index)
                                             : first.record_id;
    json record;
    record["id"] = id;
    record["sampling_rate"] = first.views.front().cycle.sampling_rate;
    record["label"] = first.label ? json(*first.label) : json(nullptr);
    json cycle_list = json::array();
    for (std::size_t k = begin; k < end; ++k) {
      validate(cycles[k]);
      if (cycles[k].views.size() != first.views.size()) {
        throw Error(ErrorKind::kShapeMismatch, "record '" + id + "' mixes different view sets");
      }
      cycle_list.push_back({{"demarcations", cycles[k].demarcations()}});
    }
    record["cycles"] = cycle_list;

    json leads = json::array();
    for (std::size_t l = 0; l < first.views.size(); ++l) {
      const View& view = first.views[l];
      std::vector<double> concatenated;
      for (std::size_t k = begin; k < end; ++k) {
        const View& other = cycles[k].views[l];
        if (other.name != view.name) {
          throw Error(ErrorKind::kShapeMismatch, "record '" + id + "' mixes different view sets");
        }
        concatenated.insert(concatenated.end(), other.cycle.samples.begin(),
                            other.cycle.samples.end());
      }
      json lead = {{"name", view.name}};
      const auto standard = lead_viewpoint(view.name);
      if (!standard || *standard != view.viewpoint) {
        lead["theta"] = view.viewpoint.theta;
        lead["phi"] = view.viewpoint.phi;
      }
      if (options.inline_samples) {
        lead["samples"] = concatenated;
      } else {
        const std::string file = safe_file_stem(id + "_" + view.name) + ".f32";
        write_f32_file(dir / file, concatenated);
        lead["file"] = file;
      }
      leads.push_back(lead);
    }
    record["leads"] = leads;
    records.push_back(record);
    begin = end;
    ++record_index;
  }

  std::ofstream out(dir / "manifest.json", std::ios::trunc);
  if (!out) throw Error(ErrorKind::kIo, "cannot write manifest in '" + dir.string() + "'");
  out << json{{"records", records}}.dump(2) << '\n';
}

}  // namespace nef
