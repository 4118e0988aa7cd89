#include "nefnet/checkpoint.hpp"

#include <bit>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

#include <json.hpp>

#include "config_json.hpp"
#include "nefnet/binary_io.hpp"
#include "nefnet/errors.hpp"

namespace nef {

namespace {

using nlohmann::json;
using detail::config_from_json;
using detail::config_to_json;

constexpr char kMagic[8] = {'N', 'E', 'F', 'N', 'E', 'T', 'C', 'K'};

std::uint64_t fnv1a(std::uint64_t h, const void* data, std::size_t n) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

}  // namespace

std::string model_version(const Parameters& params) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (const auto& block : params.blocks()) {
    h = fnv1a(h, block.name.data(), block.name.size());
    for (double v : block.values) {
      const auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(v));
      const unsigned char le[4] = {static_cast<unsigned char>(bits), static_cast<unsigned char>(bits >> 8),
                                   static_cast<unsigned char>(bits >> 16),
                                   static_cast<unsigned char>(bits >> 24)};
      h = fnv1a(h, le, 4);
    }
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::vector<std::uint8_t> serialize_checkpoint(const ModelConfig& config, const Parameters& params) {
  validate_parameters(config, params);
  json blocks = json::array();
  for (const auto& b : params.blocks()) blocks.push_back({{"name", b.name}, {"shape", b.shape}});
  const json header = {{"format_version", kCheckpointFormatVersion},
                       {"version", model_version(params)},
                       {"seed", config.seed},
                       {"config", config_to_json(config)},
                       {"blocks", std::move(blocks)}};
  const std::string text = header.dump();

  std::ostringstream out(std::ios::binary);
  out.write(kMagic, sizeof kMagic);
  binary::put_u64(out, text.size());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto& b : params.blocks()) {
    for (double v : b.values) binary::put_f32(out, static_cast<float>(v));
  }
  const std::string bytes = std::move(out).str();
  return {bytes.begin(), bytes.end()};
}

Checkpoint deserialize_checkpoint(std::span<const std::uint8_t> bytes) {
  auto fail = [](const std::string& what) { throw Error(ErrorKind::kLoad, "bad checkpoint: " + what); };
  const auto* raw = reinterpret_cast<const char*>(bytes.data());
  if (bytes.size() < 16 || std::memcmp(raw, kMagic, sizeof kMagic) != 0) fail("missing magic");
  const std::uint64_t header_len = binary::u64_from_le(raw + 8);
  if (header_len > bytes.size() - 16) fail("truncated header");

  json header;
  try {
    header = json::parse(raw + 16, raw + 16 + header_len);
  } catch (const json::exception& e) {
    fail(std::string("header is not valid JSON (") + e.what() + ")");
  }

  Checkpoint ck;
  std::size_t offset = 16 + header_len;
  try {
    if (header.at("format_version").get<int>() != kCheckpointFormatVersion) {
      fail("unsupported format_version " + header.at("format_version").dump());
    }
    ck.config = config_from_json(header.at("config"), header.at("seed").get<std::uint64_t>());
    ck.version = header.at("version").get<std::string>();
    for (const auto& b : header.at("blocks")) {
      auto shape = b.at("shape").get<std::vector<int>>();
      std::size_t count = 1;
      for (int d : shape) {
        if (d < 1) fail("non-positive dimension in block " + b.at("name").dump());
        count *= static_cast<std::size_t>(d);
      }
      if (bytes.size() - offset < count * 4) fail("truncated parameter data");
      std::vector<double> values(count);
      for (std::size_t i = 0; i < count; ++i) values[i] = binary::f32_from_le(raw + offset + 4 * i);
      offset += count * 4;
      ck.params.add(b.at("name").get<std::string>(), std::move(shape), std::move(values));
    }
  } catch (const json::exception& e) {
    fail(std::string("malformed header (") + e.what() + ")");
  }
  if (offset != bytes.size()) fail("trailing bytes after parameter data");
  try {
    validate_parameters(ck.config, ck.params);
  } catch (const Error& e) {
    fail(e.what());
  }
  if (model_version(ck.params) != ck.version) fail("version hash does not match parameter data");
  return ck;
}

void save_checkpoint(const std::filesystem::path& path, const ModelConfig& config,
                     const Parameters& params) {
  const auto bytes = serialize_checkpoint(config, params);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorKind::kIo, "cannot write checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::kLoad, "cannot open checkpoint " + path.string());
  const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                        std::istreambuf_iterator<char>());
  return deserialize_checkpoint(bytes);
}

NefNet load_model(const std::filesystem::path& path) {
  Checkpoint ck = load_checkpoint(path);
  return NefNet(std::move(ck.config), std::move(ck.params));
}

}  // namespace nef
