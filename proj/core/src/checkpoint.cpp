#include <bit>
#include <cstring>
#include <fstream>

#include <json.hpp>

#include "brati/errors.hpp"
#include "brati/trainer.hpp"

namespace brati {

namespace {

using nlohmann::json;

constexpr char kMagic[8] = {'B', 'R', 'A', 'T', 'I', 'C', 'P', '1'};

static_assert(std::endian::native == std::endian::little,
              "checkpoint payloads are little-endian");

json config_to_json(const BratiConfig& c) {
  json j;
  j["D"] = c.features;
  j["T"] = c.window;
  j["d_model"] = c.d_model;
  j["d_ffn"] = c.d_ffn;
  j["heads"] = c.heads;
  j["blocks"] = c.blocks;
  j["dropout"] = c.dropout;
  j["bias"] = c.bias;
  j["variant"] = variant_name(c.variant);
  return j;
}

BratiConfig config_from_json(const json& j) {
  BratiConfig c;
  c.features = j.at("D").get<std::size_t>();
  c.window = j.at("T").get<std::size_t>();
  c.d_model = j.at("d_model").get<std::size_t>();
  c.d_ffn = j.at("d_ffn").get<std::size_t>();
  c.heads = j.at("heads").get<std::size_t>();
  c.blocks = j.at("blocks").get<std::size_t>();
  c.dropout = j.at("dropout").get<double>();
  c.bias = j.at("bias").get<bool>();
  c.variant = variant_from_name(j.at("variant").get<std::string>());
  return c;
}

}  // namespace

void save_checkpoint(const BratiParams& params, const BratiConfig& config,
                     const std::filesystem::path& path) {
  const auto named = params.named();
  json manifest = json::array();
  for (const auto& [name, t] : named) {
    json entry;
    entry["name"] = name;
    entry["shape"] = t.shape();
    entry["dtype"] = "f64";
    manifest.push_back(entry);
  }
  json header;
  header["config"] = config_to_json(config);
  header["manifest"] = manifest;
  const std::string header_bytes = header.dump();

  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write checkpoint '" + path.string() + "'");
  out.write(kMagic, sizeof kMagic);
  const std::uint64_t len = header_bytes.size();
  out.write(reinterpret_cast<const char*>(&len), sizeof len);
  out.write(header_bytes.data(), static_cast<std::streamsize>(len));
  for (const auto& [name, t] : named)
    out.write(reinterpret_cast<const char*>(t.data().data()),
              static_cast<std::streamsize>(t.size() * sizeof(double)));
  if (!out) throw Error("short write to checkpoint '" + path.string() + "'");
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open checkpoint '" + path.string() + "'");

  char magic[8];
  in.read(magic, sizeof magic);
  if (!in || std::memcmp(magic, kMagic, sizeof magic) != 0)
    throw CorruptionError("'" + path.string() + "' is not a brati checkpoint");
  std::uint64_t len = 0;
  in.read(reinterpret_cast<char*>(&len), sizeof len);
  std::string header_bytes(len, '\0');
  in.read(header_bytes.data(), static_cast<std::streamsize>(len));
  if (!in) throw CorruptionError("checkpoint header truncated");

  json header;
  try {
    header = json::parse(header_bytes);
  } catch (const json::exception& e) {
    throw CorruptionError("checkpoint header unreadable: " +
                          std::string(e.what()));
  }

  Checkpoint ckpt;
  ckpt.config = config_from_json(header.at("config"));
  // Rebuild the parameter structure for the config, then overwrite every
  // payload; the manifest must match the structure exactly.
  ckpt.params = BratiParams::init(ckpt.config, /*seed=*/0);
  auto named = ckpt.params.named();
  const json& manifest = header.at("manifest");
  if (manifest.size() != named.size())
    throw CorruptionError("checkpoint manifest has " +
                          std::to_string(manifest.size()) +
                          " entries, config implies " +
                          std::to_string(named.size()));
  for (std::size_t i = 0; i < named.size(); ++i) {
    const json& entry = manifest[i];
    if (entry.at("name").get<std::string>() != named[i].first)
      throw CorruptionError("checkpoint manifest entry '" +
                            entry.at("name").get<std::string>() +
                            "' does not match expected '" + named[i].first +
                            "'");
    if (entry.at("shape").get<Shape>() != named[i].second.shape())
      throw CorruptionError("checkpoint tensor '" + named[i].first +
                            "' has unexpected shape");
    if (entry.at("dtype").get<std::string>() != "f64")
      throw CorruptionError("checkpoint tensor '" + named[i].first +
                            "' has unsupported dtype");
    auto& values = const_cast<Tensor&>(named[i].second).values_mut();
    in.read(reinterpret_cast<char*>(values.data()),
            static_cast<std::streamsize>(values.size() * sizeof(double)));
    if (!in)
      throw CorruptionError("checkpoint payload truncated at '" +
                            named[i].first + "'");
  }
  in.peek();
  if (!in.eof())
    throw CorruptionError("checkpoint has trailing bytes after the payloads");
  return ckpt;
}

}  // namespace brati
