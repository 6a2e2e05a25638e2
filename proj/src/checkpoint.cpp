#include "hoigraph/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "hoigraph/errors.hpp"
#include "hoigraph/io.hpp"

namespace hoigraph {

namespace {

constexpr char kMagic[8] = {'H', 'O', 'I', 'G', 'C', 'K', 'P', 'T'};

template <typename T>
void put_le(std::string& out, T value) {
  char bytes[sizeof(T)];
  std::memcpy(bytes, &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  out.append(bytes, sizeof(T));
}

template <typename T>
T get_le(const std::string& in, std::size_t offset) {
  char bytes[sizeof(T)];
  std::memcpy(bytes, in.data() + offset, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  T value;
  std::memcpy(&value, bytes, sizeof(T));
  return value;
}

}  // namespace

std::string serialize_checkpoint(const Checkpoint& ckpt) {
  const ParamStore& params = ckpt.model.params;
  json table = json::array();
  for (const auto& name : params.names()) table.push_back({{"name", name}, {"shape", params.value(name).shape()}});
  const json header = {{"config", config_to_json(ckpt.config)},
                       {"variant", ckpt.config.model.variant()},
                       {"epoch", ckpt.epoch},
                       {"rng_state", ckpt.rng_state},
                       {"params", std::move(table)}};
  const std::string text = header.dump();

  std::string out(kMagic, sizeof kMagic);
  out.push_back(static_cast<char>(kCheckpointVersion));
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(text.size()));
  out += text;
  out.reserve(out.size() + params.total_size() * sizeof(double));
  for (std::size_t i = 0; i < params.count(); ++i) {
    for (double v : params.value_at(i).values()) put_le<double>(out, v);
  }
  return out;
}

Checkpoint deserialize_checkpoint(const std::string& bytes) {
  constexpr std::size_t prefix = sizeof kMagic + 1 + 4;
  if (bytes.size() < prefix || std::memcmp(bytes.data(), kMagic, sizeof kMagic) != 0) {
    throw ConfigError("checkpoint: bad magic");
  }
  const auto version = static_cast<std::uint8_t>(bytes[sizeof kMagic]);
  if (version != kCheckpointVersion) {
    throw ConfigError("checkpoint: unsupported format version " + std::to_string(version));
  }
  const std::size_t header_len = get_le<std::uint32_t>(bytes, sizeof kMagic + 1);
  if (bytes.size() < prefix + header_len) throw ConfigError("checkpoint: truncated header");

  json header;
  try {
    header = json::parse(bytes.substr(prefix, header_len));
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("checkpoint: corrupt header: ") + e.what());
  }

  Checkpoint ckpt;
  try {
    ckpt.config = config_from_json(header.at("config"));
    ckpt.epoch = header.at("epoch").get<std::size_t>();
    ckpt.rng_state = header.at("rng_state").get<std::string>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("checkpoint: corrupt header: ") + e.what());
  }
  ckpt.config.model.validate();
  ckpt.model = make_model(ckpt.config.model, 0);
  ParamStore& params = ckpt.model.params;

  const json& table = header.at("params");
  if (!table.is_array() || table.size() != params.count()) {
    throw ShapeError("checkpoint: parameter table lists " + std::to_string(table.size()) + " tensors, config implies " +
                     std::to_string(params.count()));
  }
  std::size_t offset = prefix + header_len;
  for (std::size_t i = 0; i < params.count(); ++i) {
    const std::string name = table[i].at("name").get<std::string>();
    const Shape shape = table[i].at("shape").get<Shape>();
    if (name != params.names()[i] || shape != params.value_at(i).shape()) {
      throw ShapeError("checkpoint: entry " + std::to_string(i) + " is " + name + " " + shape_str(shape) +
                       ", config implies " + params.names()[i] + " " + shape_str(params.value_at(i).shape()));
    }
    Tensor& value = params.value_at(i);
    if (bytes.size() < offset + value.size() * sizeof(double)) throw ConfigError("checkpoint: truncated payload");
    for (auto& v : value.values()) {
      v = get_le<double>(bytes, offset);
      offset += sizeof(double);
    }
  }
  if (offset != bytes.size()) throw ConfigError("checkpoint: trailing bytes after payload");
  return ckpt;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  write_text_file(path, serialize_checkpoint(ckpt));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open checkpoint '" + path.string() + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  try {
    return deserialize_checkpoint(buf.str());
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

}  // namespace hoigraph
