#include "wisa/physmodule/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <vector>

#include "wisa/errors.hpp"

namespace wisa::physmodule {

namespace {

constexpr char kMagic[8] = {'W', 'I', 'S', 'A', 'C', 'K', 'P', 'T'};

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

struct Parsed {
  nlohmann::json header;
  std::uint64_t data_start = 0;
};

Parsed read_header(std::ifstream& in, const std::filesystem::path& path) {
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, kMagic, 8) != 0) throw ParseError(path.string(), "not a checkpoint file");
  std::uint64_t len = 0;
  in.read(reinterpret_cast<char*>(&len), sizeof len);
  if (!in || len > (1u << 30)) throw ParseError(path.string(), "bad header length");
  std::string text(len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(len));
  if (!in) throw ParseError(path.string(), "truncated header");
  Parsed p;
  try {
    p.header = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path.string(), std::string("header is not JSON: ") + e.what());
  }
  p.data_start = 16 + len;
  return p;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const numcore::ParameterSet& params,
                     const nlohmann::json& metadata) {
  nlohmann::json tensors = nlohmann::json::array();
  std::uint64_t offset = 0;
  for (const auto& p : params) {
    tensors.push_back({{"name", p.name}, {"shape", p.value.shape()}, {"offset", offset}, {"trainable", p.trainable}});
    offset += p.value.size() * sizeof(double);
  }
  const nlohmann::json header = {{"metadata", metadata}, {"tensors", tensors}};
  const std::string text = header.dump();

  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write checkpoint " + path.string());
  const std::uint64_t len = text.size();
  out.write(kMagic, 8);
  out.write(reinterpret_cast<const char*>(&len), sizeof len);
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto& p : params) {
    const auto data = p.value.data();
    out.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size() * sizeof(double)));
  }
  if (!out) throw IoError("failed writing checkpoint " + path.string());
}

nlohmann::json read_checkpoint_header(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  return read_header(in, path).header;
}

nlohmann::json load_checkpoint(const std::filesystem::path& path, numcore::ParameterSet& params) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  const Parsed p = read_header(in, path);
  const auto& tensors = p.header.at("tensors");
  std::vector<bool> seen(params.size(), false);
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    const auto& t = tensors[i];
    const std::string where = "$.tensors[" + std::to_string(i) + "]";
    const std::string name = t.at("name").get<std::string>();
    const auto idx = params.find(name);
    if (!idx) throw ParseError(path.string(), where + ": unknown parameter '" + name + "'");
    auto& param = params[*idx];
    const auto shape = t.at("shape").get<numcore::Shape>();
    if (shape != param.value.shape())
      throw ParseError(path.string(), where + ": shape " + numcore::shape_to_string(shape) + " does not match model " +
                                          numcore::shape_to_string(param.value.shape()));
    in.seekg(static_cast<std::streamoff>(p.data_start + t.at("offset").get<std::uint64_t>()));
    std::vector<double> buf(param.value.size());
    in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size() * sizeof(double)));
    if (!in) throw ParseError(path.string(), where + ": truncated data");
    std::copy(buf.begin(), buf.end(), param.value.data().begin());
    param.trainable = t.at("trainable").get<bool>();
    seen[*idx] = true;
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!seen[i]) throw ParseError(path.string(), "missing parameter '" + params[i].name + "'");
  }
  return p.header.at("metadata");
}

}  // namespace wisa::physmodule
