#include "dfwi/nn/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <json.hpp>

namespace dfwi::nn {
inline namespace DFWI_NN_ABI {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

template <typename T>
void put(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& is, const std::string& path) {
  T v{};
  if (!is.read(reinterpret_cast<char*>(&v), sizeof(T))) throw NnError("checkpoint " + path + ": truncated");
  return v;
}

}  // namespace

void save_checkpoint(const std::string& path, const Denoiser& net, const std::string& meta_json) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw NnError("cannot write checkpoint " + path);
  nlohmann::json header;
  header["architecture"] = nlohmann::json::parse(to_json(net.architecture()));
  header["meta"] = nlohmann::json::parse(meta_json);
  const std::string text = header.dump();
  os.write("DFWI", 4);
  put<std::uint32_t>(os, kCheckpointVersion);
  put<std::uint32_t>(os, static_cast<std::uint32_t>(text.size()));
  os.write(text.data(), static_cast<std::streamsize>(text.size()));
  const auto& store = net.params();
  put<std::uint32_t>(os, static_cast<std::uint32_t>(store.segments().size()));
  for (std::size_t i = 0; i < store.segments().size(); ++i) {
    const auto& seg = store.segment(static_cast<int>(i));
    put<std::uint32_t>(os, static_cast<std::uint32_t>(seg.name.size()));
    os.write(seg.name.data(), static_cast<std::streamsize>(seg.name.size()));
    put<std::uint64_t>(os, seg.size);
    for (Real v : store.values(static_cast<int>(i))) put<float>(os, static_cast<float>(v));
  }
  if (!os) throw NnError("failed writing checkpoint " + path);
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw NnError("cannot open checkpoint " + path);
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, "DFWI", 4) != 0) throw NnError("checkpoint " + path + ": bad magic");
  const auto version = get<std::uint32_t>(is, path);
  if (version != kCheckpointVersion) {
    throw NnError("checkpoint " + path + ": unsupported version " + std::to_string(version));
  }
  const auto hlen = get<std::uint32_t>(is, path);
  std::string text(hlen, '\0');
  if (!is.read(text.data(), hlen)) throw NnError("checkpoint " + path + ": truncated header");
  const auto header = nlohmann::json::parse(text);

  LoadedCheckpoint out{Denoiser(architecture_from_json(header.at("architecture").dump()), 0),
                       header.value("meta", nlohmann::json::object()).dump()};
  auto& store = out.net.params();
  const auto nseg = get<std::uint32_t>(is, path);
  if (nseg != store.segments().size()) {
    throw NnError("checkpoint " + path + ": " + std::to_string(nseg) + " segments, architecture defines " +
                  std::to_string(store.segments().size()));
  }
  for (std::uint32_t s = 0; s < nseg; ++s) {
    const auto nlen = get<std::uint32_t>(is, path);
    std::string name(nlen, '\0');
    if (!is.read(name.data(), nlen)) throw NnError("checkpoint " + path + ": truncated segment name");
    const int idx = store.find(name);
    if (idx < 0) throw NnError("checkpoint " + path + ": unknown segment " + name);
    const auto count = get<std::uint64_t>(is, path);
    auto vals = store.values(idx);
    if (count != vals.size()) throw NnError("checkpoint " + path + ": size mismatch for " + name);
    for (auto& v : vals) v = static_cast<Real>(get<float>(is, path));
  }
  return out;
}

}  // namespace DFWI_NN_ABI
}  // namespace dfwi::nn
