#include "dfwi/io.hpp"

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <sstream>

namespace dfwi {

static_assert(std::endian::native == std::endian::little, "raw formats assume a little-endian host");

namespace {

namespace fs = std::filesystem;

void write_f32(const std::string& path, const std::vector<double>& values) {
  std::vector<float> buf(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) buf[i] = static_cast<float>(values[i]);
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open " + path + " for writing");
  os.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size() * sizeof(float)));
  if (!os) throw IoError("write failed: " + path);
}

std::vector<double> read_f32(const std::string& path, std::size_t expected) {
  std::ifstream is(path, std::ios::binary | std::ios::ate);
  if (!is) throw IoError("cannot open " + path);
  const auto bytes = static_cast<std::size_t>(is.tellg());
  if (bytes != expected * sizeof(float)) {
    throw IoError(path + ": " + std::to_string(bytes) + " bytes, sidecar implies " +
                  std::to_string(expected * sizeof(float)));
  }
  is.seekg(0);
  std::vector<float> buf(expected);
  is.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(bytes));
  return {buf.begin(), buf.end()};
}

nlohmann::json read_json(const std::string& path) {
  try {
    return nlohmann::json::parse(read_text(path));
  } catch (const nlohmann::json::exception& e) {
    throw IoError(path + ": malformed JSON sidecar (" + e.what() + ")");
  }
}

}  // namespace

std::string sidecar_path(const std::string& data_path) {
  return fs::path(data_path).replace_extension(".json").string();
}

std::string read_text(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open " + path + " for writing");
  os << text;
  if (!os) throw IoError("write failed: " + path);
}

void ensure_directory(const std::string& path) {
  std::error_code ec;
  fs::create_directories(path, ec);
  if (ec) throw IoError("cannot create directory " + path + ": " + ec.message());
}

void write_field(const std::string& path, const Field2D& f, const std::string& kind) {
  if (sidecar_path(path) == path) throw IoError("field data path must not end in .json: " + path);
  write_f32(path, f.data);
  nlohmann::json j;
  j["nx"] = f.grid.nx;
  j["nz"] = f.grid.nz;
  j["dx"] = f.grid.dx;
  j["dz"] = f.grid.dz;
  j["kind"] = kind;
  write_text(sidecar_path(path), j.dump(2) + "\n");
}

FieldFile read_field(const std::string& path) {
  const auto j = read_json(sidecar_path(path));
  GridSpec g;
  try {
    g.nx = j.at("nx").get<int>();
    g.nz = j.at("nz").get<int>();
    g.dx = j.at("dx").get<double>();
    g.dz = j.at("dz").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw IoError(sidecar_path(path) + ": missing grid key (" + e.what() + ")");
  }
  g.validate();
  FieldFile out;
  out.kind = j.value("kind", std::string("velocity"));
  out.field = Field2D(g, read_f32(path, g.size()));
  return out;
}

void write_gradient(const std::string& path, const Field2D& g) { write_field(path, g, "gradient"); }

void write_gather(const std::string& path, const ShotGather& g) {
  write_f32(path, g.data);
  nlohmann::json j;
  j["nt"] = g.nt;
  j["dt"] = g.dt;
  j["source_x"] = g.source_position;
  j["receiver_xs"] = g.receiver_positions;
  write_text(sidecar_path(path), j.dump(2) + "\n");
}

ShotGather read_gather(const std::string& path) {
  const auto j = read_json(sidecar_path(path));
  ShotGather g;
  g.nt = j.at("nt").get<int>();
  g.dt = j.at("dt").get<double>();
  g.source_position = j.at("source_x").get<double>();
  g.receiver_positions = j.at("receiver_xs").get<std::vector<double>>();
  g.data = read_f32(path, static_cast<std::size_t>(g.nt) * g.receiver_positions.size());
  return g;
}

}  // namespace dfwi
