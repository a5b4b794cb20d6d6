#include "dfwi/datasets.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <complex>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <json.hpp>
#include <numbers>
#include <random>
#include <sstream>

#include "dfwi/io.hpp"

namespace dfwi {

namespace {

std::uint64_t mix(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

std::uint64_t family_tag(const FamilySpec& s) {
  return static_cast<std::uint64_t>(s.family) * 2 + static_cast<std::uint64_t>(s.variant) + 1;
}

const char* family_base(Family f) {
  switch (f) {
    case Family::flat_vel: return "FlatVel";
    case Family::curve_vel: return "CurveVel";
    case Family::flat_fault: return "FlatFault";
    case Family::curve_fault: return "CurveFault";
  }
  return "?";
}

bool is_curved(Family f) { return f == Family::curve_vel || f == Family::curve_fault; }
bool is_faulted(Family f) { return f == Family::flat_fault || f == Family::curve_fault; }

std::vector<double> layer_velocities(const FamilySpec& s, int n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(s.v_lo, s.v_hi);
  const double span = s.v_hi - s.v_lo;
  const double contrast = std::min(s.min_contrast, span / std::max(1, n - 1));
  std::vector<double> v(n);
  for (int attempt = 0;; ++attempt) {
    for (auto& x : v) x = u(rng);
    std::sort(v.begin(), v.end());
    bool ok = true;
    for (int i = 1; i < n; ++i) ok = ok && v[i] - v[i - 1] >= contrast;
    if (ok) break;
    if (attempt > 200) {
      for (int i = 0; i < n; ++i) v[i] = s.v_lo + span * (i + 0.5) / n;
      break;
    }
  }
  if (s.variant == Variant::B && n > 2) {
    // occasional low-velocity layer: swap one adjacent pair below the top layer
    std::uniform_real_distribution<double> coin(0.0, 1.0);
    if (coin(rng) < 0.3) {
      std::uniform_int_distribution<int> at(1, n - 2);
      const int i = at(rng);
      std::swap(v[i], v[i + 1]);
    }
  }
  return v;
}

std::vector<double> interface_depths(int n_interfaces, int nz, std::mt19937_64& rng) {
  const double top = 0.12 * nz, bottom = 0.92 * nz;
  const double min_gap = std::max(3.0, 0.5 * (bottom - top) / (n_interfaces + 1));
  std::uniform_real_distribution<double> u(top, bottom);
  std::vector<double> d(n_interfaces);
  for (int attempt = 0;; ++attempt) {
    for (auto& x : d) x = u(rng);
    std::sort(d.begin(), d.end());
    bool ok = true;
    for (int i = 1; i < n_interfaces; ++i) ok = ok && d[i] - d[i - 1] >= min_gap;
    if (ok || attempt > 500) break;
  }
  return d;
}

std::string fnv_hex(const std::string& s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

nlohmann::json spec_json(const FamilySpec& s) {
  return {{"family", s.name()},   {"layers", {s.layers_min, s.layers_max}},
          {"velocity", {s.v_lo, s.v_hi}}, {"min_contrast", s.min_contrast},
          {"curvature", s.curvature}, {"throw", {s.throw_min, s.throw_max}},
          {"seed", s.seed}};
}

FamilySpec spec_from_json(const nlohmann::json& j) {
  FamilySpec s = family_spec(j.at("family").get<std::string>());
  s.layers_min = j.at("layers").at(0).get<int>();
  s.layers_max = j.at("layers").at(1).get<int>();
  s.v_lo = j.at("velocity").at(0).get<double>();
  s.v_hi = j.at("velocity").at(1).get<double>();
  s.min_contrast = j.at("min_contrast").get<double>();
  s.curvature = j.at("curvature").get<double>();
  s.throw_min = j.at("throw").at(0).get<int>();
  s.throw_max = j.at("throw").at(1).get<int>();
  s.seed = j.at("seed").get<std::uint64_t>();
  return s;
}

std::string sample_stem(const CorpusEntry& e) {
  std::ostringstream os;
  os << e.family << '/' << std::setw(4) << std::setfill('0') << e.index;
  return os.str();
}

// Butterworth high-pass as second-order sections (b0 b1 b2 a1 a2), bilinear
// transform with prewarping.
std::vector<std::array<double, 5>> butter_highpass(int order, double fc, double fs) {
  const double K = 2.0 * fs;
  const double wc = K * std::tan(std::numbers::pi * fc / fs);
  std::vector<std::array<double, 5>> sos;
  for (int k = 0; k < order / 2; ++k) {
    const double theta = std::numbers::pi * (2.0 * k + 1.0 + order) / (2.0 * order);
    const double q = -2.0 * std::cos(theta);  // s^2 + q s + 1 prototype factor
    const double a0 = K * K + q * wc * K + wc * wc;
    sos.push_back({K * K / a0, -2.0 * K * K / a0, K * K / a0, (2.0 * wc * wc - 2.0 * K * K) / a0,
                   (K * K - q * wc * K + wc * wc) / a0});
  }
  return sos;
}

// Transposed direct form II, state initialized to the steady state of a
// constant input equal to x[0].
void sos_filter(const std::vector<std::array<double, 5>>& sos, std::vector<double>& x) {
  if (x.empty()) return;
  double level = x[0];
  for (const auto& c : sos) {
    const double gain = (c[0] + c[1] + c[2]) / (1.0 + c[3] + c[4]);
    const double y_ss = gain * level;
    double z2 = c[2] * level - c[4] * y_ss;
    double z1 = y_ss - c[0] * level;
    for (auto& v : x) {
      const double in = v;
      const double y = c[0] * in + z1;
      z1 = c[1] * in - c[3] * y + z2;
      z2 = c[2] * in - c[4] * y;
      v = y;
    }
    level = y_ss;
  }
}

}  // namespace

std::string FamilySpec::name() const { return std::string(family_base(family)) + (variant == Variant::A ? "-A" : "-B"); }

void FamilySpec::validate(ValueRange global) const {
  if (layers_min < 2 || layers_max < layers_min) throw FieldError(name() + ": layer range must satisfy 2 <= min <= max");
  if (!(v_lo < v_hi) || v_lo < global.lo || v_hi > global.hi) {
    throw FieldError(name() + ": velocity range outside the corpus bounds");
  }
  if (curvature < 0.0 || throw_min < 0 || throw_max < throw_min) throw FieldError(name() + ": invalid shape parameters");
}

std::vector<FamilySpec> default_family_specs() {
  std::vector<FamilySpec> out;
  for (Family f : {Family::flat_vel, Family::curve_vel, Family::flat_fault, Family::curve_fault}) {
    for (Variant v : {Variant::A, Variant::B}) {
      FamilySpec s;
      s.family = f;
      s.variant = v;
      const bool b = v == Variant::B;
      s.layers_min = b ? 4 : 2;
      s.layers_max = b ? 7 : 4;
      s.v_lo = 1500.0;
      s.v_hi = b ? 4500.0 : 4000.0;
      s.min_contrast = b ? 300.0 : 150.0;
      s.curvature = is_curved(f) ? (b ? 7.0 : 4.0) : 0.0;
      s.throw_min = is_faulted(f) ? (b ? 8 : 4) : 0;
      s.throw_max = is_faulted(f) ? (b ? 16 : 10) : 0;
      s.seed = family_tag(s);
      out.push_back(s);
    }
  }
  return out;
}

FamilySpec family_spec(const std::string& name) {
  for (const auto& s : default_family_specs()) {
    if (s.name() == name) return s;
  }
  throw FieldError("unknown model family '" + name + "'");
}

std::uint64_t sample_seed(std::uint64_t corpus_seed, const FamilySpec& spec, int index) {
  return mix(mix(mix(corpus_seed) ^ spec.seed) ^ static_cast<std::uint64_t>(index));
}

std::uint64_t heldout_seed(std::uint64_t seed, const FamilySpec& spec, int index) {
  return mix(sample_seed(seed, spec, index) ^ 0x68656C646F7574ULL);
}

VelocityModel synth_model(const FamilySpec& spec, std::uint64_t seed, GridSpec grid) {
  grid.validate();
  std::mt19937_64 rng(mix(seed ^ family_tag(spec)));
  std::uniform_int_distribution<int> nl(spec.layers_min, spec.layers_max);
  const int n_layers = nl(rng);
  const auto v = layer_velocities(spec, n_layers, rng);
  const auto depth = interface_depths(n_layers - 1, grid.nz, rng);

  std::uniform_real_distribution<double> u01(0.0, 1.0);
  double amp = 0.0, wavelength = 1.0, phase = 0.0;
  if (is_curved(spec.family) && spec.curvature > 0.0) {
    amp = spec.curvature * (0.4 + 0.6 * u01(rng));
    wavelength = grid.nx * (0.6 + 1.2 * u01(rng));
    phase = 2.0 * std::numbers::pi * u01(rng);
  }
  auto layered = [&](double z, double x) {
    const double shift = amp * std::sin(2.0 * std::numbers::pi * x / wavelength + phase);
    int layer = 0;
    for (double d : depth) {
      if (z >= d + shift) ++layer;
    }
    return v[layer];
  };

  double fault_x = 0.0, fault_slope = 0.0;
  int throw_cells = 0;
  if (is_faulted(spec.family)) {
    fault_x = grid.nx * (0.25 + 0.5 * u01(rng));
    const double dip = (60.0 + 25.0 * u01(rng)) * std::numbers::pi / 180.0;
    fault_slope = (u01(rng) < 0.5 ? -1.0 : 1.0) / std::tan(dip);
    std::uniform_int_distribution<int> th(spec.throw_min, spec.throw_max);
    throw_cells = th(rng);
  }

  VelocityModel m(grid);
  for (int iz = 0; iz < grid.nz; ++iz) {
    for (int ix = 0; ix < grid.nx; ++ix) {
      double z = iz;
      if (throw_cells > 0 && ix >= fault_x + fault_slope * iz) z = std::max(0.0, z - throw_cells);
      m.at(iz, ix) = layered(z, ix);
    }
  }
  return m;
}

Corpus build_corpus(const std::vector<FamilySpec>& specs, int n_per_family, std::uint64_t seed, ValueRange bounds) {
  if (n_per_family < 1) throw FieldError("corpus needs at least one sample per family");
  if (specs.empty()) throw FieldError("corpus needs at least one family");
  Corpus c;
  c.specs = specs;
  c.seed = seed;
  c.n_per_family = n_per_family;
  c.velocity_bounds = bounds;
  c.density_bounds = gardner_range(bounds);
  for (const auto& spec : specs) {
    spec.validate(bounds);
    for (int i = 0; i < n_per_family; ++i) {
      CorpusEntry e;
      e.family = spec.name();
      e.index = i;
      e.seed = sample_seed(seed, spec, i);
      e.velocity = synth_model(spec, e.seed);
      e.density = gardner_density(e.velocity);
      c.entries.push_back(std::move(e));
    }
  }
  return c;
}

std::string bounds_checksum(ValueRange v) {
  std::ostringstream os;
  os << std::setprecision(17) << v.lo << ',' << v.hi;
  return fnv_hex(os.str());
}

void write_corpus(const std::string& dir, const Corpus& c) {
  namespace fs = std::filesystem;
  ensure_directory(dir);
  nlohmann::json j;
  j["format"] = "dfwi-corpus";
  j["version"] = 1;
  j["seed"] = c.seed;
  j["n_per_family"] = c.n_per_family;
  j["count"] = c.entries.size();
  j["velocity_bounds"] = {c.velocity_bounds.lo, c.velocity_bounds.hi};
  j["density_bounds"] = {c.density_bounds.lo, c.density_bounds.hi};
  j["bounds_checksum"] = bounds_checksum(c.velocity_bounds);
  j["gardner"] = {{"a", kGardnerA}, {"b", kGardnerB}};
  j["specs"] = nlohmann::json::array();
  for (const auto& s : c.specs) j["specs"].push_back(spec_json(s));
  j["samples"] = nlohmann::json::array();
  for (const auto& e : c.entries) {
    const std::string stem = sample_stem(e);
    ensure_directory((fs::path(dir) / e.family).string());
    write_field((fs::path(dir) / (stem + "_vel.bin")).string(), e.velocity, "velocity");
    write_field((fs::path(dir) / (stem + "_rho.bin")).string(), e.density, "density");
    j["samples"].push_back({{"family", e.family},
                            {"index", e.index},
                            {"seed", e.seed},
                            {"velocity", stem + "_vel.bin"},
                            {"density", stem + "_rho.bin"},
                            {"v_min", e.velocity.min()},
                            {"v_max", e.velocity.max()}});
  }
  write_text((fs::path(dir) / "manifest.json").string(), j.dump(1) + "\n");
}

Corpus read_corpus(const std::string& dir) {
  namespace fs = std::filesystem;
  const auto manifest = (fs::path(dir) / "manifest.json").string();
  if (!fs::exists(manifest)) throw IoError("no corpus manifest at " + manifest);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_text(manifest));
  } catch (const nlohmann::json::exception& e) {
    throw IoError(manifest + ": " + e.what());
  }
  if (j.value("format", "") != "dfwi-corpus") throw IoError(manifest + ": not a corpus manifest");
  Corpus c;
  c.seed = j.at("seed").get<std::uint64_t>();
  c.n_per_family = j.at("n_per_family").get<int>();
  c.velocity_bounds = {j.at("velocity_bounds").at(0).get<double>(), j.at("velocity_bounds").at(1).get<double>()};
  c.density_bounds = {j.at("density_bounds").at(0).get<double>(), j.at("density_bounds").at(1).get<double>()};
  if (j.at("bounds_checksum").get<std::string>() != bounds_checksum(c.velocity_bounds)) {
    throw IoError(manifest + ": bounds checksum mismatch");
  }
  for (const auto& s : j.at("specs")) c.specs.push_back(spec_from_json(s));
  for (const auto& s : j.at("samples")) {
    CorpusEntry e;
    e.family = s.at("family").get<std::string>();
    e.index = s.at("index").get<int>();
    e.seed = s.at("seed").get<std::uint64_t>();
    auto vf = read_field((fs::path(dir) / s.at("velocity").get<std::string>()).string());
    auto rf = read_field((fs::path(dir) / s.at("density").get<std::string>()).string());
    e.velocity = VelocityModel(vf.field.grid, std::move(vf.field.data));
    e.density = DensityModel(rf.field.grid, std::move(rf.field.data));
    if (!(e.velocity.grid == e.density.grid)) throw IoError("corpus sample " + e.family + " has mismatched grids");
    c.entries.push_back(std::move(e));
  }
  if (c.entries.size() != j.at("count").get<std::size_t>()) throw IoError(manifest + ": sample count mismatch");
  return c;
}

std::vector<VelocityModel> load_field_stack(const std::string& path, double spacing) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path);
  char magic[6] = {};
  is.read(magic, 6);
  const bool container = is.gcount() == 6 && static_cast<unsigned char>(magic[0]) == 0x93 &&
                         std::memcmp(magic + 1, "NUMPY", 5) == 0;
  if (!container) {
    if (!std::filesystem::exists(sidecar_path(path))) {
      throw IoError(path + ": neither an array container (bad magic) nor a raw field with a JSON sidecar");
    }
    auto f = read_field(path);
    VelocityModel m(f.field.grid, std::move(f.field.data));
    m.validate();
    return {m};
  }
  unsigned char ver[2];
  is.read(reinterpret_cast<char*>(ver), 2);
  if (ver[0] != 1 || ver[1] != 0) {
    throw IoError(path + ": unsupported container version " + std::to_string(ver[0]) + "." + std::to_string(ver[1]) +
                  " (expected 1.0)");
  }
  unsigned char hl[2];
  is.read(reinterpret_cast<char*>(hl), 2);
  const std::size_t header_len = hl[0] | (static_cast<std::size_t>(hl[1]) << 8);
  std::string header(header_len, '\0');
  is.read(header.data(), static_cast<std::streamsize>(header_len));
  if (static_cast<std::size_t>(is.gcount()) != header_len) throw IoError(path + ": truncated header");

  auto value_of = [&](const std::string& key) -> std::string {
    const auto k = header.find("'" + key + "'");
    if (k == std::string::npos) throw IoError(path + ": header lacks '" + key + "'");
    auto p = header.find(':', k);
    if (p == std::string::npos) throw IoError(path + ": malformed header near '" + key + "'");
    ++p;
    while (p < header.size() && header[p] == ' ') ++p;
    if (header[p] == '\'') {
      const auto e = header.find('\'', p + 1);
      return header.substr(p + 1, e - p - 1);
    }
    if (header[p] == '(') {
      const auto e = header.find(')', p);
      return header.substr(p + 1, e - p - 1);
    }
    auto e = header.find_first_of(",}", p);
    return header.substr(p, e - p);
  };
  const std::string descr = value_of("descr");
  if (descr != "<f4") throw IoError(path + ": unsupported dtype '" + descr + "' (expected '<f4')");
  if (value_of("fortran_order").find("False") == std::string::npos) {
    throw IoError(path + ": Fortran-ordered arrays are not supported (expected C order)");
  }
  std::vector<long> dims;
  std::stringstream ss(value_of("shape"));
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    const auto a = tok.find_first_not_of(' ');
    if (a == std::string::npos) continue;
    dims.push_back(std::stol(tok.substr(a)));
  }
  if (dims.size() != 2 && dims.size() != 3) {
    throw IoError(path + ": expected a 2D or 3D array, got " + std::to_string(dims.size()) + " dimensions");
  }
  const long n_models = dims.size() == 3 ? dims[0] : 1;
  const long nz = dims[dims.size() - 2], nx = dims[dims.size() - 1];
  const std::size_t count = static_cast<std::size_t>(n_models * nz * nx);
  std::vector<float> buf(count);
  is.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(count * sizeof(float)));
  if (static_cast<std::size_t>(is.gcount()) != count * sizeof(float)) {
    throw IoError(path + ": data section shorter than shape implies");
  }
  GridSpec g{static_cast<int>(nx), static_cast<int>(nz), spacing, spacing};
  g.validate();
  std::vector<VelocityModel> out;
  for (long k = 0; k < n_models; ++k) {
    const auto first = buf.begin() + k * nz * nx;
    VelocityModel m(g, std::vector<double>(first, first + nz * nx));
    m.validate();
    out.push_back(std::move(m));
  }
  return out;
}

VelocityModel load_field_file(const std::string& path, double spacing) { return load_field_stack(path, spacing).at(0); }

void write_array_container(const std::string& path, const Field2D& f) {
  std::string header = "{'descr': '<f4', 'fortran_order': False, 'shape': (" + std::to_string(f.grid.nz) + ", " +
                       std::to_string(f.grid.nx) + "), }";
  const std::size_t total = 10 + header.size() + 1;
  header.append((64 - total % 64) % 64, ' ');
  header.push_back('\n');
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open " + path + " for writing");
  os.write("\x93NUMPY\x01\x00", 8);
  const auto len = static_cast<std::uint16_t>(header.size());
  os.put(static_cast<char>(len & 0xff));
  os.put(static_cast<char>(len >> 8));
  os << header;
  for (double v : f.data) {
    const float x = static_cast<float>(v);
    os.write(reinterpret_cast<const char*>(&x), sizeof x);
  }
}

ShotGather add_gaussian_noise(const ShotGather& g, double snr_db, std::uint64_t seed, bool enabled) {
  if (!enabled) return g;
  if (!std::isfinite(snr_db)) throw FieldError("SNR must be finite");
  double ps = 0.0;
  for (double v : g.data) ps += v * v;
  ps /= static_cast<double>(g.data.size());
  if (!(ps > 0.0)) throw FieldError("cannot add noise at a given SNR to a zero-power gather");
  std::mt19937_64 rng(mix(seed));
  std::normal_distribution<double> nd;
  std::vector<double> n(g.data.size());
  double pn = 0.0;
  for (auto& v : n) {
    v = nd(rng);
    pn += v * v;
  }
  pn /= static_cast<double>(n.size());
  const double scale = std::sqrt(ps / std::pow(10.0, snr_db / 10.0) / pn);
  ShotGather out = g;
  for (std::size_t i = 0; i < n.size(); ++i) out.data[i] += scale * n[i];
  return out;
}

Gathers add_gaussian_noise(const Gathers& gs, double snr_db, std::uint64_t seed, bool enabled) {
  Gathers out;
  for (std::size_t i = 0; i < gs.size(); ++i) out.push_back(add_gaussian_noise(gs[i], snr_db, mix(seed) ^ i, enabled));
  return out;
}

std::vector<double> highpass(const std::vector<double>& trace, double dt, double fc) {
  const double fs = 1.0 / dt;
  if (!(fc > 0.0) || fc >= 0.5 * fs) throw FieldError("high-pass corner must lie in (0, Nyquist)");
  const auto sos = butter_highpass(4, fc, fs);
  const int n = static_cast<int>(trace.size());
  if (n < 2) return trace;
  // odd extension at both ends limits edge transients
  const int pad = std::min(n - 1, static_cast<int>(std::lround(3.0 * fs / fc)));
  std::vector<double> x;
  x.reserve(n + 2 * pad);
  for (int i = pad; i >= 1; --i) x.push_back(2.0 * trace[0] - trace[i]);
  x.insert(x.end(), trace.begin(), trace.end());
  for (int i = 1; i <= pad; ++i) x.push_back(2.0 * trace[n - 1] - trace[n - 1 - i]);
  sos_filter(sos, x);
  std::reverse(x.begin(), x.end());
  sos_filter(sos, x);
  std::reverse(x.begin(), x.end());
  return {x.begin() + pad, x.begin() + pad + n};
}

ShotGather highpass(const ShotGather& g, double fc) {
  ShotGather out = g;
  for (int r = 0; r < g.n_receivers(); ++r) {
    const auto first = g.data.begin() + static_cast<std::ptrdiff_t>(r) * g.nt;
    const auto f = highpass(std::vector<double>(first, first + g.nt), g.dt, fc);
    std::copy(f.begin(), f.end(), out.data.begin() + static_cast<std::ptrdiff_t>(r) * g.nt);
  }
  return out;
}

Gathers highpass(const Gathers& gs, double fc) {
  Gathers out;
  for (const auto& g : gs) out.push_back(highpass(g, fc));
  return out;
}

ShotSelection select_shots(const AcquisitionGeometry& geom, const GridSpec& grid, const std::vector<double>& positions) {
  if (positions.empty()) throw FieldError("shot selection is empty");
  ShotSelection s;
  s.geometry = geom;
  s.geometry.source_positions.clear();
  s.requested = positions;
  for (double x : positions) {
    if (!(x >= 0.0 && x <= grid.width())) {
      throw FieldError("shot position " + std::to_string(x) + " m outside [0, " + std::to_string(grid.width()) + "] m");
    }
    const double snapped = std::round(x / grid.dx) * grid.dx;
    s.snapped.push_back(snapped);
    s.geometry.source_positions.push_back(snapped);
  }
  return s;
}

VelocityModel crop_resample(const VelocityModel& m, int iz0, int ix0, int nz, int nx, int factor) {
  if (factor < 1) throw FieldError("decimation factor must be >= 1");
  if (iz0 < 0 || ix0 < 0 || nz < 1 || nx < 1 || iz0 + nz > m.grid.nz || ix0 + nx > m.grid.nx) {
    throw FieldError("crop window [" + std::to_string(iz0) + "+" + std::to_string(nz) + ", " + std::to_string(ix0) + "+" +
                     std::to_string(nx) + "] outside " + std::to_string(m.grid.nz) + "x" + std::to_string(m.grid.nx));
  }
  VelocityModel w(GridSpec{nx, nz, m.grid.dx, m.grid.dz});
  for (int iz = 0; iz < nz; ++iz)
    for (int ix = 0; ix < nx; ++ix) w.at(iz, ix) = m.at(iz0 + iz, ix0 + ix);
  if (factor == 1) return w;
  const VelocityModel s = gaussian_smooth(w, 0.5 * factor);
  GridSpec g{(nx + factor - 1) / factor, (nz + factor - 1) / factor, m.grid.dx * factor, m.grid.dz * factor};
  VelocityModel out(g);
  for (int iz = 0; iz < g.nz; ++iz)
    for (int ix = 0; ix < g.nx; ++ix) out.at(iz, ix) = s.at(iz * factor, ix * factor);
  return out;
}

Field2D resample_bilinear(const Field2D& f, int nz, int nx) {
  if (nz < 2 || nx < 2) throw FieldError("resample target too small");
  GridSpec g{nx, nz, f.grid.width() / (nx - 1), f.grid.depth() / (nz - 1)};
  Field2D out(g);
  for (int iz = 0; iz < nz; ++iz) {
    const double z = iz * (f.grid.nz - 1.0) / (nz - 1.0);
    const int z0 = std::min(static_cast<int>(z), f.grid.nz - 2);
    const double wz = z - z0;
    for (int ix = 0; ix < nx; ++ix) {
      const double x = ix * (f.grid.nx - 1.0) / (nx - 1.0);
      const int x0 = std::min(static_cast<int>(x), f.grid.nx - 2);
      const double wx = x - x0;
      out.at(iz, ix) = (1 - wz) * ((1 - wx) * f.at(z0, x0) + wx * f.at(z0, x0 + 1)) +
                       wz * ((1 - wx) * f.at(z0 + 1, x0) + wx * f.at(z0 + 1, x0 + 1));
    }
  }
  return out;
}

}  // namespace dfwi
