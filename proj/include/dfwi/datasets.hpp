#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "dfwi/acoustic.hpp"
#include "dfwi/fields.hpp"

namespace dfwi {

enum class Family { flat_vel, curve_vel, flat_fault, curve_fault };
enum class Variant { A, B };

/// Generator parameters for one synthetic model family.
struct FamilySpec {
  Family family = Family::flat_vel;
  Variant variant = Variant::A;
  int layers_min = 2;
  int layers_max = 4;
  double v_lo = 1500.0;
  double v_hi = 4000.0;
  double min_contrast = 150.0;  // m/s between adjacent layers
  double curvature = 0.0;       // interface undulation amplitude, cells
  int throw_min = 0;            // fault displacement, cells
  int throw_max = 0;
  std::uint64_t seed = 0;       // family-level seed mixed into each sample seed

  std::string name() const;  // e.g. "FlatVel-A"
  void validate(ValueRange global) const;
};

/// The eight families with defaults inside the global velocity bounds.
std::vector<FamilySpec> default_family_specs();
FamilySpec family_spec(const std::string& name);

inline constexpr ValueRange kCorpusVelocityBounds{1500.0, 4500.0};

/// 64x64 model on a 10 m grid unless another grid is given.
VelocityModel synth_model(const FamilySpec& spec, std::uint64_t seed, GridSpec grid = {64, 64, 10.0, 10.0});

/// Seed of sample i of a family; held-out models use a disjoint stream.
std::uint64_t sample_seed(std::uint64_t corpus_seed, const FamilySpec& spec, int index);
std::uint64_t heldout_seed(std::uint64_t seed, const FamilySpec& spec, int index);

struct CorpusEntry {
  std::string family;
  int index = 0;
  std::uint64_t seed = 0;
  VelocityModel velocity;
  DensityModel density;
};

struct Corpus {
  std::vector<FamilySpec> specs;
  std::uint64_t seed = 0;
  int n_per_family = 0;
  ValueRange velocity_bounds = kCorpusVelocityBounds;
  ValueRange density_bounds;
  std::vector<CorpusEntry> entries;
};

Corpus build_corpus(const std::vector<FamilySpec>& specs, int n_per_family, std::uint64_t seed,
                    ValueRange bounds = kCorpusVelocityBounds);

/// Layout: manifest.json plus <family>/<index>_vel.bin and <index>_rho.bin with sidecars.
void write_corpus(const std::string& dir, const Corpus& c);
/// Reads the manifest and every referenced field; throws on any mismatch.
Corpus read_corpus(const std::string& dir);
/// Checksum of the normalization bounds as stored in manifests and checkpoints.
std::string bounds_checksum(ValueRange v);

/// Native raw+JSON field or a little-endian float32 C-order array container
/// (2D, or 3D read as a stack of 2D models). Container files carry no
/// spacing, so `spacing` is applied to both axes.
std::vector<VelocityModel> load_field_stack(const std::string& path, double spacing = 10.0);
VelocityModel load_field_file(const std::string& path, double spacing = 10.0);

/// Writes the array-container format (float32, C order) for 2D fields.
void write_array_container(const std::string& path, const Field2D& f);

/// Additive white noise scaled so that 10 log10(P_signal / P_noise) = snr_db exactly.
ShotGather add_gaussian_noise(const ShotGather& g, double snr_db, std::uint64_t seed, bool enabled = true);
Gathers add_gaussian_noise(const Gathers& gs, double snr_db, std::uint64_t seed, bool enabled = true);

/// Zero-phase 4th-order Butterworth high-pass (forward-backward).
std::vector<double> highpass(const std::vector<double>& trace, double dt, double fc);
ShotGather highpass(const ShotGather& g, double fc = 3.0);
Gathers highpass(const Gathers& gs, double fc = 3.0);

struct ShotSelection {
  AcquisitionGeometry geometry;
  std::vector<double> requested;  // positions as given
  std::vector<double> snapped;    // cell-centred positions actually used
};

/// Sources at the nearest cells to the listed positions; receivers unchanged.
ShotSelection select_shots(const AcquisitionGeometry& geom, const GridSpec& grid, const std::vector<double>& positions_m);

/// Window [iz0, iz0 + nz) x [ix0, ix0 + nx), then integer decimation with
/// anti-alias smoothing. Output has ceil(n / factor) cells per axis.
VelocityModel crop_resample(const VelocityModel& m, int iz0, int ix0, int nz, int nx, int factor);

/// Bilinear resampling onto another grid covering the same physical extent.
Field2D resample_bilinear(const Field2D& f, int nz, int nx);

}  // namespace dfwi
