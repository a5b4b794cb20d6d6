#pragma once

#include <stdexcept>
#include <string>

#include "dfwi/acoustic.hpp"
#include "dfwi/fields.hpp"

namespace dfwi {

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raw field file: little-endian float32, row-major, plus a JSON sidecar
/// {"nx","nz","dx","dz","kind"} at the same path with extension ".json".
std::string sidecar_path(const std::string& data_path);

void write_field(const std::string& path, const Field2D& f, const std::string& kind);

struct FieldFile {
  Field2D field;
  std::string kind;
};

FieldFile read_field(const std::string& path);

void write_gradient(const std::string& path, const Field2D& g);

/// Gather file: little-endian float32 receiver-major matrix plus sidecar
/// {"nt","dt","source_x","receiver_xs"}.
void write_gather(const std::string& path, const ShotGather& g);
ShotGather read_gather(const std::string& path);

/// Whole-file helpers shared by the CLI and tests.
std::string read_text(const std::string& path);
void write_text(const std::string& path, const std::string& text);

/// Creates a directory and its parents; no-op when it exists.
void ensure_directory(const std::string& path);

}  // namespace dfwi
