#pragma once

#include <filesystem>
#include <string>

#include "qnm/medium.hpp"

namespace qnm {

/// On-disk structure: {"bounds": [b1, b2], "breakpoints": [...], "values": [...]}.
struct StructureFile {
  AdmissibleBounds bounds;
  PiecewiseStructure structure;
};

/// Parse from JSON text. Throws InvalidArgument on malformed input or values outside the bounds.
StructureFile parse_structure(const std::string& text);
std::string dump_structure(const StructureFile& file);

StructureFile read_structure(const std::filesystem::path& path);
/// Writes through a temporary file and renames it into place.
void write_structure(const std::filesystem::path& path, const StructureFile& file);

/// Write text atomically (temp file + rename).
void write_text_atomic(const std::filesystem::path& path, const std::string& text);

}  // namespace qnm
