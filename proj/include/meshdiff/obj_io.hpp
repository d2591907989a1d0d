#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include "meshdiff/mesh.hpp"

namespace meshdiff {

/// Parses Wavefront OBJ text. Reads `v` and `f` records only; polygons are
/// fan-triangulated from their first vertex and texture/normal slots of
/// `i/t/n` groups are discarded. Faces that repeat a vertex index are dropped.
Mesh parse_obj(std::string_view text);

/// Emits `v` records (shortest round-trippable decimals) then 1-based `f`
/// records, LF line endings.
std::string write_obj(const Mesh& mesh);

Mesh read_obj_file(const std::filesystem::path& path);
void write_obj_file(const std::filesystem::path& path, const Mesh& mesh);

}  // namespace meshdiff
