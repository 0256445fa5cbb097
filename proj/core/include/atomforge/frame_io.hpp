#pragma once

// On-disk image format: a headerless little-endian pixel dump (`.raw`) next
// to a JSON sidecar with the same stem (`.json`). Frames store uint16 counts,
// averaged images store float64 and add their processing provenance.

#include <filesystem>
#include <vector>

#include "atomforge/analysis.hpp"
#include "atomforge/imaging.hpp"

namespace atomforge::io {

std::filesystem::path sidecar_path(const std::filesystem::path& raw_path);

void write_frame(const std::filesystem::path& raw_path, const imaging::Frame& frame);
imaging::Frame read_frame(const std::filesystem::path& raw_path);

void write_image(const std::filesystem::path& raw_path, const analysis::AveragedImage& image);
analysis::AveragedImage read_image(const std::filesystem::path& raw_path);

/// 8-bit binary greymap, linearly stretched from the image minimum to maximum.
void write_pgm(const std::filesystem::path& path, int width, int height, const std::vector<double>& pixels);

/// Every `.raw` file in a directory, sorted by name.
std::vector<std::filesystem::path> list_raw_files(const std::filesystem::path& dir);

}  // namespace atomforge::io
