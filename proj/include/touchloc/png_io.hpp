#pragma once

#include <cstdint>
#include <filesystem>

namespace touchloc {

// Lossless 8-bit grayscale PNG writer (debug exports).
void write_gray_png(const std::filesystem::path& path, const uint8_t* pixels,
                    int width, int height);

}  // namespace touchloc
