#pragma once

#include <string>

#include "rsrect/image.hpp"

namespace rsrect {

// 8-bit PNG, gray or RGB. On load each byte v maps to max(v,1)/255 so a
// stored intensity is never exactly zero; zero stays reserved for
// "invalid/outside" pixels produced by the warps.
Image load_png(const std::string& path);

// Clamps to [0,1] and quantizes round-half-up to 8 bits.
void save_png(const std::string& path, const Image& img);

}  // namespace rsrect
