#pragma once

#include <filesystem>

#include "gradleak/serialize.hpp"
#include "gradleak/tensor.hpp"

namespace gradleak {

/// Binary PGM (P5) or PPM (P6), maxval 255 -> CxHxW tensor in [0,1]
/// (values byte/255; C=1 for P5, C=3 for P6).
Tensor load_image(const std::filesystem::path& path);

/// CxHxW (C 1 or 3) in [0,1] -> P5/P6, pixel = round(255*x).
void save_image(const std::filesystem::path& path, const Tensor& image);

}  // namespace gradleak
