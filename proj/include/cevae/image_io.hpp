#ifndef CEVAE_IMAGE_IO_HPP_
#define CEVAE_IMAGE_IO_HPP_

#include <string>

#include "cevae/tensor.hpp"

namespace cevae {

// PNG/JPEG decode to (3,H,W) RGB in [0,1].
Tensor load_image(const std::string& path);

// Writes (3,H,W) in [0,1] as 8-bit PNG/JPEG by extension.
void save_image(const std::string& path, const Tensor& img_unit);

// Bilinear resize of a (3,H,W) tensor.
Tensor resize_bilinear(const Tensor& img, int out_h, int out_w);

}  // namespace cevae

#endif  // CEVAE_IMAGE_IO_HPP_
