#pragma once

#include <string>

#include "tensor.hpp"

namespace xreid {

// Images are (3,H,W) tensors with values in [-1,1]. Files store 8-bit RGB;
// quantization is round((x+1)*127.5) clamped to [0,255], decode is b/127.5-1.

Tensor decode_ppm(const std::string& bytes);
std::string encode_ppm(const Tensor& img);

Tensor decode_jpeg(const std::string& bytes);

Tensor resize_bilinear(const Tensor& img, long out_h, long out_w);

// Decodes by extension (.ppm or .jpg/.jpeg) and resizes when needed.
Tensor load_image(const std::string& path, long out_h, long out_w);
void save_ppm(const std::string& path, const Tensor& img);

unsigned char quantize_pixel(double x);

}  // namespace xreid
