// Copyright 2026 The M3D Attack Lab Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "m3d/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <vector>

namespace m3d {

Tensor<float> read_png(const std::string& path, int side) {
  png_image img{};
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&img, path.c_str()))
    throw IoError("cannot decode " + path + ": " + img.message);
  img.format = PNG_FORMAT_RGB;
  std::vector<png_byte> buf(PNG_IMAGE_SIZE(img));
  if (!png_image_finish_read(&img, nullptr, buf.data(), 0, nullptr)) {
    png_image_free(&img);
    throw IoError("cannot decode " + path + ": " + img.message);
  }
  const int w = static_cast<int>(img.width), h = static_cast<int>(img.height);
  Tensor<float> out(1, 3, side, side);
  for (int y = 0; y < side; ++y) {
    const int sy = std::min(h - 1, y * h / side);
    for (int x = 0; x < side; ++x) {
      const int sx = std::min(w - 1, x * w / side);
      for (int c = 0; c < 3; ++c)
        out.at(0, c, y, x) = static_cast<float>(buf[(static_cast<std::size_t>(sy) * w + sx) * 3 + c]) / 255.0f;
    }
  }
  return out;
}

void write_png(const std::string& path, const Tensor<float>& images, int index) {
  if (images.c() != 3) throw ShapeError("write_png expects 3-channel images");
  const int h = images.h(), w = images.w();
  std::vector<png_byte> buf(static_cast<std::size_t>(h) * w * 3);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c) {
        const float v = std::clamp(images.at(index, c, y, x), 0.0f, 1.0f);
        buf[(static_cast<std::size_t>(y) * w + x) * 3 + c] = static_cast<png_byte>(std::lround(v * 255.0f));
      }
  png_image img{};
  img.version = PNG_IMAGE_VERSION;
  img.width = static_cast<png_uint_32>(w);
  img.height = static_cast<png_uint_32>(h);
  img.format = PNG_FORMAT_RGB;
  if (!png_image_write_to_file(&img, path.c_str(), 0, buf.data(), 0, nullptr))
    throw IoError("cannot write " + path + ": " + img.message);
}

}  // namespace m3d
