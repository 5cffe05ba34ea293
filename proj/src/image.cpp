#include "rgan/image.hpp"

#include <png.h>

#include <cmath>
#include <cstdio>
#include <cstring>
#include <memory>

namespace rgan {

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

Image8 read_png_impl(const std::filesystem::path& path, bool gray) {
  FilePtr fp(std::fopen(path.string().c_str(), "rb"));
  if (!fp) throw IoError("cannot open '" + path.string() + "' for reading");

  png_byte header[8];
  if (std::fread(header, 1, 8, fp.get()) != 8 || png_sig_cmp(header, 0, 8) != 0) {
    throw IoError("'" + path.string() + "' is not a PNG file");
  }

  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("libpng initialization failed");
  }

  Image8 img;
  std::vector<png_bytep> rows;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("failed to decode PNG '" + path.string() + "'");
  }

  png_init_io(png, fp.get());
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);

  png_set_strip_16(png);
  png_set_packing(png);
  png_set_palette_to_rgb(png);
  png_set_expand_gray_1_2_4_to_8(png);
  png_set_strip_alpha(png);
  if (gray) {
    png_set_rgb_to_gray_fixed(png, 1, -1, -1);
  } else {
    png_set_gray_to_rgb(png);
  }
  png_set_interlace_handling(png);
  png_read_update_info(png, info);

  img.width = static_cast<int>(png_get_image_width(png, info));
  img.height = static_cast<int>(png_get_image_height(png, info));
  img.channels = gray ? 1 : 3;
  std::size_t rowbytes = png_get_rowbytes(png, info);
  if (rowbytes != static_cast<std::size_t>(img.width) * img.channels) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("unexpected PNG row layout in '" + path.string() + "'");
  }
  img.data.resize(rowbytes * static_cast<std::size_t>(img.height));
  rows.resize(static_cast<std::size_t>(img.height));
  for (int y = 0; y < img.height; ++y) {
    rows[static_cast<std::size_t>(y)] = img.data.data() + static_cast<std::size_t>(y) * rowbytes;
  }
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return img;
}

}  // namespace

Image8 read_png_rgb(const std::filesystem::path& path) { return read_png_impl(path, false); }
Image8 read_png_gray(const std::filesystem::path& path) { return read_png_impl(path, true); }

void write_png(const std::filesystem::path& path, const Image8& img) {
  if (img.width < 1 || img.height < 1 || (img.channels != 3 && img.channels != 1)) {
    throw ValueError("write_png: bad image dimensions");
  }
  if (img.data.size() !=
      static_cast<std::size_t>(img.width) * img.height * static_cast<std::size_t>(img.channels)) {
    throw ValueError("write_png: data size does not match dimensions");
  }
  FilePtr fp(std::fopen(path.string().c_str(), "wb"));
  if (!fp) throw IoError("cannot open '" + path.string() + "' for writing");

  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw IoError("libpng initialization failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError("failed to encode PNG '" + path.string() + "'");
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(img.width), static_cast<png_uint_32>(img.height),
               8, img.channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  std::size_t rowbytes = static_cast<std::size_t>(img.width) * img.channels;
  for (int y = 0; y < img.height; ++y) {
    png_write_row(png, const_cast<png_bytep>(img.data.data() + static_cast<std::size_t>(y) * rowbytes));
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

Tensor rgb8_to_unit(const Image8& img) {
  if (img.channels != 3) throw ValueError("rgb8_to_unit expects a 3-channel image");
  Tensor t({3, img.height, img.width});
  std::size_t plane = static_cast<std::size_t>(img.height) * img.width;
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      for (int c = 0; c < 3; ++c) {
        float v = static_cast<float>(img.at(y, x, c));
        t.data()[static_cast<std::size_t>(c) * plane + static_cast<std::size_t>(y) * img.width + x] =
            v * (2.0f / 255.0f) - 1.0f;
      }
    }
  }
  return t;
}

Image8 unit_to_rgb8(const Tensor& t) {
  if (t.rank() != 3 || t.dim(0) != 3) {
    throw ValueError("unit_to_rgb8 expects a [3,H,W] tensor, got " + shape_str(t.shape()));
  }
  Image8 img;
  img.height = t.dim(1);
  img.width = t.dim(2);
  img.channels = 3;
  img.data.resize(static_cast<std::size_t>(img.width) * img.height * 3);
  std::size_t plane = static_cast<std::size_t>(img.height) * img.width;
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      for (int c = 0; c < 3; ++c) {
        float v = t.data()[static_cast<std::size_t>(c) * plane +
                           static_cast<std::size_t>(y) * img.width + x];
        float scaled = (v + 1.0f) * (255.0f / 2.0f);
        long rounded = std::lround(static_cast<double>(scaled));  // half away from zero
        if (rounded < 0) rounded = 0;
        if (rounded > 255) rounded = 255;
        img.data[(static_cast<std::size_t>(y) * img.width + x) * 3 + static_cast<std::size_t>(c)] =
            static_cast<std::uint8_t>(rounded);
      }
    }
  }
  return img;
}

namespace {

void check_chw(const Tensor& img, const char* what) {
  if (img.rank() != 3) throw ShapeError(std::string(what) + " expects [C,H,W], got " + shape_str(img.shape()));
}

inline float sample_bilinear(const float* plane, int h, int w, double y, double x, float fill) {
  int x0 = static_cast<int>(std::floor(x));
  int y0 = static_cast<int>(std::floor(y));
  double fx = x - x0, fy = y - y0;
  float acc = 0.0f;
  for (int dy = 0; dy < 2; ++dy) {
    for (int dx = 0; dx < 2; ++dx) {
      int yy = y0 + dy, xx = x0 + dx;
      float v = (yy < 0 || yy >= h || xx < 0 || xx >= w) ? fill : plane[yy * w + xx];
      double wgt = (dx ? fx : 1.0 - fx) * (dy ? fy : 1.0 - fy);
      acc += static_cast<float>(wgt) * v;
    }
  }
  return acc;
}

}  // namespace

Tensor resize_bilinear(const Tensor& img, int out_h, int out_w) {
  check_chw(img, "resize_bilinear");
  if (out_h < 1 || out_w < 1) throw ValueError("resize target must be positive");
  int ch = img.dim(0), h = img.dim(1), w = img.dim(2);
  if (h == out_h && w == out_w) return img.clone();
  Tensor out({ch, out_h, out_w});
  double sy = static_cast<double>(h) / out_h;
  double sx = static_cast<double>(w) / out_w;
  for (int c = 0; c < ch; ++c) {
    const float* src = img.data() + static_cast<std::size_t>(c) * h * w;
    float* dst = out.data() + static_cast<std::size_t>(c) * out_h * out_w;
    for (int y = 0; y < out_h; ++y) {
      // half-pixel centers; clamp the sample point so edges replicate
      double yin = (y + 0.5) * sy - 0.5;
      if (yin < 0) yin = 0;
      if (yin > h - 1) yin = h - 1;
      for (int x = 0; x < out_w; ++x) {
        double xin = (x + 0.5) * sx - 0.5;
        if (xin < 0) xin = 0;
        if (xin > w - 1) xin = w - 1;
        dst[y * out_w + x] = sample_bilinear(src, h, w, yin, xin, 0.0f);
      }
    }
  }
  return out;
}

Tensor rotate_bilinear(const Tensor& img, double angle_radians, float fill) {
  check_chw(img, "rotate_bilinear");
  int ch = img.dim(0), h = img.dim(1), w = img.dim(2);
  Tensor out({ch, h, w});
  double cy = (h - 1) / 2.0, cx = (w - 1) / 2.0;
  double cosa = std::cos(angle_radians), sina = std::sin(angle_radians);
  for (int c = 0; c < ch; ++c) {
    const float* src = img.data() + static_cast<std::size_t>(c) * h * w;
    float* dst = out.data() + static_cast<std::size_t>(c) * h * w;
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        // inverse map of a rotation about the image center
        double dy = y - cy, dx = x - cx;
        double sx = cx + cosa * dx + sina * dy;
        double sy = cy - sina * dx + cosa * dy;
        if (sx < -0.5 || sx > w - 0.5 || sy < -0.5 || sy > h - 0.5) {
          dst[y * w + x] = fill;
        } else {
          dst[y * w + x] = sample_bilinear(src, h, w, sy, sx, fill);
        }
      }
    }
  }
  return out;
}

Tensor flip_horizontal(const Tensor& img) {
  check_chw(img, "flip_horizontal");
  int ch = img.dim(0), h = img.dim(1), w = img.dim(2);
  Tensor out({ch, h, w});
  for (int c = 0; c < ch; ++c) {
    for (int y = 0; y < h; ++y) {
      const float* src = img.data() + (static_cast<std::size_t>(c) * h + y) * w;
      float* dst = out.data() + (static_cast<std::size_t>(c) * h + y) * w;
      for (int x = 0; x < w; ++x) dst[x] = src[w - 1 - x];
    }
  }
  return out;
}

Tensor flip_vertical(const Tensor& img) {
  check_chw(img, "flip_vertical");
  int ch = img.dim(0), h = img.dim(1), w = img.dim(2);
  Tensor out({ch, h, w});
  for (int c = 0; c < ch; ++c) {
    for (int y = 0; y < h; ++y) {
      const float* src = img.data() + (static_cast<std::size_t>(c) * h + (h - 1 - y)) * w;
      float* dst = out.data() + (static_cast<std::size_t>(c) * h + y) * w;
      std::memcpy(dst, src, sizeof(float) * static_cast<std::size_t>(w));
    }
  }
  return out;
}

Tensor center_crop_square(const Tensor& img) {
  check_chw(img, "center_crop_square");
  int ch = img.dim(0), h = img.dim(1), w = img.dim(2);
  int side = h < w ? h : w;
  if (side == h && side == w) return img.clone();
  int y0 = (h - side) / 2, x0 = (w - side) / 2;
  Tensor out({ch, side, side});
  for (int c = 0; c < ch; ++c) {
    for (int y = 0; y < side; ++y) {
      const float* src = img.data() + (static_cast<std::size_t>(c) * h + (y0 + y)) * w + x0;
      float* dst = out.data() + (static_cast<std::size_t>(c) * side + y) * side;
      std::memcpy(dst, src, sizeof(float) * static_cast<std::size_t>(side));
    }
  }
  return out;
}

}  // namespace rgan
