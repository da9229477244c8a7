#pragma once

// PNG (via libpng) and binary PPM (P6) reading and writing. Users of this
// header link against libpng.

#include <png.h>

#include <cctype>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>

#include "oasr/image.hpp"

namespace oasr {

class ImageIoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

inline ImageRgb read_png(const std::string& path) {
  png_image img;
  std::memset(&img, 0, sizeof img);
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&img, path.c_str()))
    throw ImageIoError("cannot read PNG " + path + ": " + img.message);
  img.format = PNG_FORMAT_RGB;
  ImageRgb out(img.height, img.width);
  if (!png_image_finish_read(&img, nullptr, out.data.data(), 0, nullptr)) {
    png_image_free(&img);
    throw ImageIoError("cannot decode PNG " + path + ": " + img.message);
  }
  return out;
}

inline void write_png(const std::string& path, const ImageRgb& rgb) {
  png_image img;
  std::memset(&img, 0, sizeof img);
  img.version = PNG_IMAGE_VERSION;
  img.width = static_cast<png_uint_32>(rgb.width);
  img.height = static_cast<png_uint_32>(rgb.height);
  img.format = PNG_FORMAT_RGB;
  if (!png_image_write_to_file(&img, path.c_str(), 0, rgb.data.data(), 0, nullptr))
    throw ImageIoError("cannot write PNG " + path + ": " + img.message);
}

inline std::size_t ppm_token(std::istream& in, const std::string& path) {
  int c = in.get();
  while (in && (std::isspace(c) || c == '#')) {
    if (c == '#')
      while (in && c != '\n') c = in.get();
    c = in.get();
  }
  std::string tok;
  while (in && std::isdigit(c)) {
    tok.push_back(static_cast<char>(c));
    c = in.get();
  }
  if (tok.empty()) throw ImageIoError("malformed PPM header in " + path);
  return std::stoul(tok);
}

inline ImageRgb read_ppm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ImageIoError("cannot open " + path);
  char magic[2] = {};
  in.read(magic, 2);
  if (magic[0] != 'P' || magic[1] != '6') throw ImageIoError(path + " is not a binary PPM (P6)");
  const std::size_t w = ppm_token(in, path), h = ppm_token(in, path), maxval = ppm_token(in, path);
  if (maxval != 255) throw ImageIoError(path + ": only 8-bit PPM is supported");
  ImageRgb out(h, w);
  in.read(reinterpret_cast<char*>(out.data.data()), static_cast<std::streamsize>(out.data.size()));
  if (in.gcount() != static_cast<std::streamsize>(out.data.size())) throw ImageIoError(path + ": truncated PPM data");
  return out;
}

inline void write_ppm(const std::string& path, const ImageRgb& rgb) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ImageIoError("cannot open " + path + " for writing");
  out << "P6\n" << rgb.width << " " << rgb.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(rgb.data.data()), static_cast<std::streamsize>(rgb.data.size()));
  if (!out) throw ImageIoError("write failed for " + path);
}

}  // namespace detail

/// Decodes PNG or P6 PPM, chosen by file signature.
inline ImageRgb read_image(const std::string& path) {
  std::ifstream probe(path, std::ios::binary);
  if (!probe) throw ImageIoError("cannot open " + path);
  unsigned char sig[8] = {};
  probe.read(reinterpret_cast<char*>(sig), 8);
  probe.close();
  if (png_sig_cmp(sig, 0, 8) == 0) return detail::read_png(path);
  if (sig[0] == 'P' && sig[1] == '6') return detail::read_ppm(path);
  throw ImageIoError(path + ": unsupported image format (expected PNG or P6 PPM)");
}

/// Encodes by extension: .ppm writes P6, anything else PNG.
inline void write_image(const std::string& path, const ImageRgb& img) {
  const auto ext = std::filesystem::path(path).extension().string();
  if (ext == ".ppm" || ext == ".PPM")
    detail::write_ppm(path, img);
  else
    detail::write_png(path, img);
}

}  // namespace oasr
