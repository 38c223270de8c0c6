#include "naveval/image_io.hpp"

#include <bit>
#include <cctype>
#include <cstring>
#include <fstream>
#include <sstream>

namespace naveval {

namespace {

// Consumes whitespace and '#' comment lines between header tokens.
void skip_separators(std::istream& in) {
  for (;;) {
    int c = in.peek();
    if (c == '#') {
      std::string comment;
      std::getline(in, comment);
    } else if (std::isspace(c)) {
      in.get();
    } else {
      return;
    }
  }
}

int read_header_int(std::istream& in, const std::string& path,
                    const char* what) {
  skip_separators(in);
  int value = 0;
  if (!(in >> value) || value <= 0) {
    throw ImageError(path + ": bad or missing " + what + " in header");
  }
  return value;
}

std::ifstream open_read(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw ImageError("cannot open " + path + " for reading");
  }
  return in;
}

std::ofstream open_write(const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw ImageError("cannot open " + path + " for writing");
  }
  return out;
}

void expect_magic(std::istream& in, const std::string& path,
                  const char* magic) {
  std::string found;
  in >> found;
  if (found != magic) {
    throw ImageError(path + ": expected " + magic + " header, found '" +
                     found + "'");
  }
}

}  // namespace

void write_ppm(const std::string& path, const RgbImage& image) {
  if (image.width <= 0 || image.height <= 0 ||
      image.pixels.size() !=
          static_cast<std::size_t>(image.width) * image.height * 3) {
    throw ImageError("write_ppm: inconsistent image dimensions");
  }
  auto out = open_write(path);
  out << "P6\n" << image.width << " " << image.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(image.pixels.data()),
            static_cast<std::streamsize>(image.pixels.size()));
  if (!out) {
    throw ImageError("write_ppm: short write to " + path);
  }
}

RgbImage read_ppm(const std::string& path) {
  auto in = open_read(path);
  expect_magic(in, path, "P6");
  RgbImage image;
  image.width = read_header_int(in, path, "width");
  image.height = read_header_int(in, path, "height");
  const int maxval = read_header_int(in, path, "maxval");
  if (maxval != 255) {
    throw ImageError(path + ": only maxval 255 is supported");
  }
  in.get();  // single whitespace byte after maxval
  image.pixels.resize(static_cast<std::size_t>(image.width) * image.height *
                      3);
  in.read(reinterpret_cast<char*>(image.pixels.data()),
          static_cast<std::streamsize>(image.pixels.size()));
  if (in.gcount() != static_cast<std::streamsize>(image.pixels.size())) {
    throw ImageError(path + ": truncated pixel data");
  }
  return image;
}

void write_pfm(const std::string& path, const DepthImage& image) {
  if (image.width <= 0 || image.height <= 0 ||
      image.values.size() !=
          static_cast<std::size_t>(image.width) * image.height) {
    throw ImageError("write_pfm: inconsistent image dimensions");
  }
  static_assert(std::endian::native == std::endian::little,
                "PFM writer assumes a little-endian host");
  auto out = open_write(path);
  out << "Pf\n" << image.width << " " << image.height << "\n-1.0\n";
  // PFM stores the bottom row first.
  for (int y = image.height - 1; y >= 0; --y) {
    out.write(reinterpret_cast<const char*>(&image.values[static_cast<
                  std::size_t>(y) * image.width]),
              static_cast<std::streamsize>(image.width * sizeof(float)));
  }
  if (!out) {
    throw ImageError("write_pfm: short write to " + path);
  }
}

DepthImage read_pfm(const std::string& path) {
  auto in = open_read(path);
  expect_magic(in, path, "Pf");
  DepthImage image;
  image.width = read_header_int(in, path, "width");
  image.height = read_header_int(in, path, "height");
  skip_separators(in);
  double scale = 0.0;
  if (!(in >> scale) || scale == 0.0) {
    throw ImageError(path + ": bad or missing scale in header");
  }
  const bool file_little_endian = scale < 0.0;
  if (!file_little_endian) {
    throw ImageError(path + ": big-endian PFM is not supported");
  }
  in.get();
  image.values.resize(static_cast<std::size_t>(image.width) * image.height);
  std::vector<float> row(static_cast<std::size_t>(image.width));
  for (int y = image.height - 1; y >= 0; --y) {
    in.read(reinterpret_cast<char*>(row.data()),
            static_cast<std::streamsize>(image.width * sizeof(float)));
    if (in.gcount() !=
        static_cast<std::streamsize>(image.width * sizeof(float))) {
      throw ImageError(path + ": truncated pixel data");
    }
    std::memcpy(&image.values[static_cast<std::size_t>(y) * image.width],
                row.data(), image.width * sizeof(float));
  }
  return image;
}

void write_pgm(const std::string& path, const MaskImage& image) {
  if (image.width <= 0 || image.height <= 0 ||
      image.values.size() !=
          static_cast<std::size_t>(image.width) * image.height) {
    throw ImageError("write_pgm: inconsistent image dimensions");
  }
  auto out = open_write(path);
  out << "P5\n" << image.width << " " << image.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(image.values.data()),
            static_cast<std::streamsize>(image.values.size()));
  if (!out) {
    throw ImageError("write_pgm: short write to " + path);
  }
}

MaskImage read_pgm(const std::string& path) {
  auto in = open_read(path);
  expect_magic(in, path, "P5");
  MaskImage image;
  image.width = read_header_int(in, path, "width");
  image.height = read_header_int(in, path, "height");
  const int maxval = read_header_int(in, path, "maxval");
  if (maxval != 255) {
    throw ImageError(path + ": only maxval 255 is supported");
  }
  in.get();
  image.values.resize(static_cast<std::size_t>(image.width) * image.height);
  in.read(reinterpret_cast<char*>(image.values.data()),
          static_cast<std::streamsize>(image.values.size()));
  if (in.gcount() != static_cast<std::streamsize>(image.values.size())) {
    throw ImageError(path + ": truncated pixel data");
  }
  return image;
}

}  // namespace naveval
