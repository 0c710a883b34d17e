#pragma once

#include <algorithm>
#include <cmath>
#include <cctype>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "invshape/core/binary_io.hpp"
#include "invshape/data/field.hpp"

// Binary PPM (P6) and PGM (P5) rasters with max value 255.
namespace invshape {

struct Rgb {
  std::uint8_t r = 0, g = 0, b = 0;
  bool operator==(const Rgb&) const = default;
};

struct Image {
  std::size_t width = 0, height = 0;
  std::vector<Rgb> pixels;  // row-major

  Image() = default;
  Image(std::size_t w, std::size_t h, Rgb fill = {255, 255, 255})
      : width(w), height(h), pixels(w * h, fill) {}
  Rgb& at(std::size_t row, std::size_t col) { return pixels[row * width + col]; }
  const Rgb& at(std::size_t row, std::size_t col) const { return pixels[row * width + col]; }
};

inline std::uint8_t to_byte(double v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

/// Blue (t = 0) through white (t = 0.5) to red (t = 1).
inline Rgb blue_white_red(double t) {
  t = std::clamp(t, 0.0, 1.0);
  if (t <= 0.5) {
    const double s = t / 0.5;
    return {to_byte(s), to_byte(s), 255};
  }
  const double s = (1.0 - t) / 0.5;
  return {255, to_byte(s), to_byte(s)};
}

struct RenderOptions {
  std::optional<double> min, max;  // auto bounds over fluid pixels when unset
  Rgb solid{0, 0, 0};
  std::size_t gap = 4;             // rows between stacked panels
  Rgb gap_color{255, 255, 255};
};

/// Channel bounds: explicit ones are validated, auto ones span the fluid
/// pixels (a constant channel maps to the middle of the color scale).
inline std::pair<double, double> render_bounds(const GridField& f, std::size_t channel,
                                               const GeometryMap* g, const RenderOptions& o) {
  if (o.min && o.max) {
    if (!(*o.min < *o.max)) fail<ConfigError>("render: invalid bounds min ", *o.min, " >= max ", *o.max);
    return {*o.min, *o.max};
  }
  double lo = INFINITY, hi = -INFINITY;
  for (std::size_t i = 0; i < f.height(); ++i)
    for (std::size_t j = 0; j < f.width(); ++j) {
      if (g && g->solid(i, j)) continue;
      lo = std::min(lo, f(i, j, channel));
      hi = std::max(hi, f(i, j, channel));
    }
  if (!std::isfinite(lo)) lo = hi = 0.0;
  if (o.min) lo = *o.min;
  if (o.max) hi = *o.max;
  if (lo > hi) fail<ConfigError>("render: invalid bounds min ", lo, " >= max ", hi);
  return {lo, hi};
}

inline Image render_channel(const GridField& f, std::size_t channel, const GeometryMap* g,
                            const RenderOptions& o = {}) {
  if (channel >= f.channels())
    fail<ConfigError>("render: channel ", channel, " out of range for ", f.channels(), " channels");
  if (g && (g->height() != f.height() || g->width() != f.width()))
    fail<ShapeError>("render: geometry and field sizes differ");
  const auto [lo, hi] = render_bounds(f, channel, g, o);
  Image img(f.width(), f.height());
  for (std::size_t i = 0; i < f.height(); ++i)
    for (std::size_t j = 0; j < f.width(); ++j) {
      if (g && g->solid(i, j)) {
        img.at(i, j) = o.solid;
        continue;
      }
      const double t = hi > lo ? (f(i, j, channel) - lo) / (hi - lo) : 0.5;
      img.at(i, j) = blue_white_red(t);
    }
  return img;
}

/// Channels stacked top to bottom with `gap` rows between them.
inline Image render_panels(const GridField& f, const GeometryMap* g, const RenderOptions& o = {}) {
  const std::size_t C = f.channels();
  Image img(f.width(), C * f.height() + (C - 1) * o.gap, o.gap_color);
  for (std::size_t c = 0; c < C; ++c) {
    const Image panel = render_channel(f, c, g, o);
    const std::size_t top = c * (f.height() + o.gap);
    for (std::size_t i = 0; i < panel.height; ++i)
      for (std::size_t j = 0; j < panel.width; ++j) img.at(top + i, j) = panel.at(i, j);
  }
  return img;
}

/// Grayscale view of a geometry: fluid white, solid black.
inline Image render_geometry(const GeometryMap& g) {
  Image img(g.width(), g.height());
  for (std::size_t i = 0; i < g.height(); ++i)
    for (std::size_t j = 0; j < g.width(); ++j) {
      const std::uint8_t v = to_byte(1.0 - g(i, j));
      img.at(i, j) = {v, v, v};
    }
  return img;
}

/// Images placed left to right with `gap` white columns between them.
inline Image hconcat(const std::vector<Image>& parts, std::size_t gap = 4) {
  std::size_t w = 0, h = 0;
  for (const Image& p : parts) {
    w += p.width;
    h = std::max(h, p.height);
  }
  if (!parts.empty()) w += gap * (parts.size() - 1);
  Image out(w, h);
  std::size_t left = 0;
  for (const Image& p : parts) {
    for (std::size_t i = 0; i < p.height; ++i)
      for (std::size_t j = 0; j < p.width; ++j) out.at(i, left + j) = p.at(i, j);
    left += p.width + gap;
  }
  return out;
}

inline std::vector<unsigned char> encode_ppm(const Image& img) {
  const std::string header =
      "P6\n" + std::to_string(img.width) + " " + std::to_string(img.height) + "\n255\n";
  std::vector<unsigned char> out(header.begin(), header.end());
  out.reserve(out.size() + 3 * img.pixels.size());
  for (const Rgb& p : img.pixels) {
    out.push_back(p.r);
    out.push_back(p.g);
    out.push_back(p.b);
  }
  return out;
}

inline void write_ppm(const std::filesystem::path& path, const Image& img) {
  io::write_file(path, encode_ppm(img));
}

/// Geometry as PGM: byte = round(255 * g), so solid pixels are 255.
inline std::vector<unsigned char> encode_pgm(const GeometryMap& g) {
  const std::string header =
      "P5\n" + std::to_string(g.width()) + " " + std::to_string(g.height()) + "\n255\n";
  std::vector<unsigned char> out(header.begin(), header.end());
  for (double v : g.values().data()) out.push_back(to_byte(v));
  return out;
}

inline void write_pgm(const std::filesystem::path& path, const GeometryMap& g) {
  io::write_file(path, encode_pgm(g));
}

/// Reads a binary PGM (maxval <= 255, '#' comments allowed in the header)
/// into a geometry with values byte / maxval.
inline GeometryMap decode_pgm(const std::vector<unsigned char>& bytes, const std::string& name = "pgm") {
  std::size_t pos = 0;
  auto skip_space = [&] {
    for (;;) {
      while (pos < bytes.size() && std::isspace(bytes[pos])) ++pos;
      if (pos < bytes.size() && bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
        continue;
      }
      return;
    }
  };
  auto token = [&](const char* what) {
    skip_space();
    std::string t;
    while (pos < bytes.size() && !std::isspace(bytes[pos])) t.push_back(static_cast<char>(bytes[pos++]));
    if (t.empty()) fail<FormatError>(name, ": truncated header while reading ", what);
    return t;
  };
  auto integer = [&](const char* what) {
    const std::string t = token(what);
    if (t.find_first_not_of("0123456789") != std::string::npos || t.size() > 9)
      fail<FormatError>(name, ": invalid ", what, " '", t, "'");
    return static_cast<std::size_t>(std::stoul(t));
  };
  if (token("magic") != "P5") fail<FormatError>(name, ": not a binary PGM (expected P5)");
  const std::size_t W = integer("width"), H = integer("height"), maxval = integer("maxval");
  if (W == 0 || H == 0) fail<FormatError>(name, ": empty image");
  if (maxval == 0 || maxval > 255) fail<FormatError>(name, ": unsupported maxval ", maxval);
  if (pos >= bytes.size() || !std::isspace(bytes[pos])) fail<FormatError>(name, ": malformed header");
  ++pos;
  if (bytes.size() - pos != W * H)
    fail<FormatError>(name, ": expected ", W * H, " pixel bytes, found ", bytes.size() - pos);
  GeometryMap g(H, W);
  for (std::size_t k = 0; k < W * H; ++k) {
    const double v = static_cast<double>(bytes[pos + k]);
    g.values()[k] = v > static_cast<double>(maxval) ? 1.0 : v / static_cast<double>(maxval);
  }
  return g;
}

inline GeometryMap read_pgm(const std::filesystem::path& path) {
  return decode_pgm(io::read_file(path), path.string());
}

}  // namespace invshape
