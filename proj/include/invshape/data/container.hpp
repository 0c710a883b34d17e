#pragma once

#include <cmath>
#include <filesystem>
#include <vector>

#include "invshape/core/binary_io.hpp"
#include "invshape/data/dataset.hpp"

// "FFD1" dataset container, little-endian:
//   'F''F''D''1', u32 N, u32 H, u32 W, u32 C,
//   C x (f32 min, f32 max),
//   N x (H*W f32 geometry, H*W*C f32 field), row-major.
// An optional trailer stores the split: 'S''P''L''1', u32 n_train,
// u32 n_eval, then n_train + n_eval u32 sample indices.
namespace invshape {

inline std::vector<unsigned char> encode_container(const Dataset& d) {
  io::ByteWriter w;
  w.magic("FFD1");
  const std::size_t H = d.height(), W = d.width(), C = d.channels();
  w.u32(static_cast<std::uint32_t>(d.size()));
  w.u32(static_cast<std::uint32_t>(H));
  w.u32(static_cast<std::uint32_t>(W));
  w.u32(static_cast<std::uint32_t>(C));
  for (std::size_t c = 0; c < C; ++c) {
    const ChannelRange r = d.normalization.empty() ? ChannelRange{} : d.normalization.channels.at(c);
    w.f32(static_cast<float>(r.min));
    w.f32(static_cast<float>(r.max));
  }
  for (const Sample& s : d.samples) {
    if (s.geometry.height() != H || s.geometry.width() != W || s.field.height() != H ||
        s.field.width() != W || s.field.channels() != C)
      fail<ShapeError>("write_container: samples have inconsistent shapes");
    for (double v : s.geometry.values().data()) w.f32(static_cast<float>(v));
    for (double v : s.field.values().data()) w.f32(static_cast<float>(v));
  }
  if (!d.train.empty() || !d.eval.empty()) {
    w.magic("SPL1");
    w.u32(static_cast<std::uint32_t>(d.train.size()));
    w.u32(static_cast<std::uint32_t>(d.eval.size()));
    for (std::size_t i : d.train) w.u32(static_cast<std::uint32_t>(i));
    for (std::size_t i : d.eval) w.u32(static_cast<std::uint32_t>(i));
  }
  return w.bytes();
}

inline Dataset decode_container(const std::vector<unsigned char>& bytes,
                                const std::string& name = "container") {
  io::ByteReader r(bytes, name);
  r.expect_magic("FFD1");
  const std::size_t N = r.u32("sample count"), H = r.u32("height"), W = r.u32("width"),
                    C = r.u32("channels");
  if (H == 0 || W == 0 || C == 0) fail<FormatError>(name, ": zero-sized grid ", H, "x", W, "x", C);
  Dataset d;
  d.normalization.channels.resize(C);
  bool any_range = false;
  for (std::size_t c = 0; c < C; ++c) {
    d.normalization.channels[c].min = r.f32("normalization min");
    d.normalization.channels[c].max = r.f32("normalization max");
    any_range = any_range || d.normalization.channels[c].min != 0.0 ||
                d.normalization.channels[c].max != 0.0;
  }
  if (!any_range) d.normalization.channels.clear();
  const std::size_t record = 4 * (H * W + H * W * C);
  if (r.remaining() < N * record)
    fail<FormatError>(name, ": header declares ", N, " samples of ", record,
                      " bytes but only ", r.remaining(), " bytes follow");
  d.samples.reserve(N);
  for (std::size_t s = 0; s < N; ++s) {
    Array g({H, W, 1});
    for (double& v : g.data()) v = r.f32("geometry");
    Array f({H, W, C});
    for (double& v : f.data()) v = r.f32("field");
    d.samples.push_back({GeometryMap(std::move(g)), GridField(std::move(f))});
  }
  if (r.remaining() > 0) {
    r.expect_magic("SPL1");
    const std::size_t nt = r.u32("train count"), ne = r.u32("eval count");
    if (nt + ne != N) fail<FormatError>(name, ": split covers ", nt + ne, " of ", N, " samples");
    std::vector<bool> seen(N, false);
    auto take = [&](std::vector<std::size_t>& dst, std::size_t count) {
      for (std::size_t k = 0; k < count; ++k) {
        const std::size_t idx = r.u32("split index");
        if (idx >= N || seen[idx]) fail<FormatError>(name, ": invalid split index ", idx);
        seen[idx] = true;
        dst.push_back(idx);
      }
    };
    take(d.train, nt);
    take(d.eval, ne);
    if (r.remaining() != 0) fail<FormatError>(name, ": ", r.remaining(), " trailing bytes");
  }
  return d;
}

inline void write_container(const std::filesystem::path& path, const Dataset& d) {
  io::write_file(path, encode_container(d));
}

inline Dataset read_container(const std::filesystem::path& path) {
  return decode_container(io::read_file(path), path.string());
}

}  // namespace invshape
