#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "invshape/core/adam.hpp"
#include "invshape/core/binary_io.hpp"

// Parameter checkpoints: 4-byte magic, u32 layer count, then per layer
// u32 rank, rank x u32 dims, f64 values (row-major, little-endian).
namespace invshape {

inline void encode_arrays(io::ByteWriter& w, const std::vector<const Array*>& arrays) {
  w.u32(static_cast<std::uint32_t>(arrays.size()));
  for (const Array* a : arrays) {
    w.u32(static_cast<std::uint32_t>(a->rank()));
    for (std::size_t d : a->shape()) w.u32(static_cast<std::uint32_t>(d));
    for (double v : a->data()) w.f64(v);
  }
}

inline std::vector<Array> decode_arrays(io::ByteReader& r) {
  const std::size_t n = r.u32("layer count");
  std::vector<Array> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t rank = r.u32("rank");
    if (rank == 0 || rank > 8) fail<FormatError>(r.what(), ": layer ", i, " has rank ", rank);
    Shape shape(rank);
    for (auto& d : shape) d = r.u32("dimension");
    const std::size_t count = shape_numel(shape);
    r.need(count * 8, "layer values");
    Array a(shape);
    for (double& v : a.data()) v = r.f64();
    out.push_back(std::move(a));
  }
  return out;
}

inline std::vector<unsigned char> encode_params(const ParamStore& params, std::string_view magic) {
  io::ByteWriter w;
  w.magic(magic);
  std::vector<const Array*> arrays;
  for (const Parameter& p : params) arrays.push_back(&p.node.value());
  encode_arrays(w, arrays);
  return w.bytes();
}

/// Moves decoded arrays into `params`, which must have the same layout.
inline void assign_arrays(ParamStore& params, std::vector<Array> arrays, const std::string& name) {
  if (arrays.size() != params.size())
    fail<FormatError>(name, ": checkpoint has ", arrays.size(), " layers, model expects ",
                      params.size());
  for (std::size_t i = 0; i < arrays.size(); ++i) {
    if (arrays[i].shape() != params[i].node.shape())
      fail<FormatError>(name, ": layer ", i, " (", params[i].name, ") has shape ",
                        shape_str(arrays[i].shape()), ", model expects ",
                        shape_str(params[i].node.shape()));
    params[i].node.mutable_value() = std::move(arrays[i]);
  }
}

/// Loads values into `params`, which must already have the checkpoint's layout.
inline void decode_params_into(ParamStore& params, const std::vector<unsigned char>& bytes,
                               std::string_view magic, const std::string& name) {
  io::ByteReader r(bytes, name);
  r.expect_magic(magic);
  std::vector<Array> arrays = decode_arrays(r);
  if (r.remaining() != 0) fail<FormatError>(name, ": ", r.remaining(), " trailing bytes");
  assign_arrays(params, std::move(arrays), name);
}

/// Shapes stored in a checkpoint, without a model to load into.
inline std::vector<Shape> checkpoint_layer_shapes(const std::vector<unsigned char>& bytes,
                                                  std::string_view magic,
                                                  const std::string& name) {
  io::ByteReader r(bytes, name);
  r.expect_magic(magic);
  std::vector<Shape> shapes;
  for (const Array& a : decode_arrays(r)) shapes.push_back(a.shape());
  return shapes;
}

// Optimizer state for resuming: 'ADM1', u64 step, u32 epoch, f64 lr,
// f64 beta1, f64 beta2, f64 epsilon, then first and second moments as two
// array blocks.
inline std::vector<unsigned char> encode_adam(const AdamState& s, std::uint32_t epoch) {
  io::ByteWriter w;
  w.magic("ADM1");
  w.u64(s.step_count);
  w.u32(epoch);
  w.f64(s.config.learning_rate);
  w.f64(s.config.beta1);
  w.f64(s.config.beta2);
  w.f64(s.config.epsilon);
  std::vector<const Array*> m, v;
  for (const Array& a : s.first_moment) m.push_back(&a);
  for (const Array& a : s.second_moment) v.push_back(&a);
  encode_arrays(w, m);
  encode_arrays(w, v);
  return w.bytes();
}

inline AdamState decode_adam(const std::vector<unsigned char>& bytes, std::uint32_t& epoch,
                             const std::string& name) {
  io::ByteReader r(bytes, name);
  r.expect_magic("ADM1");
  AdamState s;
  s.step_count = r.u64("step");
  epoch = r.u32("epoch");
  s.config.learning_rate = r.f64();
  s.config.beta1 = r.f64();
  s.config.beta2 = r.f64();
  s.config.epsilon = r.f64();
  s.first_moment = decode_arrays(r);
  s.second_moment = decode_arrays(r);
  if (s.first_moment.size() != s.second_moment.size())
    fail<FormatError>(name, ": moment counts differ");
  return s;
}

}  // namespace invshape
