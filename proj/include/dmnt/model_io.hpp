#pragma once

// Versioned binary container for a trained model: extractor weights,
// per-class shape spaces and texture banks, and the background bank.
// All scalars are serialized as 64-bit doubles regardless of the build's
// `real`, so files round-trip across precision modes.

#include <fstream>

#include "dmnt/training.hpp"

namespace dmnt {

namespace detail {

constexpr char kModelMagic[8] = {'D', 'M', 'N', 'T', 'M', 'D', 'L', '\0'};
constexpr uint32_t kModelVersion = 1;

inline void write_u32(std::ostream& o, uint32_t x) { o.write(reinterpret_cast<const char*>(&x), 4); }
inline void write_u64(std::ostream& o, uint64_t x) { o.write(reinterpret_cast<const char*>(&x), 8); }
inline void write_f64(std::ostream& o, double x) { o.write(reinterpret_cast<const char*>(&x), 8); }
inline uint32_t read_u32(std::istream& i) {
  uint32_t x;
  i.read(reinterpret_cast<char*>(&x), 4);
  return x;
}
inline uint64_t read_u64(std::istream& i) {
  uint64_t x;
  i.read(reinterpret_cast<char*>(&x), 8);
  return x;
}
inline double read_f64(std::istream& i) {
  double x;
  i.read(reinterpret_cast<char*>(&x), 8);
  return x;
}

inline void write_tensor(std::ostream& o, const Tensor& t) {
  write_u32(o, uint32_t(t.shape.size()));
  for (int d : t.shape) write_u32(o, uint32_t(d));
  for (real x : t.v) write_f64(o, double(x));
}
inline Tensor read_tensor(std::istream& i) {
  uint32_t rank = read_u32(i);
  std::vector<int> shape(rank);
  for (auto& d : shape) d = int(read_u32(i));
  Tensor t(shape);
  for (auto& x : t.v) x = real(read_f64(i));
  return t;
}

inline void write_vec3(std::ostream& o, Vec3 v) {
  write_f64(o, v.x);
  write_f64(o, v.y);
  write_f64(o, v.z);
}
inline Vec3 read_vec3(std::istream& i) {
  Vec3 v;
  v.x = real(read_f64(i));
  v.y = real(read_f64(i));
  v.z = real(read_f64(i));
  return v;
}

inline void write_mesh(std::ostream& o, const Mesh& m) {
  write_u64(o, m.vertices.size());
  for (auto& v : m.vertices) write_vec3(o, v);
  write_u64(o, m.faces.size());
  for (auto& f : m.faces)
    for (int k = 0; k < 3; ++k) write_u32(o, uint32_t(f[size_t(k)]));
  write_u64(o, m.uv.size());
  for (auto& t : m.uv) {
    write_f64(o, double(t[0]));
    write_f64(o, double(t[1]));
  }
}
inline Mesh read_mesh(std::istream& i) {
  Mesh m;
  m.vertices.resize(size_t(read_u64(i)));
  for (auto& v : m.vertices) v = read_vec3(i);
  m.faces.resize(size_t(read_u64(i)));
  for (auto& f : m.faces)
    for (int k = 0; k < 3; ++k) f[size_t(k)] = int(read_u32(i));
  m.uv.resize(size_t(read_u64(i)));
  for (auto& t : m.uv) {
    t[0] = real(read_f64(i));
    t[1] = real(read_f64(i));
  }
  return m;
}

}  // namespace detail

inline void save_model(const std::string& path, const Model& m) {
  using namespace detail;
  std::ofstream o(path, std::ios::binary);
  check(o.good(), "save_model: cannot open " + path);
  o.write(kModelMagic, 8);
  write_u32(o, kModelVersion);

  // extractor
  const auto& ec = m.extractor.cfg;
  write_u32(o, uint32_t(ec.in_channels));
  write_u32(o, uint32_t(ec.hidden));
  write_u32(o, uint32_t(ec.d));
  write_u32(o, uint32_t(ec.groups));
  write_u32(o, uint32_t(ec.stride));
  write_u64(o, m.extractor.weights.size());
  for (const auto& w : m.extractor.weights) write_tensor(o, w);

  write_f64(o, double(m.momentum));
  write_u32(o, uint32_t(m.class_count()));
  for (int c = 0; c < m.class_count(); ++c) {
    const ShapeSpace& ss = m.shapes[size_t(c)];
    write_mesh(o, ss.tmpl);
    write_u32(o, uint32_t(ss.field.latent_dim));
    write_u32(o, uint32_t(ss.field.hidden.size()));
    for (int h : ss.field.hidden) write_u32(o, uint32_t(h));
    write_f64(o, double(ss.field.max_disp));
    write_u64(o, ss.field.W.size());
    for (const auto& w : ss.field.W) write_tensor(o, w);
    for (const auto& b : ss.field.b) write_tensor(o, b);
    write_tensor(o, ss.log_s);

    const NeuralTextureBank& bank = m.banks[size_t(c)];
    write_u32(o, uint32_t(bank.q));
    write_u32(o, uint32_t(bank.d));
    write_f64(o, double(bank.temp));
    write_f64(o, double(bank.sigma));
    write_u32(o, uint32_t(bank.bin_count()));
    for (int b = 0; b < bank.bin_count(); ++b) {
      write_vec3(o, bank.bins.axes[size_t(b)]);
      write_f64(o, double(bank.bins.angles[size_t(b)]));
    }
    write_tensor(o, bank.theta);
  }

  write_u32(o, uint32_t(m.background.d));
  write_u32(o, uint32_t(m.background.capacity));
  write_u32(o, uint32_t(m.background.size));
  write_u32(o, uint32_t(m.background.cursor));
  write_tensor(o, m.background.feats);
  check(o.good(), "save_model: write failed for " + path);
}

inline Model load_model(const std::string& path) {
  using namespace detail;
  std::ifstream i(path, std::ios::binary);
  check(i.good(), "load_model: cannot open " + path);
  char magic[8];
  i.read(magic, 8);
  check(std::equal(magic, magic + 8, kModelMagic), "load_model: bad magic in " + path);
  uint32_t version = read_u32(i);
  check(version == kModelVersion,
        "load_model: unsupported version " + std::to_string(version));

  Model m;
  m.extractor.cfg.in_channels = int(read_u32(i));
  m.extractor.cfg.hidden = int(read_u32(i));
  m.extractor.cfg.d = int(read_u32(i));
  m.extractor.cfg.groups = int(read_u32(i));
  m.extractor.cfg.stride = int(read_u32(i));
  m.extractor.weights.resize(size_t(read_u64(i)));
  for (auto& w : m.extractor.weights) w = read_tensor(i);

  m.momentum = real(read_f64(i));
  uint32_t classes = read_u32(i);
  for (uint32_t c = 0; c < classes; ++c) {
    ShapeSpace ss;
    ss.tmpl = read_mesh(i);
    ss.field.latent_dim = int(read_u32(i));
    ss.field.hidden.resize(size_t(read_u32(i)));
    for (auto& h : ss.field.hidden) h = int(read_u32(i));
    ss.field.max_disp = real(read_f64(i));
    size_t layers = size_t(read_u64(i));
    ss.field.W.resize(layers);
    for (auto& w : ss.field.W) w = read_tensor(i);
    ss.field.b.resize(layers);
    for (auto& b : ss.field.b) b = read_tensor(i);
    ss.log_s = read_tensor(i);
    m.shapes.push_back(std::move(ss));

    NeuralTextureBank bank;
    bank.q = int(read_u32(i));
    bank.d = int(read_u32(i));
    bank.temp = real(read_f64(i));
    bank.sigma = real(read_f64(i));
    uint32_t bins = read_u32(i);
    for (uint32_t b = 0; b < bins; ++b) {
      Vec3 axis = read_vec3(i);
      real angle = real(read_f64(i));
      bank.bins.axes.push_back(axis);
      bank.bins.angles.push_back(angle);
      bank.bins.rot.push_back(angle == 0 ? Mat3::identity() : axis_angle(axis, angle));
    }
    bank.theta = read_tensor(i);
    m.banks.push_back(std::move(bank));
  }

  m.background.d = int(read_u32(i));
  m.background.capacity = int(read_u32(i));
  m.background.size = int(read_u32(i));
  m.background.cursor = int(read_u32(i));
  m.background.feats = read_tensor(i);
  check(i.good(), "load_model: truncated file " + path);
  return m;
}

}  // namespace dmnt
