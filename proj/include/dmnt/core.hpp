#pragma once

// Basic scalar/vector types and small utilities shared across the library.

#include <array>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <limits>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace dmnt {

#ifdef DMNT_SINGLE_PRECISION
using real = float;
#else
using real = double;
#endif

constexpr real kPi = real(3.14159265358979323846);

inline void check(bool cond, const std::string& msg) {
  if (!cond) throw std::runtime_error(msg);
}

// ---------------------------------------------------------------------------
// 3-vectors / 3x3 matrices (row-major)

struct Vec3 {
  real x = 0, y = 0, z = 0;
  real& operator[](int i) { return (&x)[i]; }
  real operator[](int i) const { return (&x)[i]; }
};

inline Vec3 operator+(Vec3 a, Vec3 b) { return {a.x + b.x, a.y + b.y, a.z + b.z}; }
inline Vec3 operator-(Vec3 a, Vec3 b) { return {a.x - b.x, a.y - b.y, a.z - b.z}; }
inline Vec3 operator*(real s, Vec3 a) { return {s * a.x, s * a.y, s * a.z}; }
inline Vec3 operator*(Vec3 a, real s) { return s * a; }
inline Vec3 operator/(Vec3 a, real s) { return {a.x / s, a.y / s, a.z / s}; }
inline Vec3& operator+=(Vec3& a, Vec3 b) { a = a + b; return a; }
inline Vec3& operator-=(Vec3& a, Vec3 b) { a = a - b; return a; }
inline real dot(Vec3 a, Vec3 b) { return a.x * b.x + a.y * b.y + a.z * b.z; }
inline Vec3 cross(Vec3 a, Vec3 b) {
  return {a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z, a.x * b.y - a.y * b.x};
}
inline real norm(Vec3 a) { return std::sqrt(dot(a, a)); }
inline real norm2(Vec3 a) { return dot(a, a); }
inline Vec3 normalized(Vec3 a) {
  real n = norm(a);
  return n > 0 ? a / n : Vec3{0, 0, 0};
}
inline Vec3 cwise(Vec3 a, Vec3 b) { return {a.x * b.x, a.y * b.y, a.z * b.z}; }

struct Mat3 {
  std::array<real, 9> m{};  // row-major
  real& operator()(int r, int c) { return m[3 * r + c]; }
  real operator()(int r, int c) const { return m[3 * r + c]; }

  static Mat3 identity() {
    Mat3 I;
    I(0, 0) = I(1, 1) = I(2, 2) = 1;
    return I;
  }
  static Mat3 from_rows(Vec3 a, Vec3 b, Vec3 c) {
    Mat3 r;
    for (int i = 0; i < 3; ++i) { r(0, i) = a[i]; r(1, i) = b[i]; r(2, i) = c[i]; }
    return r;
  }
  Vec3 row(int r) const { return {m[3 * r], m[3 * r + 1], m[3 * r + 2]}; }
};

inline Vec3 operator*(const Mat3& M, Vec3 v) {
  return {dot(M.row(0), v), dot(M.row(1), v), dot(M.row(2), v)};
}
inline Mat3 operator*(const Mat3& A, const Mat3& B) {
  Mat3 C;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      real s = 0;
      for (int k = 0; k < 3; ++k) s += A(i, k) * B(k, j);
      C(i, j) = s;
    }
  return C;
}
inline Mat3 transpose(const Mat3& A) {
  Mat3 T;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) T(i, j) = A(j, i);
  return T;
}

// Rodrigues rotation about unit axis.
inline Mat3 axis_angle(Vec3 axis, real angle) {
  Vec3 u = normalized(axis);
  real c = std::cos(angle), s = std::sin(angle), t = 1 - c;
  Mat3 R;
  R(0, 0) = c + u.x * u.x * t;
  R(0, 1) = u.x * u.y * t - u.z * s;
  R(0, 2) = u.x * u.z * t + u.y * s;
  R(1, 0) = u.y * u.x * t + u.z * s;
  R(1, 1) = c + u.y * u.y * t;
  R(1, 2) = u.y * u.z * t - u.x * s;
  R(2, 0) = u.z * u.x * t - u.y * s;
  R(2, 1) = u.z * u.y * t + u.x * s;
  R(2, 2) = c + u.z * u.z * t;
  return R;
}

// ---------------------------------------------------------------------------
// RNG: fixed engine so results are reproducible across platforms.

using Rng = std::mt19937_64;

inline real uniform(Rng& rng, real lo = 0, real hi = 1) {
  return lo + (hi - lo) * real(std::uniform_real_distribution<double>(0.0, 1.0)(rng));
}
inline real gaussian(Rng& rng, real mean = 0, real stddev = 1) {
  return real(std::normal_distribution<double>(double(mean), double(stddev))(rng));
}
inline int uniform_int(Rng& rng, int lo, int hi) {  // inclusive bounds
  return std::uniform_int_distribution<int>(lo, hi)(rng);
}

inline bool is_finite(real v) { return std::isfinite(v); }

}  // namespace dmnt
