#pragma once

// Fixed-focal perspective camera on the viewing sphere.
//
// Convention (anchor: azimuth=elevation=theta=0, distance d):
//   world is z-up; the camera sits at C = d*(cos e cos a, cos e sin a, sin e),
//   looks at the origin, and theta rolls it about the viewing axis.
//   Camera frame: x right, y down, z forward; X_cam = R*X + t with t = -R*C.
//   Pixels: px = cx + focal * x/z, py = cy + focal * y/z.

#include "dmnt/core.hpp"

namespace dmnt {

struct CameraPose {
  real azimuth = 0, elevation = 0, theta = 0, distance = 1;
};

struct Intrinsics {
  int width = 0, height = 0;
  real focal = 0;  // pixels
  real cx() const { return real(0.5) * real(width); }
  real cy() const { return real(0.5) * real(height); }
};

inline Intrinsics default_intrinsics(int width, int height, real focal_per_width = real(2.5)) {
  return {width, height, focal_per_width * real(width)};
}

struct Extrinsics {
  Mat3 R;
  Vec3 t;
  Vec3 C;  // camera center in world coordinates
};

namespace detail {
inline void camera_basis(const CameraPose& p, Vec3& s, Vec3& u, Vec3& f) {
  real sa = std::sin(p.azimuth), ca = std::cos(p.azimuth);
  real se = std::sin(p.elevation), ce = std::cos(p.elevation);
  s = {-sa, ca, 0};             // image x (right)
  u = {se * ca, se * sa, -ce};  // image y (down)
  f = {-ce * ca, -ce * sa, -se};  // forward, toward the origin
}
inline Mat3 roll_matrix(real th) {
  real c = std::cos(th), s = std::sin(th);
  Mat3 Rz = Mat3::identity();
  Rz(0, 0) = c; Rz(0, 1) = s;
  Rz(1, 0) = -s; Rz(1, 1) = c;
  return Rz;
}
}  // namespace detail

inline Extrinsics pose_to_extrinsics(const CameraPose& p) {
  check(p.distance > 0, "pose_to_extrinsics: distance must be positive");
  Vec3 s, u, f;
  detail::camera_basis(p, s, u, f);
  Extrinsics e;
  e.R = detail::roll_matrix(p.theta) * Mat3::from_rows(s, u, f);
  e.C = real(-p.distance) * f;
  e.t = real(-1) * (e.R * e.C);
  return e;
}

// Derivatives of R, t, C with respect to (azimuth, elevation, theta, distance).
struct ExtrinsicsJac {
  std::array<Mat3, 4> dR;
  std::array<Vec3, 4> dt, dC;
};

inline ExtrinsicsJac pose_jacobian(const CameraPose& p) {
  real sa = std::sin(p.azimuth), ca = std::cos(p.azimuth);
  real se = std::sin(p.elevation), ce = std::cos(p.elevation);
  Vec3 s, u, f;
  detail::camera_basis(p, s, u, f);
  Mat3 base = Mat3::from_rows(s, u, f);
  Mat3 Rz = detail::roll_matrix(p.theta);

  Vec3 ds_da = {-ca, -sa, 0};
  Vec3 du_da = {-se * sa, se * ca, 0};
  Vec3 df_da = {ce * sa, -ce * ca, 0};
  Vec3 du_de = {ce * ca, ce * sa, se};
  Vec3 df_de = {se * ca, se * sa, -ce};

  Mat3 dbase_da = Mat3::from_rows(ds_da, du_da, df_da);
  Mat3 dbase_de = Mat3::from_rows(Vec3{}, du_de, df_de);
  Mat3 dRz;  // zero-initialized
  real cth = std::cos(p.theta), sth = std::sin(p.theta);
  dRz(0, 0) = -sth; dRz(0, 1) = cth;
  dRz(1, 0) = -cth; dRz(1, 1) = -sth;

  ExtrinsicsJac j;
  j.dR[0] = Rz * dbase_da;
  j.dR[1] = Rz * dbase_de;
  j.dR[2] = dRz * base;
  j.dR[3] = Mat3{};

  j.dC[0] = real(-p.distance) * df_da;
  j.dC[1] = real(-p.distance) * df_de;
  j.dC[2] = Vec3{};
  j.dC[3] = real(-1) * f;

  Extrinsics e = pose_to_extrinsics(p);
  for (int k = 0; k < 4; ++k)
    j.dt[k] = real(-1) * (j.dR[k] * e.C + e.R * j.dC[k]);
  return j;
}

}  // namespace dmnt
