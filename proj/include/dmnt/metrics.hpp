#pragma once

// Evaluation metrics: geodesic rotation error, mask IoU, and aggregation
// into a report with a per-occlusion-level breakdown.

#include <algorithm>
#include <map>

#include "dmnt/camera.hpp"

namespace dmnt {

inline bool is_rotation(const Mat3& R, real tol = real(1e-6)) {
  Mat3 I = transpose(R) * R;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      if (std::abs(I(i, j) - (i == j ? 1 : 0)) > tol) return false;
  real det = R(0, 0) * (R(1, 1) * R(2, 2) - R(1, 2) * R(2, 1)) -
             R(0, 1) * (R(1, 0) * R(2, 2) - R(1, 2) * R(2, 0)) +
             R(0, 2) * (R(1, 0) * R(2, 1) - R(1, 1) * R(2, 0));
  return std::abs(det - 1) <= 10 * tol;
}

// Geodesic distance ||logm(R_pred^T R_gt)||_F / sqrt(2) in [0, pi], i.e. the
// rotation angle of the relative rotation.
inline real pose_error(const Mat3& R_pred, const Mat3& R_gt) {
  check(is_rotation(R_pred) && is_rotation(R_gt), "pose_error: input is not a rotation");
  Mat3 rel = transpose(R_pred) * R_gt;
  real tr = rel(0, 0) + rel(1, 1) + rel(2, 2);
  real c = std::clamp((tr - 1) / 2, real(-1), real(1));
  return std::acos(c);
}

inline real mask_iou(const std::vector<uint8_t>& a, const std::vector<uint8_t>& b) {
  check(a.size() == b.size(), "mask_iou: size mismatch");
  int64_t inter = 0, uni = 0;
  for (size_t i = 0; i < a.size(); ++i) {
    bool pa = a[i] != 0, pb = b[i] != 0;
    inter += pa && pb;
    uni += pa || pb;
  }
  return uni == 0 ? 1 : real(inter) / real(uni);
}

// One evaluated sample; `valid` = false marks a missing prediction that is
// excluded from every average.
struct EvalSample {
  bool valid = true;
  real pose_err = 0;
  real amodal_iou = 0;
  real visible_iou = 0;
  bool class_correct = false;
  int occlusion_level = 0;
};

struct MetricBucket {
  int count = 0;
  real acc_pi6 = 0, acc_pi18 = 0;
  real median_pose_error = 0;
  real amodal_iou = 0, visible_iou = 0;
  real top1 = 0;
};

struct MetricReport {
  MetricBucket overall;
  std::map<int, MetricBucket> per_level;
  int missing = 0;
};

namespace detail {
inline MetricBucket reduce_bucket(const std::vector<const EvalSample*>& xs) {
  MetricBucket b;
  b.count = int(xs.size());
  if (xs.empty()) return b;
  std::vector<real> errs;
  for (const EvalSample* s : xs) {
    // strict inequality at the threshold boundary
    b.acc_pi6 += s->pose_err < kPi / 6 ? 1 : 0;
    b.acc_pi18 += s->pose_err < kPi / 18 ? 1 : 0;
    b.amodal_iou += s->amodal_iou;
    b.visible_iou += s->visible_iou;
    b.top1 += s->class_correct ? 1 : 0;
    errs.push_back(s->pose_err);
  }
  real n = real(xs.size());
  b.acc_pi6 /= n;
  b.acc_pi18 /= n;
  b.amodal_iou /= n;
  b.visible_iou /= n;
  b.top1 /= n;
  std::sort(errs.begin(), errs.end());
  size_t m = errs.size();
  b.median_pose_error = m % 2 ? errs[m / 2] : (errs[m / 2 - 1] + errs[m / 2]) / 2;
  return b;
}
}  // namespace detail

inline MetricReport evaluate(const std::vector<EvalSample>& samples) {
  MetricReport r;
  std::vector<const EvalSample*> all;
  std::map<int, std::vector<const EvalSample*>> by_level;
  for (const auto& s : samples) {
    if (!s.valid) {
      ++r.missing;
      continue;
    }
    all.push_back(&s);
    by_level[s.occlusion_level].push_back(&s);
  }
  r.overall = detail::reduce_bucket(all);
  for (auto& [lvl, xs] : by_level) r.per_level[lvl] = detail::reduce_bucket(xs);
  return r;
}

}  // namespace dmnt
