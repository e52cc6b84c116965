/*
 * SPDX-FileCopyrightText: Copyright (c) 2026 The SonoNav Authors. All rights reserved.
 * SPDX-License-Identifier: Apache-2.0
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 * http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "sononav/pose_math.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace sononav {

namespace {

constexpr double kMinProjectionNorm = 1e-6;

void require_finite(const Quat& q, const char* what) {
  if (!std::isfinite(q.w()) || !std::isfinite(q.x()) || !std::isfinite(q.y()) ||
      !std::isfinite(q.z())) {
    throw std::invalid_argument(std::string(what) + ": non-finite quaternion");
  }
}

Vec3 flatten(const Vec3& axis) {
  Vec3 h(axis.x(), axis.y(), 0.0);
  const double n = h.norm();
  if (n <= kMinProjectionNorm) {
    throw DegenerateProjection("probe axis is vertical; no horizontal projection");
  }
  return h / n;
}

}  // namespace

void Pose::validate(double tol) const {
  if (!position.allFinite()) throw std::invalid_argument("pose position is not finite");
  require_finite(orientation, "pose");
  if (std::abs(orientation.norm() - 1.0) > tol) {
    throw std::invalid_argument("pose orientation is not unit-norm");
  }
}

Action action_from_index(int index) {
  if (index < 0 || index >= kNumActions) {
    throw std::out_of_range("action index out of range: " + std::to_string(index));
  }
  return static_cast<Action>(index);
}

std::string_view action_name(Action a) {
  static constexpr std::array<std::string_view, kNumActions> kNames = {
      "TX+", "TX-", "TY+", "TY-", "RX+", "RX-", "RY+", "RY-", "RZ+", "RZ-"};
  return kNames[static_cast<std::size_t>(action_index(a))];
}

Action opposite(Action a) {
  // Actions come in (+, -) pairs at even/odd indices.
  return static_cast<Action>(action_index(a) ^ 1);
}

double deg_to_rad(double deg) { return deg * std::numbers::pi / 180.0; }
double rad_to_deg(double rad) { return rad * 180.0 / std::numbers::pi; }

double quat_angle(const Quat& q1, const Quat& q2) {
  require_finite(q1, "quat_angle");
  require_finite(q2, "quat_angle");
  // Half-angle form: exact for q2 = +/-q1 and well conditioned near zero.
  const Eigen::Vector4d a = q1.coeffs();
  const Eigen::Vector4d b = a.dot(q2.coeffs()) < 0.0 ? Eigen::Vector4d(-q2.coeffs()) : Eigen::Vector4d(q2.coeffs());
  return rad_to_deg(4.0 * std::atan2((a - b).norm(), (a + b).norm()));
}

double pos_distance(const Vec3& p1, const Vec3& p2) { return (p1 - p2).norm(); }

PoseImprovement pose_improvement(double d_t, double d_t1, double theta_t, double theta_t1,
                                 const StepSizes& steps) {
  if (steps.exhausted()) {
    throw std::invalid_argument("pose_improvement: step size is zero");
  }
  PoseImprovement out;
  out.delta_d = std::clamp((d_t - d_t1) / steps.d_step_mm(), -1.0, 1.0);
  out.delta_theta = std::clamp((theta_t - theta_t1) / steps.theta_step_deg(), -1.0, 1.0);
  return out;
}

double tilt_angle(const Quat& orientation) {
  const Eigen::Matrix3d r = orientation.toRotationMatrix();
  // <z_probe, [0,0,-1]> = -R(2,2)
  return rad_to_deg(std::acos(std::clamp(-r(2, 2), -1.0, 1.0)));
}

double tilt_angle(const Pose& pose) { return tilt_angle(pose.orientation); }

HorizontalAxes horizontal_axes(const Pose& pose) {
  const Eigen::Matrix3d r = pose.orientation.toRotationMatrix();
  return {flatten(r.col(0)), flatten(r.col(1))};
}

Quat axis_angle(const Vec3& axis, double angle_deg) {
  return Quat(Eigen::AngleAxisd(deg_to_rad(angle_deg), axis.normalized()));
}

Pose apply_action(const Pose& pose, Action a, const StepSizes& steps) {
  Pose out = pose;
  const double sign = (action_index(a) % 2 == 0) ? 1.0 : -1.0;
  switch (a) {
    case Action::kTxPlus:
    case Action::kTxMinus:
      out.position += sign * steps.d_step_mm() * horizontal_axes(pose).x;
      break;
    case Action::kTyPlus:
    case Action::kTyMinus:
      out.position += sign * steps.d_step_mm() * horizontal_axes(pose).y;
      break;
    case Action::kRxPlus:
    case Action::kRxMinus:
      out.orientation = pose.orientation * axis_angle(Vec3::UnitX(), sign * steps.theta_step_deg());
      break;
    case Action::kRyPlus:
    case Action::kRyMinus:
      out.orientation = pose.orientation * axis_angle(Vec3::UnitY(), sign * steps.theta_step_deg());
      break;
    case Action::kRzPlus:
    case Action::kRzMinus:
      out.orientation = pose.orientation * axis_angle(Vec3::UnitZ(), sign * steps.theta_step_deg());
      break;
  }
  out.orientation.normalize();
  return out;
}

Quat probe_down_orientation(double yaw_deg) {
  Quat q = axis_angle(Vec3::UnitX(), 180.0) * axis_angle(Vec3::UnitZ(), yaw_deg);
  q.normalize();
  return q;
}

Quat canonical(const Quat& q) {
  const auto& c = q.coeffs();  // x, y, z, w
  const double lead = c.w() != 0.0 ? c.w() : (c.x() != 0.0 ? c.x() : (c.y() != 0.0 ? c.y() : c.z()));
  return lead < 0.0 ? Quat(-c.w(), -c.x(), -c.y(), -c.z()) : q;
}

}  // namespace sononav
