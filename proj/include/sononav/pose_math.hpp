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

#ifndef SONONAV_POSE_MATH_HPP
#define SONONAV_POSE_MATH_HPP

#include <array>
#include <stdexcept>
#include <string>
#include <string_view>

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace sononav {

using Vec3 = Eigen::Vector3d;
using Quat = Eigen::Quaterniond;

/// Raised when a probe axis projects to (almost) nothing on the horizontal
/// plane, i.e. the axis is vertical.
class DegenerateProjection : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/**
 * Probe pose in the world frame.
 *
 * Probe axes: z points into the patient, y spans the lateral image axis,
 * x is the elevational (out-of-plane) direction. The image plane is the
 * probe yz plane.
 */
struct Pose {
  Vec3 position = Vec3::Zero();  // mm
  Quat orientation = Quat::Identity();

  /// Throws std::invalid_argument if position is non-finite or the
  /// quaternion is not unit-norm within `tol`.
  void validate(double tol = 1e-9) const;
};

/// The 10 probe-centric discrete actions. Indices are stable.
enum class Action : int {
  kTxPlus = 0,
  kTxMinus = 1,
  kTyPlus = 2,
  kTyMinus = 3,
  kRxPlus = 4,
  kRxMinus = 5,
  kRyPlus = 6,
  kRyMinus = 7,
  kRzPlus = 8,
  kRzMinus = 9,
};

inline constexpr int kNumActions = 10;

inline constexpr std::array<Action, kNumActions> kAllActions = {
    Action::kTxPlus, Action::kTxMinus, Action::kTyPlus, Action::kTyMinus,
    Action::kRxPlus, Action::kRxMinus, Action::kRyPlus, Action::kRyMinus,
    Action::kRzPlus, Action::kRzMinus};

constexpr int action_index(Action a) { return static_cast<int>(a); }
/// Throws std::out_of_range for indices outside [0, 9].
Action action_from_index(int index);
std::string_view action_name(Action a);
Action opposite(Action a);
constexpr bool is_translation(Action a) { return action_index(a) < 4; }

/// Hierarchical step sizes. Both shrink together by one unit from 5 to 0.
struct StepSizes {
  static constexpr int kInitial = 5;

  int level = kInitial;

  double d_step_mm() const { return static_cast<double>(level); }
  double theta_step_deg() const { return static_cast<double>(level); }
  bool exhausted() const { return level <= 0; }
  void decrement() {
    if (level > 0) --level;
  }
  bool operator==(const StepSizes&) const = default;
};

double deg_to_rad(double deg);
double rad_to_deg(double rad);

/// Minimum rotation angle (degrees) between two orientations, in [0, 180].
double quat_angle(const Quat& q1, const Quat& q2);

/// Euclidean distance in mm.
double pos_distance(const Vec3& p1, const Vec3& p2);

struct PoseImprovement {
  double delta_d = 0.0;
  double delta_theta = 0.0;
};

/// Step-normalized improvement in distance and angle, each clamped to
/// [-1, 1]. Throws std::invalid_argument for a zero step size.
PoseImprovement pose_improvement(double d_t, double d_t1, double theta_t,
                                 double theta_t1, const StepSizes& steps);

/// Angle (degrees) between the probe z axis and world -z.
double tilt_angle(const Pose& pose);
double tilt_angle(const Quat& orientation);

struct HorizontalAxes {
  Vec3 x;
  Vec3 y;
};

/// Probe x and y axes with their world-z component removed and renormalized.
HorizontalAxes horizontal_axes(const Pose& pose);

/// Candidate pose after one action, before any environment restriction.
Pose apply_action(const Pose& pose, Action a, const StepSizes& steps);

/// Orientation with the probe z axis along world -z, probe x along world x
/// and probe y along world -y (a 180 degree turn about world x), followed by
/// a turn of `yaw_deg` about the probe z axis.
Quat probe_down_orientation(double yaw_deg = 0.0);

/// Rotation of `angle_deg` about a unit axis.
Quat axis_angle(const Vec3& axis, double angle_deg);

/// Canonical sign: w >= 0 (ties resolved on the first nonzero component).
Quat canonical(const Quat& q);

}  // namespace sononav

#endif  // SONONAV_POSE_MATH_HPP
