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

#ifndef SONONAV_PHANTOM_HPP
#define SONONAV_PHANTOM_HPP

#include <cstdint>
#include <vector>

#include "sononav/pose_math.hpp"
#include "sononav/volume.hpp"

namespace sononav {

/**
 * Parameters of the procedural lumbar-spine phantom family.
 *
 * The body is a half-ellipsoid resting on the volume floor. A row of
 * vertebra analogs runs along world y: a midline spinous process and two
 * laminae per level. Lamina depth drifts from level to level so that the
 * pattern along y is not strictly periodic. The goal plane is a
 * paramedian sagittal-oblique view through the ipsilateral (+x) lamina
 * crests of the middle level.
 */
struct PhantomSpec {
  Vec3 size_mm{120.0, 160.0, 90.0};  // W (x), L (y), height (z)
  double spacing_mm = Volume::kDefaultSpacingMm;

  Vec3 body_half_axes_mm{55.0, 95.0, 70.0};
  double tissue_intensity = 95.0;
  double skin_intensity = 170.0;
  double skin_thickness_mm = 2.0;
  double fascia_depth_mm = 9.0;
  double fascia_intensity = 150.0;
  double fiber_period_mm = 7.0;
  double fiber_contrast = 0.15;

  int ridge_count = 5;
  double ridge_pitch_mm = 30.0;
  double lamina_depth_mm = 24.0;          // middle level, below the local surface
  double lamina_depth_step_mm = 3.0;      // per level along +y
  double lamina_offset_mm = 17.0;         // lateral distance from the midline
  Vec3 lamina_half_axes_mm{8.0, 9.0, 3.0};
  double contralateral_extra_depth_mm = 5.0;
  double spinous_depth_mm = 12.0;
  Vec3 spinous_half_axes_mm{3.0, 6.0, 5.0};
  double ridge_intensity = 235.0;

  double speckle_variance = 0.06;
  /// Gaussian point-spread sigma applied to tissue and speckle; 0 disables.
  double blur_sigma_mm = 1.0;
  double attenuation_per_mm = 0.01;
  double shadow_strength = 0.85;

  double goal_tilt_deg = 10.0;
  uint64_t seed = 1;

  /// Throws std::invalid_argument for non-positive geometry or structures
  /// that do not fit inside the body.
  void validate() const;
};

struct Phantom {
  Volume volume;
  Pose goal;
};

/// Deterministic for a fixed spec (including seed).
Phantom generate_phantom(const PhantomSpec& spec);

/// Analytic height (world z, mm) of the body's top surface at (x, y), or a
/// negative value outside the body footprint.
double phantom_body_top(const PhantomSpec& spec, double x, double y);

/// Centers (world mm) of the ipsilateral lamina crests, one per level.
std::vector<Vec3> phantom_lamina_crests(const PhantomSpec& spec);

}  // namespace sononav

#endif  // SONONAV_PHANTOM_HPP
