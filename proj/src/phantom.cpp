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

#include "sononav/phantom.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <random>
#include <stdexcept>
#include <string>

namespace sononav {

namespace {

struct Blob {
  Vec3 center;
  Vec3 half_axes;
};

double level_offset(const PhantomSpec& spec, int k) { return k - (spec.ridge_count - 1) / 2.0; }

double level_y(const PhantomSpec& spec, int k) {
  return spec.size_mm.y() / 2.0 + level_offset(spec, k) * spec.ridge_pitch_mm;
}

std::vector<Blob> structures(const PhantomSpec& spec) {
  std::vector<Blob> out;
  const double cx = spec.size_mm.x() / 2.0;
  for (int k = 0; k < spec.ridge_count; ++k) {
    const double y = level_y(spec, k);
    const double lamina_depth = spec.lamina_depth_mm + level_offset(spec, k) * spec.lamina_depth_step_mm;
    const double xl = cx + spec.lamina_offset_mm;
    const double xc = cx - spec.lamina_offset_mm;
    out.push_back({Vec3(xl, y, phantom_body_top(spec, xl, y) - lamina_depth), spec.lamina_half_axes_mm});
    out.push_back({Vec3(xc, y, phantom_body_top(spec, xc, y) - lamina_depth - spec.contralateral_extra_depth_mm),
                   spec.lamina_half_axes_mm * 0.8});
    out.push_back({Vec3(cx, y, phantom_body_top(spec, cx, y) - spec.spinous_depth_mm), spec.spinous_half_axes_mm});
  }
  return out;
}

void require_positive(double v, const char* name) {
  if (!(v > 0.0) || !std::isfinite(v)) {
    throw std::invalid_argument(std::string("phantom spec: ") + name + " must be positive");
  }
}

std::vector<double> gaussian_kernel(double sigma_vox) {
  const int r = std::max(1, static_cast<int>(std::ceil(3.0 * sigma_vox)));
  std::vector<double> k(static_cast<std::size_t>(2 * r + 1));
  double sum = 0.0;
  for (int i = -r; i <= r; ++i) {
    k[static_cast<std::size_t>(i + r)] = std::exp(-0.5 * i * i / (sigma_vox * sigma_vox));
    sum += k[static_cast<std::size_t>(i + r)];
  }
  for (auto& w : k) w /= sum;
  return k;
}

// Separable blur along each axis, edges clamped. Layout x fastest.
void blur3(std::vector<float>& f, const std::array<int, 3>& dims, const std::vector<double>& kernel) {
  const int r = static_cast<int>(kernel.size() / 2);
  const std::array<std::size_t, 3> stride{1, static_cast<std::size_t>(dims[0]),
                                          static_cast<std::size_t>(dims[0]) * dims[1]};
  std::vector<float> line;
  for (int axis = 0; axis < 3; ++axis) {
    const int len = dims[axis];
    line.resize(static_cast<std::size_t>(len));
    const int a1 = axis == 0 ? 1 : 0;
    const int a2 = axis == 2 ? 1 : 2;
    for (int u = 0; u < dims[a2]; ++u) {
      for (int v = 0; v < dims[a1]; ++v) {
        const std::size_t base = u * stride[a2] + v * stride[a1];
        for (int t = 0; t < len; ++t) line[static_cast<std::size_t>(t)] = f[base + t * stride[axis]];
        for (int t = 0; t < len; ++t) {
          double acc = 0.0;
          for (int d = -r; d <= r; ++d) {
            const int q = std::clamp(t + d, 0, len - 1);
            acc += kernel[static_cast<std::size_t>(d + r)] * line[static_cast<std::size_t>(q)];
          }
          f[base + t * stride[axis]] = static_cast<float>(acc);
        }
      }
    }
  }
}

}  // namespace

double phantom_body_top(const PhantomSpec& spec, double x, double y) {
  const Vec3& a = spec.body_half_axes_mm;
  const double u = (x - spec.size_mm.x() / 2.0) / a.x();
  const double v = (y - spec.size_mm.y() / 2.0) / a.y();
  const double r = 1.0 - u * u - v * v;
  return r > 0.0 ? a.z() * std::sqrt(r) : -1.0;
}

std::vector<Vec3> phantom_lamina_crests(const PhantomSpec& spec) {
  std::vector<Vec3> out;
  const auto blobs = structures(spec);
  for (std::size_t i = 0; i < blobs.size(); i += 3) {
    out.push_back(blobs[i].center + Vec3(0.0, 0.0, blobs[i].half_axes.z()));
  }
  return out;
}

void PhantomSpec::validate() const {
  require_positive(size_mm.x(), "size_mm.x");
  require_positive(size_mm.y(), "size_mm.y");
  require_positive(size_mm.z(), "size_mm.z");
  require_positive(spacing_mm, "spacing_mm");
  for (int a = 0; a < 3; ++a) {
    require_positive(body_half_axes_mm[a], "body_half_axes_mm");
    require_positive(lamina_half_axes_mm[a], "lamina_half_axes_mm");
    require_positive(spinous_half_axes_mm[a], "spinous_half_axes_mm");
  }
  require_positive(ridge_pitch_mm, "ridge_pitch_mm");
  require_positive(lamina_depth_mm, "lamina_depth_mm");
  require_positive(lamina_offset_mm, "lamina_offset_mm");
  require_positive(spinous_depth_mm, "spinous_depth_mm");
  require_positive(tissue_intensity, "tissue_intensity");
  require_positive(ridge_intensity, "ridge_intensity");
  require_positive(fiber_period_mm, "fiber_period_mm");
  if (ridge_count < 1) throw std::invalid_argument("phantom spec: ridge_count must be >= 1");
  if (speckle_variance < 0.0 || blur_sigma_mm < 0.0 || attenuation_per_mm < 0.0 || shadow_strength < 0.0 || shadow_strength > 1.0 ||
      fiber_contrast < 0.0 || fiber_contrast >= 1.0) {
    throw std::invalid_argument("phantom spec: noise/attenuation/shadow parameters out of range");
  }
  if (goal_tilt_deg < 0.0 || goal_tilt_deg > 30.0) {
    throw std::invalid_argument("phantom spec: goal_tilt_deg must lie in [0, 30]");
  }
  if (body_half_axes_mm.z() >= size_mm.z()) {
    throw std::invalid_argument("phantom spec: body is taller than the volume");
  }
  if (2.0 * body_half_axes_mm.x() > size_mm.x()) {
    throw std::invalid_argument("phantom spec: body is wider than the volume");
  }
  for (const Blob& b : structures(*this)) {
    const Vec3& c = b.center;
    const Vec3& h = b.half_axes;
    if (c.z() - h.z() <= 0.0) throw std::invalid_argument("phantom spec: structure below the body floor");
    for (double sx : {-1.0, 0.0, 1.0}) {
      for (double sy : {-1.0, 0.0, 1.0}) {
        const double x = c.x() + sx * h.x();
        const double y = c.y() + sy * h.y();
        if (x < 0.0 || x > size_mm.x() || y < 0.0 || y > size_mm.y()) {
          throw std::invalid_argument("phantom spec: structure outside the volume");
        }
        if (phantom_body_top(*this, x, y) <= c.z() + h.z()) {
          throw std::invalid_argument("phantom spec: structure outside the body");
        }
      }
    }
  }
}

Phantom generate_phantom(const PhantomSpec& spec) {
  spec.validate();
  const double s = spec.spacing_mm;
  const int nx = static_cast<int>(std::lround(spec.size_mm.x() / s)) + 1;
  const int ny = static_cast<int>(std::lround(spec.size_mm.y() / s)) + 1;
  const int nz = static_cast<int>(std::lround(spec.size_mm.z() / s)) + 1;
  Volume vol({nx, ny, nz}, s, Vec3::Zero());

  const auto blobs = structures(spec);
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const double speckle_sd = std::sqrt(spec.speckle_variance);
  const double cx = spec.size_mm.x() / 2.0;
  const std::size_t n = static_cast<std::size_t>(nx) * ny * nz;
  auto index = [&](int i, int j, int k) { return (static_cast<std::size_t>(k) * ny + j) * nx + i; };

  // Noiseless echo strength and the body mask, then a speckle field.
  std::vector<float> echo(n, 0.0f);
  std::vector<uint8_t> inside(n, 0);
  struct Span {
    double lo;
    double hi;
  };
  std::vector<Span> spans;
  for (int j = 0; j < ny; ++j) {
    const double y = j * s;
    for (int i = 0; i < nx; ++i) {
      const double x = i * s;
      const double top = phantom_body_top(spec, x, y);
      if (top <= 0.0) continue;
      spans.clear();
      double shadow_top = -1.0;
      for (const Blob& b : blobs) {
        const double u = (x - b.center.x()) / b.half_axes.x();
        const double v = (y - b.center.y()) / b.half_axes.y();
        const double r = 1.0 - u * u - v * v;
        if (r <= 0.0) continue;
        const double hz = b.half_axes.z() * std::sqrt(r);
        spans.push_back({b.center.z() - hz, b.center.z() + hz});
        shadow_top = std::max(shadow_top, b.center.z() - hz);
      }
      const double fibers = 1.0 + spec.fiber_contrast * std::sin(2.0 * std::numbers::pi * (x - cx) / spec.fiber_period_mm);
      const int k_top = std::min(static_cast<int>(std::floor(top / s)), nz - 1);
      for (int k = 0; k <= k_top; ++k) {
        const double z = k * s;
        const double depth = top - z;
        double base = spec.tissue_intensity * fibers;
        if (depth < spec.skin_thickness_mm) {
          base = spec.skin_intensity;
        } else if (std::abs(depth - spec.fascia_depth_mm) < 1.0) {
          base = spec.fascia_intensity;
        }
        bool in_ridge = false;
        for (const Span& sp : spans) {
          if (z >= sp.lo && z <= sp.hi) in_ridge = true;
        }
        if (in_ridge) {
          base = spec.ridge_intensity;
        } else if (z < shadow_top) {
          base *= 1.0 - spec.shadow_strength;
        }
        echo[index(i, j, k)] = static_cast<float>(base * std::exp(-spec.attenuation_per_mm * depth));
        inside[index(i, j, k)] = 1;
      }
    }
  }
  std::vector<float> noise;
  double noise_gain = 1.0;
  if (speckle_sd > 0.0) {
    noise.resize(n);
    for (auto& v : noise) v = static_cast<float>(normal(rng));
  }
  if (spec.blur_sigma_mm > 0.0) {
    const std::vector<double> kernel = gaussian_kernel(spec.blur_sigma_mm / s);
    blur3(echo, {nx, ny, nz}, kernel);
    if (!noise.empty()) {
      blur3(noise, {nx, ny, nz}, kernel);
      double sq = 0.0;
      for (double w : kernel) sq += w * w;
      noise_gain = 1.0 / std::pow(sq, 1.5);
    }
  }
  for (int k = 0; k < nz; ++k) {
    for (int j = 0; j < ny; ++j) {
      for (int i = 0; i < nx; ++i) {
        const std::size_t at = index(i, j, k);
        if (!inside[at]) continue;
        double value = echo[at];
        if (!noise.empty()) value *= std::max(0.05, 1.0 + speckle_sd * noise_gain * noise[at]);
        vol.at(i, j, k) = static_cast<uint8_t>(std::clamp(std::lround(value), 1L, 255L));
      }
    }
  }

  // Goal: probe plane tilted medially about its y axis so that it passes
  // through the middle ipsilateral lamina crest.
  const int mid = (spec.ridge_count - 1) / 2;
  const Vec3 crest = phantom_lamina_crests(spec)[static_cast<std::size_t>(mid)];
  const double tilt = deg_to_rad(spec.goal_tilt_deg);
  const SurfaceMap surface = extract_surface(vol);
  double gx = crest.x();
  double gz = surface.lookup(gx, crest.y());
  for (int it = 0; it < 20; ++it) {
    gx = crest.x() + (gz - crest.z()) * std::tan(tilt);
    gz = surface.lookup(gx, crest.y());
  }
  Phantom out{std::move(vol), Pose{}};
  out.goal.position = Vec3(gx, crest.y(), gz);
  out.goal.orientation = (probe_down_orientation(0.0) * axis_angle(Vec3::UnitY(), -spec.goal_tilt_deg)).normalized();
  return out;
}

}  // namespace sononav
