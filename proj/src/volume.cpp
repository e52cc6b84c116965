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

#include "sononav/volume.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace sononav {

namespace {

// Lattice-coordinate slack so points that land on the outer voxel layer
// through rounding are still treated as inside.
constexpr double kEdgeSlack = 1e-9;

}  // namespace

Volume::Volume(std::array<int, 3> dims, double spacing_mm, Vec3 origin_mm)
    : Volume(dims, spacing_mm, origin_mm,
             std::vector<uint8_t>(static_cast<std::size_t>(std::max(dims[0], 0)) * std::max(dims[1], 0) *
                                  std::max(dims[2], 0))) {}

Volume::Volume(std::array<int, 3> dims, double spacing_mm, Vec3 origin_mm, std::vector<uint8_t> data)
    : dims_(dims), spacing_(spacing_mm), origin_(std::move(origin_mm)), data_(std::move(data)) {
  if (dims_[0] <= 0 || dims_[1] <= 0 || dims_[2] <= 0) {
    throw std::invalid_argument("volume dims must be positive");
  }
  if (!(spacing_ > 0.0) || !std::isfinite(spacing_)) {
    throw std::invalid_argument("volume spacing must be positive");
  }
  if (!origin_.allFinite()) throw std::invalid_argument("volume origin must be finite");
  const std::size_t expected = static_cast<std::size_t>(dims_[0]) * dims_[1] * dims_[2];
  if (data_.size() != expected) {
    throw std::invalid_argument("volume data size " + std::to_string(data_.size()) + " != " +
                                std::to_string(expected));
  }
}

Vec3 Volume::extent() const {
  return Vec3(dims_[0] - 1, dims_[1] - 1, dims_[2] - 1) * spacing_;
}

double Volume::sample(const Vec3& world) const {
  const double inv = 1.0 / spacing_;
  double f[3] = {(world.x() - origin_.x()) * inv, (world.y() - origin_.y()) * inv,
                 (world.z() - origin_.z()) * inv};
  int i0[3];
  double t[3];
  for (int a = 0; a < 3; ++a) {
    const double hi = dims_[a] - 1;
    if (!(f[a] >= -kEdgeSlack && f[a] <= hi + kEdgeSlack)) return 0.0;
    f[a] = std::clamp(f[a], 0.0, hi);
    int base = static_cast<int>(std::floor(f[a]));
    if (base >= dims_[a] - 1) base = std::max(dims_[a] - 2, 0);
    i0[a] = base;
    t[a] = f[a] - base;
  }
  const std::size_t sx = dims_[0] > 1 ? 1 : 0;
  const std::size_t sy = dims_[1] > 1 ? static_cast<std::size_t>(dims_[0]) : 0;
  const std::size_t sz = dims_[2] > 1 ? static_cast<std::size_t>(dims_[0]) * dims_[1] : 0;
  const uint8_t* p = data_.data() + index(i0[0], i0[1], i0[2]);
  const double c00 = p[0] * (1 - t[0]) + p[sx] * t[0];
  const double c10 = p[sy] * (1 - t[0]) + p[sy + sx] * t[0];
  const double c01 = p[sz] * (1 - t[0]) + p[sz + sx] * t[0];
  const double c11 = p[sz + sy] * (1 - t[0]) + p[sz + sy + sx] * t[0];
  const double c0 = c00 * (1 - t[1]) + c10 * t[1];
  const double c1 = c01 * (1 - t[1]) + c11 * t[1];
  return c0 * (1 - t[2]) + c1 * t[2];
}

UsImage::UsImage(int h, int w, double spacing, uint8_t fill)
    : height(h), width(w), pixel_spacing(spacing) {
  if (h <= 0 || w <= 0) throw std::invalid_argument("image dimensions must be positive");
  pixels.assign(static_cast<std::size_t>(h) * w, fill);
}

SurfaceMap::SurfaceMap(int nx, int ny, double spacing, Vec3 origin, std::vector<double> z,
                       std::vector<uint8_t> valid)
    : nx_(nx), ny_(ny), spacing_(spacing), origin_(std::move(origin)), z_(std::move(z)), valid_(std::move(valid)) {
  const auto n = static_cast<std::size_t>(nx_) * ny_;
  if (z_.size() != n || valid_.size() != n) throw std::invalid_argument("surface map size mismatch");
}

std::array<int, 2> SurfaceMap::nearest_valid(double fi, double fj) const {
  const int ci = std::clamp(static_cast<int>(std::floor(fi)), 0, nx_ - 1);
  const int cj = std::clamp(static_cast<int>(std::floor(fj)), 0, ny_ - 1);
  double best = std::numeric_limits<double>::infinity();
  std::array<int, 2> best_ij{-1, -1};
  const int max_ring = std::max(nx_, ny_);
  for (int ring = 0; ring <= max_ring; ++ring) {
    // Anything on this Chebyshev ring is at least ring - 1 away from (fi, fj).
    if (static_cast<double>(ring - 1) > best) break;
    for (int j = cj - ring; j <= cj + ring; ++j) {
      if (j < 0 || j >= ny_) continue;
      const bool edge_row = (j == cj - ring || j == cj + ring);
      const int step = edge_row ? 1 : 2 * ring;
      for (int i = ci - ring; i <= ci + ring; i += std::max(step, 1)) {
        if (i < 0 || i >= nx_ || !valid(i, j)) continue;
        const double d = std::hypot(i - fi, j - fj);
        if (d < best || (d == best && idx(i, j) < idx(best_ij[0], best_ij[1]))) {
          best = d;
          best_ij = {i, j};
        }
      }
    }
  }
  if (best_ij[0] < 0) throw std::logic_error("surface map has no valid column");
  return best_ij;
}

double SurfaceMap::lookup(double x, double y) const {
  const double fi = (x - origin_.x()) / spacing_;
  const double fj = (y - origin_.y()) / spacing_;
  if (!std::isfinite(fi) || !std::isfinite(fj) || fi < -kEdgeSlack || fj < -kEdgeSlack ||
      fi > nx_ - 1 + kEdgeSlack || fj > ny_ - 1 + kEdgeSlack) {
    throw OutOfFootprint("surface lookup outside volume footprint at (" + std::to_string(x) + ", " +
                         std::to_string(y) + ")");
  }
  const double ci = std::clamp(fi, 0.0, static_cast<double>(nx_ - 1));
  const double cj = std::clamp(fj, 0.0, static_cast<double>(ny_ - 1));
  const int i0 = std::min(static_cast<int>(std::floor(ci)), std::max(nx_ - 2, 0));
  const int j0 = std::min(static_cast<int>(std::floor(cj)), std::max(ny_ - 2, 0));
  const double ti = ci - i0;
  const double tj = cj - j0;
  double acc = 0.0;
  double wsum = 0.0;
  for (int dj = 0; dj <= 1; ++dj) {
    for (int di = 0; di <= 1; ++di) {
      const int i = std::min(i0 + di, nx_ - 1);
      const int j = std::min(j0 + dj, ny_ - 1);
      const double w = (di ? ti : 1.0 - ti) * (dj ? tj : 1.0 - tj);
      if (w > 0.0 && valid(i, j)) {
        acc += w * z(i, j);
        wsum += w;
      }
    }
  }
  if (wsum > 0.0) return acc / wsum;
  const auto [ni, nj] = nearest_valid(ci, cj);
  return z(ni, nj);
}

SurfaceMap extract_surface(const Volume& v) {
  const int nx = v.nx(), ny = v.ny(), nz = v.nz();
  std::vector<double> z(static_cast<std::size_t>(nx) * ny, 0.0);
  std::vector<uint8_t> valid(z.size(), 0);
  bool any = false;
  for (int j = 0; j < ny; ++j) {
    for (int i = 0; i < nx; ++i) {
      for (int k = nz - 1; k >= 0; --k) {
        if (v.at(i, j, k) > 0) {
          const std::size_t c = static_cast<std::size_t>(i) + static_cast<std::size_t>(nx) * j;
          z[c] = v.origin().z() + k * v.spacing();
          valid[c] = 1;
          any = true;
          break;
        }
      }
    }
  }
  if (!any) throw std::invalid_argument("extract_surface: volume is entirely zero");
  return SurfaceMap(nx, ny, v.spacing(), v.origin(), std::move(z), std::move(valid));
}

UsImage sample_slice(const Volume& v, const Pose& pose, int h, int w, double pixel_spacing) {
  UsImage img(h, w, pixel_spacing);
  const Eigen::Matrix3d r = pose.orientation.normalized().toRotationMatrix();
  const Vec3 ey = r.col(1) * pixel_spacing;
  const Vec3 ez = r.col(2) * pixel_spacing;
  for (int row = 0; row < h; ++row) {
    const Vec3 row_origin = pose.position + (row + 0.5) * ez;
    for (int u = 0; u < w; ++u) {
      const Vec3 p = row_origin + (u - w / 2.0 + 0.5) * ey;
      const double s = v.sample(p);
      img.at(row, u) = static_cast<uint8_t>(std::clamp(std::lround(s), 0L, 255L));
    }
  }
  return img;
}

double nonzero_fraction(const UsImage& img) {
  if (img.pixels.empty()) return 0.0;
  const auto count = std::count_if(img.pixels.begin(), img.pixels.end(), [](uint8_t p) { return p > 0; });
  return static_cast<double>(count) / static_cast<double>(img.pixels.size());
}

}  // namespace sononav
