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

#ifndef SONONAV_VOLUME_HPP
#define SONONAV_VOLUME_HPP

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <vector>

#include "sononav/pose_math.hpp"

namespace sononav {

/// Errors raised while reading or writing volume files.
class VolumeFormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class OutOfFootprint : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

/**
 * 3D grid of 8-bit intensities with isotropic spacing.
 *
 * Voxel (i, j, k) sits at world position origin + spacing * (i, j, k).
 * Memory order is x fastest, then y, then z.
 */
class Volume {
 public:
  static constexpr double kDefaultSpacingMm = 0.5;

  Volume() = default;
  Volume(std::array<int, 3> dims, double spacing_mm, Vec3 origin_mm);
  Volume(std::array<int, 3> dims, double spacing_mm, Vec3 origin_mm, std::vector<uint8_t> data);

  int nx() const { return dims_[0]; }
  int ny() const { return dims_[1]; }
  int nz() const { return dims_[2]; }
  const std::array<int, 3>& dims() const { return dims_; }
  double spacing() const { return spacing_; }
  const Vec3& origin() const { return origin_; }
  std::size_t size() const { return data_.size(); }

  std::size_t index(int i, int j, int k) const {
    return static_cast<std::size_t>(i) +
           static_cast<std::size_t>(dims_[0]) *
               (static_cast<std::size_t>(j) + static_cast<std::size_t>(dims_[1]) * static_cast<std::size_t>(k));
  }
  uint8_t at(int i, int j, int k) const { return data_[index(i, j, k)]; }
  uint8_t& at(int i, int j, int k) { return data_[index(i, j, k)]; }

  const std::vector<uint8_t>& data() const { return data_; }
  std::vector<uint8_t>& data() { return data_; }

  /// Physical extent along x, y, z: (n - 1) * spacing.
  Vec3 extent() const;
  /// Length of the extent diagonal in mm.
  double diagonal() const { return extent().norm(); }

  /// Trilinear interpolation at a world point; 0 outside the voxel lattice.
  double sample(const Vec3& world) const;

  bool operator==(const Volume&) const = default;

 private:
  std::array<int, 3> dims_{0, 0, 0};
  double spacing_ = kDefaultSpacingMm;
  Vec3 origin_ = Vec3::Zero();
  std::vector<uint8_t> data_;
};

/// A 2D grayscale slice, row-major, row 0 at the probe face.
struct UsImage {
  static constexpr int kDefaultSize = 150;

  int height = 0;
  int width = 0;
  double pixel_spacing = Volume::kDefaultSpacingMm;
  std::vector<uint8_t> pixels;

  UsImage() = default;
  UsImage(int h, int w, double spacing = Volume::kDefaultSpacingMm, uint8_t fill = 0);

  uint8_t at(int r, int c) const { return pixels[static_cast<std::size_t>(r) * width + c]; }
  uint8_t& at(int r, int c) { return pixels[static_cast<std::size_t>(r) * width + c]; }
  bool operator==(const UsImage&) const = default;
};

/// Height of the patient surface for each (x, y) voxel column.
class SurfaceMap {
 public:
  SurfaceMap(int nx, int ny, double spacing, Vec3 origin, std::vector<double> z, std::vector<uint8_t> valid);

  int nx() const { return nx_; }
  int ny() const { return ny_; }
  bool valid(int i, int j) const { return valid_[idx(i, j)] != 0; }
  /// World z in mm of column (i, j); meaningful only when valid.
  double z(int i, int j) const { return z_[idx(i, j)]; }
  double spacing() const { return spacing_; }
  const Vec3& origin() const { return origin_; }

  /// Surface height at world (x, y). Bilinear over the valid neighbours;
  /// falls back to the nearest valid column when all four are invalid.
  /// Throws OutOfFootprint outside the volume's xy extent.
  double lookup(double x, double y) const;

  /// Nearest valid column to fractional grid coordinate (fi, fj). Ties go to
  /// the lower linear index (i + nx * j).
  std::array<int, 2> nearest_valid(double fi, double fj) const;

 private:
  std::size_t idx(int i, int j) const { return static_cast<std::size_t>(i) + static_cast<std::size_t>(nx_) * j; }

  int nx_;
  int ny_;
  double spacing_;
  Vec3 origin_;
  std::vector<double> z_;
  std::vector<uint8_t> valid_;
};

/// Highest nonzero voxel per column. Throws std::invalid_argument when the
/// whole volume is zero.
SurfaceMap extract_surface(const Volume& v);

inline double surface_lookup(const SurfaceMap& s, double x, double y) { return s.lookup(x, y); }

/**
 * Oblique slice in the probe yz plane.
 *
 * Pixel (r, u) is taken at position + (u - w/2 + 0.5) * s * y_probe +
 * (r + 0.5) * s * z_probe, trilinearly interpolated and rounded.
 */
UsImage sample_slice(const Volume& v, const Pose& pose, int h = UsImage::kDefaultSize,
                     int w = UsImage::kDefaultSize, double pixel_spacing = Volume::kDefaultSpacingMm);

double nonzero_fraction(const UsImage& img);

/// USV1 file format. See README for the layout.
void save_volume(const Volume& v, const std::filesystem::path& path);
Volume load_volume(const std::filesystem::path& path);

/// Goal pose sidecar (JSON with position_mm and quaternion_xyzw).
void save_pose(const Pose& pose, const std::filesystem::path& path);
Pose load_pose(const std::filesystem::path& path);

/// 8-bit binary PGM (P5).
void save_pgm(const UsImage& img, const std::filesystem::path& path);
UsImage load_pgm(const std::filesystem::path& path);

}  // namespace sononav

#endif  // SONONAV_VOLUME_HPP
