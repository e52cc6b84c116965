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

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "sononav/volume.hpp"

using namespace sononav;

namespace {

Volume random_volume(std::mt19937_64& rng, std::array<int, 3> dims, double spacing = 0.5,
                     Vec3 origin = Vec3(-3.0, 2.0, 1.5)) {
  Volume v(dims, spacing, origin);
  std::uniform_int_distribution<int> u(0, 255);
  for (auto& b : v.data()) b = static_cast<uint8_t>(u(rng));
  return v;
}

std::filesystem::path temp_path(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("sononav_test_" + name);
}

// Pose whose pixel centres land exactly on voxel centres: probe axes along
// world axes, image rows along -z, columns along +/-y.
Pose lattice_pose(const Volume& v, int i, int j_center, int k_top) {
  Pose p;
  p.orientation = probe_down_orientation(0.0);  // probe y = -world y, z = -world z
  const double s = v.spacing();
  p.position = v.origin() + Vec3(i * s, (j_center + 0.5) * s, (k_top + 0.5) * s);
  return p;
}

}  // namespace

TEST_CASE("volume construction validates its inputs") {
  CHECK_THROWS_AS(Volume({2, 2, 2}, 0.0, Vec3::Zero()), std::invalid_argument);
  CHECK_THROWS_AS(Volume({0, 2, 2}, 0.5, Vec3::Zero()), std::invalid_argument);
  CHECK_THROWS_AS(Volume({2, 2, 2}, 0.5, Vec3::Zero(), std::vector<uint8_t>(7)), std::invalid_argument);
  Volume v({3, 4, 5}, 0.5, Vec3::Zero());
  CHECK(v.size() == 60);
  v.at(2, 1, 3) = 9;
  CHECK(v.data()[2 + 3 * (1 + 4 * 3)] == 9);
}

TEST_CASE("lattice-aligned slices reproduce voxel reads exactly") {
  std::mt19937_64 rng(21);
  const Volume v = random_volume(rng, {12, 40, 40});
  const int h = 20, w = 16;
  std::uniform_int_distribution<int> ui(0, 11), uj(w / 2, 40 - w / 2 - 1), uk(h - 1, 39);
  for (int trial = 0; trial < 100; ++trial) {
    const int i = ui(rng), j = uj(rng), k = uk(rng);
    const Pose p = lattice_pose(v, i, j, k);
    const UsImage img = sample_slice(v, p, h, w, v.spacing());
    for (int r = 0; r < h; ++r) {
      for (int u = 0; u < w; ++u) {
        const int jj = j - (u - w / 2);
        const int kk = k - r;
        REQUIRE(img.at(r, u) == v.at(i, jj, kk));
      }
    }
  }
}

TEST_CASE("slices outside the volume are empty; constant volumes give constant slices") {
  Volume v({20, 20, 20}, 0.5, Vec3::Zero());
  std::fill(v.data().begin(), v.data().end(), uint8_t{77});
  Pose far;
  far.position = Vec3(100, 100, 100);
  far.orientation = probe_down_orientation(0.0);
  CHECK(nonzero_fraction(sample_slice(v, far, 10, 10)) == 0.0);

  Pose inside;
  inside.position = Vec3(4.9, 5.1, 9.0);
  inside.orientation = (probe_down_orientation(33.0) * axis_angle(Vec3::UnitX(), 12.0)).normalized();
  const UsImage img = sample_slice(v, inside, 8, 8, 0.4);
  for (auto px : img.pixels) CHECK(px == 77);
}

TEST_CASE("trilinear samples are bounded by the surrounding voxels") {
  std::mt19937_64 rng(4);
  const Volume v = random_volume(rng, {6, 6, 6}, 1.0, Vec3::Zero());
  std::uniform_real_distribution<double> u(0.0, 5.0);
  for (int n = 0; n < 2000; ++n) {
    const Vec3 p(u(rng), u(rng), u(rng));
    const int i = std::min(static_cast<int>(p.x()), 4), j = std::min(static_cast<int>(p.y()), 4),
              k = std::min(static_cast<int>(p.z()), 4);
    int lo = 255, hi = 0;
    for (int a = 0; a < 2; ++a)
      for (int b = 0; b < 2; ++b)
        for (int c = 0; c < 2; ++c) {
          lo = std::min<int>(lo, v.at(i + a, j + b, k + c));
          hi = std::max<int>(hi, v.at(i + a, j + b, k + c));
        }
    const double s = v.sample(p);
    CHECK(s >= lo - 1e-9);
    CHECK(s <= hi + 1e-9);
  }
}

TEST_CASE("nonzero_fraction") {
  UsImage img(10, 10);
  CHECK(nonzero_fraction(img) == 0.0);
  std::fill(img.pixels.begin(), img.pixels.end(), uint8_t{255});
  CHECK(nonzero_fraction(img) == 1.0);
  std::fill(img.pixels.begin(), img.pixels.end(), uint8_t{0});
  for (int i = 0; i < 29; ++i) img.pixels[static_cast<std::size_t>(i)] = 3;
  CHECK(nonzero_fraction(img) == doctest::Approx(0.29));
  CHECK(nonzero_fraction(img) < 0.30);
}

TEST_CASE("extract_surface") {
  Volume v({4, 3, 10}, 0.5, Vec3(0, 0, -2));
  for (int k = 0; k <= 6; ++k) v.at(1, 1, k) = 10;
  v.at(2, 2, 3) = 1;
  const SurfaceMap s = extract_surface(v);
  CHECK(s.valid(1, 1));
  CHECK(s.z(1, 1) == doctest::Approx(-2 + 6 * 0.5));
  CHECK(s.z(2, 2) == doctest::Approx(-2 + 3 * 0.5));
  CHECK_FALSE(s.valid(0, 0));
  for (int j = 0; j < 3; ++j)
    for (int i = 0; i < 4; ++i)
      if (s.valid(i, j)) CHECK(s.z(i, j) <= v.origin().z() + (v.nz() - 1) * v.spacing());

  Volume empty({3, 3, 3}, 0.5, Vec3::Zero());
  CHECK_THROWS_AS(extract_surface(empty), std::invalid_argument);
}

TEST_CASE("surface_lookup interpolation and fallback") {
  // Column heights set directly: z = 10 at i=0, z = 20 at i=1 (row j = 0..1).
  std::vector<double> z = {10, 20, 0, 10, 20, 0};
  std::vector<uint8_t> valid = {1, 1, 0, 1, 1, 0};
  SurfaceMap s(3, 2, 1.0, Vec3::Zero(), z, valid);
  CHECK(s.lookup(0.0, 0.0) == doctest::Approx(10.0));
  CHECK(s.lookup(1.0, 1.0) == doctest::Approx(20.0));
  CHECK(s.lookup(0.5, 0.0) == doctest::Approx(15.0));
  CHECK(s.lookup(0.5, 0.5) == doctest::Approx(15.0));
  // Between a valid and an invalid column only the valid one contributes.
  CHECK(s.lookup(1.5, 0.0) == doctest::Approx(20.0));
  CHECK_THROWS_AS(s.lookup(-0.5, 0.0), OutOfFootprint);
  CHECK_THROWS_AS(s.lookup(0.0, 1.5), OutOfFootprint);
}

TEST_CASE("surface_lookup nearest-valid fallback matches a brute-force search") {
  std::mt19937_64 rng(99);
  const int nx = 30, ny = 25;
  std::vector<double> z(nx * ny);
  std::vector<uint8_t> valid(nx * ny, 0);
  std::uniform_real_distribution<double> uz(0.0, 50.0);
  std::bernoulli_distribution sparse(0.03);
  for (std::size_t c = 0; c < z.size(); ++c) {
    z[c] = uz(rng);
    valid[c] = sparse(rng) ? 1 : 0;
  }
  valid[5] = 1;
  SurfaceMap s(nx, ny, 0.5, Vec3(1, 1, 0), z, valid);
  std::uniform_real_distribution<double> ux(1.0, 1.0 + 0.5 * (nx - 1)), uy(1.0, 1.0 + 0.5 * (ny - 1));
  int fallbacks = 0;
  for (int n = 0; n < 3000; ++n) {
    const double x = ux(rng), y = uy(rng);
    const double fi = (x - 1.0) / 0.5, fj = (y - 1.0) / 0.5;
    const int i0 = std::min(static_cast<int>(fi), nx - 2), j0 = std::min(static_cast<int>(fj), ny - 2);
    bool any = false;
    for (int dj = 0; dj < 2; ++dj)
      for (int di = 0; di < 2; ++di) any = any || valid[(i0 + di) + nx * (j0 + dj)];
    if (any) continue;
    ++fallbacks;
    double best = 1e300;
    std::size_t best_c = 0;
    for (int j = 0; j < ny; ++j)
      for (int i = 0; i < nx; ++i) {
        const std::size_t c = i + static_cast<std::size_t>(nx) * j;
        if (!valid[c]) continue;
        const double d = std::hypot(i - fi, j - fj);
        if (d < best) {
          best = d;
          best_c = c;
        }
      }
    CHECK(s.lookup(x, y) == z[best_c]);
  }
  CHECK(fallbacks > 100);
}

TEST_CASE("USV1 round trip and error paths") {
  std::mt19937_64 rng(1);
  const Volume v = random_volume(rng, {7, 5, 3}, 0.25, Vec3(1.125, -2.5, 1e-3));
  const auto path = temp_path("rt.usv");
  save_volume(v, path);
  const Volume back = load_volume(path);
  CHECK(back == v);

  // Truncated data section.
  std::filesystem::resize_file(path, std::filesystem::file_size(path) - 3);
  CHECK_THROWS_AS(load_volume(path), VolumeFormatError);

  auto write_text = [&](const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out << text;
  };
  write_text("format=USV1\ndims=1 1 1\nspacing_mm=0\norigin_mm=0 0 0\n\nx");
  CHECK_THROWS_AS(load_volume(path), VolumeFormatError);
  write_text("format=USV2\ndims=1 1 1\nspacing_mm=1\norigin_mm=0 0 0\n\nx");
  CHECK_THROWS_AS(load_volume(path), VolumeFormatError);
  write_text("format=USV1\ndims=1 1\nspacing_mm=1\norigin_mm=0 0 0\n\nx");
  CHECK_THROWS_AS(load_volume(path), VolumeFormatError);
  write_text("format=USV1\ndims=1 1 1\nspacing_mm=1\norigin_mm=0 0 0\n\nxy");
  CHECK_THROWS_AS(load_volume(path), VolumeFormatError);
  write_text("format=USV1\ndims=1 1 1\nspacing_mm=1\norigin_mm=0 0 0\n\nx");
  CHECK(load_volume(path).at(0, 0, 0) == 'x');
  CHECK_THROWS_AS(load_volume(temp_path("does_not_exist.usv")), std::ios_base::failure);
  std::filesystem::remove(path);
}

TEST_CASE("pose sidecar and PGM round trip") {
  Pose p;
  p.position = Vec3(12.25, -3.0, 40.125);
  p.orientation = (probe_down_orientation(17.0) * axis_angle(Vec3::UnitY(), -10.0)).normalized();
  const auto path = temp_path("goal.json");
  save_pose(p, path);
  const Pose q = load_pose(path);
  CHECK((q.position - p.position).norm() == 0.0);
  CHECK((q.orientation.coeffs() - p.orientation.coeffs()).norm() < 1e-15);
  std::filesystem::remove(path);

  UsImage img(3, 5);
  for (std::size_t i = 0; i < img.pixels.size(); ++i) img.pixels[i] = static_cast<uint8_t>(i * 17);
  const auto pgm = temp_path("img.pgm");
  save_pgm(img, pgm);
  const UsImage back = load_pgm(pgm);
  CHECK(back.pixels == img.pixels);
  CHECK(back.height == 3);
  std::filesystem::remove(pgm);
}
