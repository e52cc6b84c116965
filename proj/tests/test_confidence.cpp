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

#include <algorithm>
#include <random>

#include "confidence_oracle.hpp"
#include "sononav/confidence.hpp"

using namespace sononav;
using sononav::testing::dense_confidence;

namespace {

UsImage random_image(std::mt19937_64& rng, int h, int w) {
  UsImage img(h, w);
  std::uniform_int_distribution<int> u(0, 255);
  for (auto& p : img.pixels) p = static_cast<uint8_t>(u(rng));
  return img;
}

double row_mean(const std::vector<double>& v, int w, int r0, int r1) {
  double s = 0.0;
  for (int r = r0; r < r1; ++r)
    for (int c = 0; c < w; ++c) s += v[static_cast<std::size_t>(r) * w + c];
  return s / ((r1 - r0) * w);
}

}  // namespace

TEST_CASE("boundary rows are exactly one and zero") {
  std::mt19937_64 rng(2);
  const UsImage img = random_image(rng, 20, 13);
  const ConfidenceMap m = compute_confidence_map(img);
  for (int c = 0; c < 13; ++c) {
    CHECK(m.at(0, c) == 1.0);
    CHECK(m.at(19, c) == 0.0);
  }
  for (double v : m.values) {
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
  }
}

TEST_CASE("uniform image: rows constant and non-increasing with depth") {
  UsImage img(16, 16, 0.5, 120);
  const ConfidenceMap m = compute_confidence_map(img);
  const auto dense = dense_confidence(img, ConfidenceParams{});
  for (int r = 0; r < 16; ++r) {
    for (int c = 0; c < 16; ++c) {
      CHECK(std::abs(m.at(r, c) - m.at(r, 0)) < 1e-4);
      CHECK(std::abs(m.at(r, c) - dense[static_cast<std::size_t>(r * 16 + c)]) < 1e-6);
    }
    if (r > 0) CHECK(m.at(r, 0) <= m.at(r - 1, 0) + 1e-9);
  }
}

TEST_CASE("both solvers agree with the dense direct solve") {
  std::mt19937_64 rng(17);
  ConfidenceParams cg;
  cg.solver = ConfidenceSolver::kConjugateGradient;
  for (int trial = 0; trial < 5; ++trial) {
    const UsImage img = random_image(rng, 32, 32);
    const auto dense = dense_confidence(img, ConfidenceParams{});
    const ConfidenceMap direct = compute_confidence_map(img);
    const ConfidenceMap iterative = compute_confidence_map(img, cg);
    CHECK(iterative.iterations > 0);
    double worst_direct = 0.0, worst_cg = 0.0;
    for (std::size_t i = 0; i < dense.size(); ++i) {
      worst_direct = std::max(worst_direct, std::abs(direct.values[i] - dense[i]));
      worst_cg = std::max(worst_cg, std::abs(iterative.values[i] - dense[i]));
    }
    CHECK(worst_direct < 1e-8);
    CHECK(worst_cg < 1e-5);
  }
}

TEST_CASE("an anechoic band lowers confidence beneath it") {
  UsImage uniform(32, 32, 0.5, 140);
  UsImage banded = uniform;
  for (int r = 12; r < 16; ++r)
    for (int c = 0; c < 32; ++c) banded.at(r, c) = 0;
  const auto du = dense_confidence(uniform, ConfidenceParams{});
  const auto db = dense_confidence(banded, ConfidenceParams{});
  const ConfidenceMap mb = compute_confidence_map(banded);
  const ConfidenceMap mu = compute_confidence_map(uniform);
  // Oracle first, then the solver must reproduce the same ordering.
  CHECK(row_mean(db, 32, 16, 31) < row_mean(du, 32, 16, 31));
  CHECK(row_mean(mb.values, 32, 16, 31) < row_mean(mu.values, 32, 16, 31));
}

TEST_CASE("mirrored input gives a mirrored map") {
  std::mt19937_64 rng(8);
  const UsImage img = random_image(rng, 24, 19);
  UsImage mirrored = img;
  for (int r = 0; r < 24; ++r)
    for (int c = 0; c < 19; ++c) mirrored.at(r, c) = img.at(r, 18 - c);
  const ConfidenceMap a = compute_confidence_map(img);
  const ConfidenceMap b = compute_confidence_map(mirrored);
  for (int r = 0; r < 24; ++r)
    for (int c = 0; c < 19; ++c) CHECK(std::abs(a.at(r, c) - b.at(r, 18 - c)) < 1e-5);
}

TEST_CASE("downsampled solve keeps the full-size boundary rows") {
  UsImage img(40, 40, 0.5, 0);
  for (int r = 0; r < 40; ++r)
    for (int c = 0; c < 40; ++c) img.at(r, c) = static_cast<uint8_t>(100 + c);
  ConfidenceParams p;
  p.downsample = 2;
  const ConfidenceMap coarse = compute_confidence_map(img, p);
  CHECK(coarse.height == 40);
  CHECK(coarse.width == 40);
  for (int c = 0; c < 40; ++c) {
    CHECK(coarse.at(0, c) == doctest::Approx(1.0));
    CHECK(coarse.at(39, c) == doctest::Approx(0.0));
  }
  for (double v : coarse.values) {
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
  }
}

TEST_CASE("solver failure carries the residual") {
  std::mt19937_64 rng(5);
  const UsImage img = random_image(rng, 30, 30);
  ConfidenceParams p;
  p.solver = ConfidenceSolver::kConjugateGradient;
  p.max_iterations = 2;
  try {
    compute_confidence_map(img, p);
    FAIL("expected SolverError");
  } catch (const SolverError& e) {
    CHECK(e.residual() > p.tolerance);
  }
  CHECK_THROWS_AS(compute_confidence_map(UsImage(1, 5)), std::invalid_argument);
}

TEST_CASE("roi_confidence") {
  ConfidenceMap m;
  m.height = 4;
  m.width = 4;
  m.values.assign(16, 0.5);
  CHECK(roi_confidence(m, RoiRect::centered(4, 4, 2, 2)) == doctest::Approx(0.5));
  m.values = {0, 0, 0, 0, 0, 0.0, 0.2, 0, 0, 0.4, 1.0, 0, 0, 0, 0, 0};
  CHECK(roi_confidence(m, {1, 1, 2, 2}) == doctest::Approx(0.4));
  std::fill(m.values.begin(), m.values.end(), 1.0);
  CHECK(roi_confidence(m, {0, 0, 4, 4}) == 1.0);
  CHECK_THROWS_AS(roi_confidence(m, {3, 3, 2, 2}), std::out_of_range);
  CHECK_THROWS_AS(roi_confidence(m, {-1, 0, 2, 2}), std::out_of_range);

  // Monotone in every in-ROI value.
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int t = 0; t < 200; ++t) {
    for (auto& v : m.values) v = u(rng);
    const RoiRect roi{1, 0, 2, 3};
    const double before = roi_confidence(m, roi);
    m.at(1 + t % 2, t % 3) = std::min(1.0, m.at(1 + t % 2, t % 3) + u(rng));
    CHECK(roi_confidence(m, roi) >= before);
  }
}

TEST_CASE("confidence_improvement") {
  CHECK(confidence_improvement(0.5, 0.5) == 0.0);
  CHECK(confidence_improvement(0.2, 0.7) == doctest::Approx(0.5));
  CHECK(confidence_improvement(1.0, 0.0) == -1.0);
}
