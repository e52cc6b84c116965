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

#include "sononav/confidence.hpp"

#include <algorithm>
#include <array>
#include <map>
#include <memory>
#include <cmath>
#include <string>

#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

namespace sononav {

namespace {

constexpr double kWeightFloor = 1e-6;
constexpr int kOffsets[8][2] = {{-1, 0}, {1, 0}, {0, -1}, {0, 1}, {-1, -1}, {-1, 1}, {1, -1}, {1, 1}};

// Reduced system over rows 1..h-2. Row r, column c of the image is unknown
// (r - 1) * w + c.
struct Lattice {
  int h = 0;
  int w = 0;
  std::vector<std::array<double, 8>> weight;  // weight to each neighbour, 0 if none
  std::vector<double> diag;
  std::vector<double> rhs;

  std::size_t unknowns() const { return weight.size(); }
};

Lattice build_lattice(const UsImage& img, const ConfidenceParams& p) {
  const int h = img.height, w = img.width;
  std::vector<double> g(static_cast<std::size_t>(h) * w);
  for (int r = 0; r < h; ++r) {
    const double att = std::exp(-p.alpha * static_cast<double>(r) / (h - 1));
    for (int c = 0; c < w; ++c) g[static_cast<std::size_t>(r) * w + c] = img.at(r, c) / 255.0 * att;
  }
  const double penalty[8] = {0.0, 0.0, p.gamma, p.gamma, std::sqrt(2.0) * p.gamma, std::sqrt(2.0) * p.gamma,
                             std::sqrt(2.0) * p.gamma, std::sqrt(2.0) * p.gamma};
  Lattice lat;
  lat.h = h;
  lat.w = w;
  const std::size_t n = static_cast<std::size_t>(h - 2) * w;
  lat.weight.assign(n, {});
  lat.diag.assign(n, 0.0);
  lat.rhs.assign(n, 0.0);
  for (int r = 1; r < h - 1; ++r) {
    for (int c = 0; c < w; ++c) {
      const std::size_t u = static_cast<std::size_t>(r - 1) * w + c;
      const double gi = g[static_cast<std::size_t>(r) * w + c];
      for (int d = 0; d < 8; ++d) {
        const int rr = r + kOffsets[d][0];
        const int cc = c + kOffsets[d][1];
        if (cc < 0 || cc >= w) continue;
        const double gj = g[static_cast<std::size_t>(rr) * w + cc];
        const double wij = std::exp(-p.beta * (std::abs(gi - gj) + penalty[d])) + kWeightFloor;
        lat.diag[u] += wij;
        if (rr == 0) {
          lat.rhs[u] += wij;  // transducer row held at 1
        } else if (rr < h - 1) {
          lat.weight[u][static_cast<std::size_t>(d)] = wij;
        }
      }
    }
  }
  return lat;
}

void apply(const Lattice& lat, const std::vector<double>& x, std::vector<double>& y) {
  const int rows = lat.h - 2, w = lat.w;
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < w; ++c) {
      const std::size_t u = static_cast<std::size_t>(r) * w + c;
      double acc = lat.diag[u] * x[u];
      const auto& wt = lat.weight[u];
      for (int d = 0; d < 8; ++d) {
        if (wt[static_cast<std::size_t>(d)] == 0.0) continue;
        const std::size_t v = static_cast<std::size_t>(r + kOffsets[d][0]) * w + (c + kOffsets[d][1]);
        acc -= wt[static_cast<std::size_t>(d)] * x[v];
      }
      y[u] = acc;
    }
  }
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double relative_residual(const Lattice& lat, const std::vector<double>& x) {
  std::vector<double> q(x.size());
  apply(lat, x, q);
  double rr = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) rr += (lat.rhs[i] - q[i]) * (lat.rhs[i] - q[i]);
  return std::sqrt(rr) / std::max(std::sqrt(dot(lat.rhs, lat.rhs)), 1e-300);
}

std::vector<double> solve_cg(const Lattice& lat, const ConfidenceParams& p, int& iterations, double& rel) {
  const int h = lat.h, w = lat.w;
  const std::size_t n = lat.unknowns();
  // Initial guess: linear ramp from 1 at the top to 0 at the bottom.
  std::vector<double> x(n);
  for (int r = 1; r < h - 1; ++r) {
    for (int c = 0; c < w; ++c) x[static_cast<std::size_t>(r - 1) * w + c] = 1.0 - static_cast<double>(r) / (h - 1);
  }
  std::vector<double> res(n), z(n), dir(n), q(n);
  apply(lat, x, q);
  for (std::size_t i = 0; i < n; ++i) res[i] = lat.rhs[i] - q[i];
  const double bnorm = std::max(std::sqrt(dot(lat.rhs, lat.rhs)), 1e-300);
  rel = std::sqrt(dot(res, res)) / bnorm;
  iterations = 0;
  if (rel <= p.tolerance) return x;
  for (std::size_t i = 0; i < n; ++i) z[i] = res[i] / lat.diag[i];
  dir = z;
  double rz = dot(res, z);
  for (int it = 1; it <= p.max_iterations; ++it) {
    iterations = it;
    apply(lat, dir, q);
    const double step = rz / dot(dir, q);
    for (std::size_t i = 0; i < n; ++i) {
      x[i] += step * dir[i];
      res[i] -= step * q[i];
    }
    rel = std::sqrt(dot(res, res)) / bnorm;
    if (!std::isfinite(rel) || rel <= p.tolerance) break;
    for (std::size_t i = 0; i < n; ++i) z[i] = res[i] / lat.diag[i];
    const double rz_next = dot(res, z);
    const double beta = rz_next / rz;
    rz = rz_next;
    for (std::size_t i = 0; i < n; ++i) dir[i] = z[i] + beta * dir[i];
  }
  if (!(rel <= p.tolerance)) {
    throw SolverError("confidence solve did not converge: relative residual " + std::to_string(rel) + " after " +
                          std::to_string(iterations) + " iterations",
                      rel, iterations);
  }
  return x;
}

using SparseMatrix = Eigen::SparseMatrix<double>;
using Factorization = Eigen::SimplicialLLT<SparseMatrix, Eigen::Lower>;

std::vector<double> solve_direct(const Lattice& lat, double& rel) {
  const int w = lat.w;
  const auto n = static_cast<Eigen::Index>(lat.unknowns());
  std::vector<Eigen::Triplet<double>> entries;
  entries.reserve(lat.unknowns() * 5);
  for (Eigen::Index u = 0; u < n; ++u) {
    const int r = static_cast<int>(u / w), c = static_cast<int>(u % w);
    entries.emplace_back(u, u, lat.diag[static_cast<std::size_t>(u)]);
    for (int d = 0; d < 8; ++d) {
      const double wt = lat.weight[static_cast<std::size_t>(u)][static_cast<std::size_t>(d)];
      if (wt == 0.0) continue;
      const Eigen::Index v = static_cast<Eigen::Index>(r + kOffsets[d][0]) * w + (c + kOffsets[d][1]);
      if (v > u) entries.emplace_back(v, u, -wt);
    }
  }
  SparseMatrix a(n, n);
  a.setFromTriplets(entries.begin(), entries.end());

  // The sparsity pattern depends only on the image shape; keep its symbolic
  // analysis around for the next call.
  thread_local std::map<std::pair<int, int>, std::unique_ptr<Factorization>> cache;
  auto& slot = cache[{lat.h, lat.w}];
  if (!slot) {
    slot = std::make_unique<Factorization>();
    slot->analyzePattern(a);
  }
  slot->factorize(a);
  if (slot->info() != Eigen::Success) {
    throw SolverError("confidence solve: Cholesky factorization failed", 1.0, 0);
  }
  const Eigen::Map<const Eigen::VectorXd> b(lat.rhs.data(), n);
  const Eigen::VectorXd sol = slot->solve(b);
  std::vector<double> x(sol.data(), sol.data() + n);
  rel = relative_residual(lat, x);
  if (!std::isfinite(rel)) throw SolverError("confidence solve: non-finite solution", rel, 0);
  return x;
}

ConfidenceMap solve_full(const UsImage& img, const ConfidenceParams& p) {
  const int h = img.height, w = img.width;
  ConfidenceMap map;
  map.height = h;
  map.width = w;
  map.values.assign(static_cast<std::size_t>(h) * w, 0.0);
  std::fill(map.values.begin(), map.values.begin() + w, 1.0);
  if (h == 2) return map;

  const Lattice lat = build_lattice(img, p);
  std::vector<double> x;
  if (p.solver == ConfidenceSolver::kConjugateGradient) {
    x = solve_cg(lat, p, map.iterations, map.residual);
  } else {
    x = solve_direct(lat, map.residual);
  }
  for (std::size_t i = 0; i < x.size(); ++i) map.values[static_cast<std::size_t>(w) + i] = std::clamp(x[i], 0.0, 1.0);
  return map;
}

UsImage box_downsample(const UsImage& img, int factor) {
  const int h = std::max(2, img.height / factor);
  const int w = std::max(2, img.width / factor);
  UsImage out(h, w, img.pixel_spacing * factor);
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      int sum = 0, count = 0;
      for (int dr = 0; dr < factor; ++dr) {
        for (int dc = 0; dc < factor; ++dc) {
          const int rr = std::min(r * factor + dr, img.height - 1);
          const int cc = std::min(c * factor + dc, img.width - 1);
          sum += img.at(rr, cc);
          ++count;
        }
      }
      out.at(r, c) = static_cast<uint8_t>((sum + count / 2) / count);
    }
  }
  return out;
}

// Align-corners bilinear resize so the boundary rows map onto each other.
ConfidenceMap upsample(const ConfidenceMap& small, int h, int w) {
  ConfidenceMap out;
  out.height = h;
  out.width = w;
  out.iterations = small.iterations;
  out.residual = small.residual;
  out.values.resize(static_cast<std::size_t>(h) * w);
  for (int r = 0; r < h; ++r) {
    const double fr = static_cast<double>(r) * (small.height - 1) / (h - 1);
    const int r0 = std::min(static_cast<int>(fr), small.height - 2);
    const double tr = fr - r0;
    for (int c = 0; c < w; ++c) {
      const double fc = w > 1 ? static_cast<double>(c) * (small.width - 1) / (w - 1) : 0.0;
      const int c0 = std::min(static_cast<int>(fc), std::max(small.width - 2, 0));
      const int c1 = std::min(c0 + 1, small.width - 1);
      const double tc = fc - c0;
      const double top = small.at(r0, c0) * (1 - tc) + small.at(r0, c1) * tc;
      const double bot = small.at(r0 + 1, c0) * (1 - tc) + small.at(r0 + 1, c1) * tc;
      out.at(r, c) = top * (1 - tr) + bot * tr;
    }
  }
  return out;
}

}  // namespace

void ConfidenceParams::validate() const {
  if (!(alpha > 0.0) || !(beta > 0.0) || !(gamma > 0.0) || !(tolerance > 0.0) || max_iterations <= 0 ||
      downsample < 1) {
    throw std::invalid_argument("confidence parameters must be positive");
  }
}

RoiRect RoiRect::centered(int image_h, int image_w, int height, int width) {
  return {(image_h - height) / 2, (image_w - width) / 2, height, width};
}

bool RoiRect::fits(int image_h, int image_w) const {
  return height > 0 && width > 0 && row >= 0 && col >= 0 && row + height <= image_h && col + width <= image_w;
}

ConfidenceMap compute_confidence_map(const UsImage& img, const ConfidenceParams& params) {
  params.validate();
  if (img.height < 2 || img.width < 2) throw std::invalid_argument("confidence map needs at least a 2x2 image");
  if (params.downsample == 1) return solve_full(img, params);
  const ConfidenceMap coarse = solve_full(box_downsample(img, params.downsample), params);
  return upsample(coarse, img.height, img.width);
}

double roi_confidence(const ConfidenceMap& c, const RoiRect& roi) {
  if (!roi.fits(c.height, c.width)) throw std::out_of_range("ROI does not fit inside the confidence map");
  double sum = 0.0;
  for (int r = roi.row; r < roi.row + roi.height; ++r) {
    for (int col = roi.col; col < roi.col + roi.width; ++col) sum += c.at(r, col);
  }
  return sum / (static_cast<double>(roi.height) * roi.width);
}

UsImage confidence_to_image(const ConfidenceMap& c) {
  UsImage img(c.height, c.width);
  for (std::size_t i = 0; i < c.values.size(); ++i) {
    img.pixels[i] = static_cast<uint8_t>(std::lround(std::clamp(c.values[i], 0.0, 1.0) * 255.0));
  }
  return img;
}

}  // namespace sononav
