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

#ifndef SONONAV_CONFIDENCE_HPP
#define SONONAV_CONFIDENCE_HPP

#include <stdexcept>
#include <vector>

#include "sononav/volume.hpp"

namespace sononav {

/// Raised when the conjugate-gradient solve stops before reaching tolerance.
class SolverError : public std::runtime_error {
 public:
  SolverError(const std::string& what, double residual, int iterations)
      : std::runtime_error(what), residual_(residual), iterations_(iterations) {}
  double residual() const { return residual_; }
  int iterations() const { return iterations_; }

 private:
  double residual_;
  int iterations_;
};

enum class ConfidenceSolver {
  kDirect,             // sparse Cholesky of the reduced Laplacian
  kConjugateGradient,  // Jacobi-preconditioned CG
};

/// Random-walk ultrasound confidence parameters.
struct ConfidenceParams {
  double alpha = 2.0;       // depth attenuation exponent
  double beta = 90.0;       // intensity-difference sensitivity
  double gamma = 0.05;      // horizontal edge penalty; diagonals get sqrt(2) * gamma
  ConfidenceSolver solver = ConfidenceSolver::kDirect;
  double tolerance = 1e-10; // CG relative residual
  int max_iterations = 20000;
  int downsample = 1;       // solve on a coarser grid, upsample bilinearly

  void validate() const;
};

struct ConfidenceMap {
  int height = 0;
  int width = 0;
  std::vector<double> values;  // row-major, row 0 at the transducer
  int iterations = 0;          // CG iterations (0 for the direct solver)
  double residual = 0.0;       // final relative residual of the reduced system

  double at(int r, int c) const { return values[static_cast<std::size_t>(r) * width + c]; }
  double& at(int r, int c) { return values[static_cast<std::size_t>(r) * width + c]; }
};

struct RoiRect {
  int row = 0;
  int col = 0;
  int height = 0;
  int width = 0;

  /// A height x width rectangle centred in an image of the given size.
  static RoiRect centered(int image_h, int image_w, int height, int width);
  bool fits(int image_h, int image_w) const;
};

/**
 * Per-pixel confidence via a random walk on the 8-connected pixel lattice.
 *
 * The top row (transducer) is clamped to 1 and the bottom row to 0; the
 * remaining nodes hold the probability that a walker starting there
 * reaches the transducer first. Throws SolverError on non-convergence.
 */
ConfidenceMap compute_confidence_map(const UsImage& img, const ConfidenceParams& params = {});

/// Mean confidence over the ROI. Throws std::out_of_range if it does not fit.
double roi_confidence(const ConfidenceMap& c, const RoiRect& roi);

inline double confidence_improvement(double c_prev, double c_next) { return c_next - c_prev; }

/// Confidence scaled to 0..255 for inspection.
UsImage confidence_to_image(const ConfidenceMap& c);

}  // namespace sononav

#endif  // SONONAV_CONFIDENCE_HPP
