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

#ifndef SONONAV_QNETWORK_HPP
#define SONONAV_QNETWORK_HPP

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "sononav/environment.hpp"

namespace sononav {

struct ConvSpec {
  int out_channels = 16;
  int kernel = 3;  // odd; padding is kernel / 2
  int stride = 2;
  bool operator==(const ConvSpec&) const = default;
};

enum class HeadKind { kFlatten, kGlobalPool };

/**
 * Architecture descriptor: conv + ReLU blocks, then either a flattened
 * dense head (optional hidden layer) or global average pooling followed by
 * a linear layer.
 */
struct NetworkSpec {
  int in_channels = 4;
  int height = 64;
  int width = 64;
  std::vector<ConvSpec> conv = {{16, 3, 2}, {32, 3, 2}, {32, 3, 2}, {64, 3, 2}};
  HeadKind head = HeadKind::kFlatten;
  int hidden = 128;  // 0 = no hidden layer
  int outputs = kNumActions;

  /// Throws std::invalid_argument.
  void validate() const;
  /// Spatial size after each conv block, starting with the input.
  std::vector<std::array<int, 2>> feature_sizes() const;
  std::size_t parameter_count() const;
  std::string to_json() const;
  /// Throws std::invalid_argument on malformed or unknown fields.
  static NetworkSpec from_json(const std::string& text);
  bool operator==(const NetworkSpec&) const = default;
};

/**
 * Convolutional Q-function with a flat parameter vector.
 *
 * Batches are laid out channel-major: a C x (N * H * W) matrix whose column
 * n * H * W + r * W + c holds pixel (r, c) of sample n.
 */
template <typename T>
class QNetworkT {
 public:
  /// Aligned so vectorized reductions do not depend on heap placement.
  using Params = std::vector<T, Eigen::aligned_allocator<T>>;
  using Matrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;
  using Vector = Eigen::Matrix<T, Eigen::Dynamic, 1>;

  /// He-uniform initialization from `seed`.
  explicit QNetworkT(NetworkSpec spec, uint64_t seed = 0);

  const NetworkSpec& spec() const { return spec_; }
  Params& params() { return params_; }
  const Params& params() const { return params_; }
  const Params& grads() const { return grads_; }
  void zero_grad();

  /// Q-values, outputs x N. Keeps the activations for backward().
  Matrix forward(const Matrix& input, int batch);
  /// Accumulates parameter gradients for dLoss/dOutput (outputs x N) of
  /// the most recent forward().
  void backward(const Matrix& grad_output);

  /// Forward pass on observations. Throws std::invalid_argument on a shape
  /// mismatch.
  Matrix q_values(const std::vector<const Observation*>& batch);
  std::array<T, kNumActions> q_values(const Observation& obs);

  /// Scales pixels to [0, 1].
  Matrix encode(const std::vector<const Observation*>& batch) const;

  /// Offsets of the output layer weights and bias in params().
  std::size_t output_layer_offset() const { return output_offset_; }

 private:
  struct Layer {
    std::size_t w_offset = 0;
    std::size_t b_offset = 0;
    int rows = 0;
    int cols = 0;
  };
  Eigen::Map<const Matrix> weights(const Layer& l) const;
  Eigen::Map<Matrix> weight_grad(const Layer& l);

  NetworkSpec spec_;
  std::vector<Layer> conv_layers_;
  std::vector<Layer> dense_layers_;
  Params params_;
  Params grads_;
  std::size_t output_offset_ = 0;

  // Forward cache.
  int batch_ = 0;
  std::vector<Matrix> cols_;     // im2col input of each conv block
  std::vector<Matrix> conv_out_; // post-ReLU output of each conv block
  std::vector<Matrix> dense_in_; // input of each dense layer
  std::vector<Matrix> dense_pre_;
};

using QNetwork = QNetworkT<float>;

/// Greedy action with ties to the lowest index.
template <typename Array>
Action greedy_action(const Array& q) {
  int best = 0;
  for (int a = 1; a < kNumActions; ++a) {
    if (q[static_cast<std::size_t>(a)] > q[static_cast<std::size_t>(best)]) best = a;
  }
  return action_from_index(best);
}

/// Adam with bias correction.
template <typename T>
class Adam {
 public:
  explicit Adam(std::size_t n, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : beta1_(beta1), beta2_(beta2), eps_(eps), m_(n, T(0)), v_(n, T(0)) {}
  void step(typename QNetworkT<T>::Params& params, const typename QNetworkT<T>::Params& grads, double lr);
  long long steps() const { return t_; }

 private:
  double beta1_, beta2_, eps_;
  typename QNetworkT<T>::Params m_, v_;
  long long t_ = 0;
};

}  // namespace sononav

#endif  // SONONAV_QNETWORK_HPP
