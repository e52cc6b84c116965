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

#include "sononav/qnetwork.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

#include <json.hpp>

namespace sononav {

using nlohmann::json;

void NetworkSpec::validate() const {
  auto require = [](bool ok, const std::string& what) {
    if (!ok) throw std::invalid_argument("network spec: " + what);
  };
  require(in_channels >= 1 && height >= 1 && width >= 1, "input shape must be positive");
  require(!conv.empty(), "at least one conv block is required");
  for (const ConvSpec& c : conv) {
    require(c.out_channels >= 1, "conv channels must be positive");
    require(c.kernel >= 1 && c.kernel % 2 == 1, "conv kernel must be odd");
    require(c.stride >= 1, "conv stride must be positive");
  }
  require(hidden >= 0, "hidden width must be >= 0");
  require(outputs >= 1, "outputs must be positive");
}

std::vector<std::array<int, 2>> NetworkSpec::feature_sizes() const {
  std::vector<std::array<int, 2>> out{{height, width}};
  for (const ConvSpec& c : conv) {
    const auto& prev = out.back();
    const int pad = c.kernel / 2;
    out.push_back({(prev[0] + 2 * pad - c.kernel) / c.stride + 1, (prev[1] + 2 * pad - c.kernel) / c.stride + 1});
  }
  return out;
}

namespace {

int head_features(const NetworkSpec& s) {
  const auto sizes = s.feature_sizes();
  const int channels = s.conv.back().out_channels;
  return s.head == HeadKind::kFlatten ? channels * sizes.back()[0] * sizes.back()[1] : channels;
}

}  // namespace

std::size_t NetworkSpec::parameter_count() const {
  std::size_t n = 0;
  int in = in_channels;
  for (const ConvSpec& c : conv) {
    n += static_cast<std::size_t>(c.out_channels) * (in * c.kernel * c.kernel + 1);
    in = c.out_channels;
  }
  int features = head_features(*this);
  if (hidden > 0) {
    n += static_cast<std::size_t>(hidden) * (features + 1);
    features = hidden;
  }
  n += static_cast<std::size_t>(outputs) * (features + 1);
  return n;
}

std::string NetworkSpec::to_json() const {
  json j;
  j["in_channels"] = in_channels;
  j["height"] = height;
  j["width"] = width;
  j["conv"] = json::array();
  for (const ConvSpec& c : conv) j["conv"].push_back({{"out_channels", c.out_channels}, {"kernel", c.kernel}, {"stride", c.stride}});
  j["head"] = head == HeadKind::kFlatten ? "flatten" : "global_pool";
  j["hidden"] = hidden;
  j["outputs"] = outputs;
  return j.dump();
}

NetworkSpec NetworkSpec::from_json(const std::string& text) {
  NetworkSpec s;
  try {
    const json j = json::parse(text);
    for (const auto& [key, value] : j.items()) {
      if (key == "in_channels") s.in_channels = value.get<int>();
      else if (key == "height") s.height = value.get<int>();
      else if (key == "width") s.width = value.get<int>();
      else if (key == "hidden") s.hidden = value.get<int>();
      else if (key == "outputs") s.outputs = value.get<int>();
      else if (key == "head") {
        const std::string h = value.get<std::string>();
        if (h == "flatten") s.head = HeadKind::kFlatten;
        else if (h == "global_pool") s.head = HeadKind::kGlobalPool;
        else throw std::invalid_argument("unknown head: " + h);
      } else if (key == "conv") {
        s.conv.clear();
        for (const auto& c : value) {
          ConvSpec cs;
          for (const auto& [ck, cv] : c.items()) {
            if (ck == "out_channels") cs.out_channels = cv.get<int>();
            else if (ck == "kernel") cs.kernel = cv.get<int>();
            else if (ck == "stride") cs.stride = cv.get<int>();
            else throw std::invalid_argument("unknown conv field: " + ck);
          }
          s.conv.push_back(cs);
        }
      } else {
        throw std::invalid_argument("unknown network field: " + key);
      }
    }
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("network spec: ") + e.what());
  }
  s.validate();
  return s;
}

template <typename T>
QNetworkT<T>::QNetworkT(NetworkSpec spec, uint64_t seed) : spec_(std::move(spec)) {
  spec_.validate();
  std::size_t offset = 0;
  auto add = [&](int rows, int cols) {
    Layer l;
    l.rows = rows;
    l.cols = cols;
    l.w_offset = offset;
    offset += static_cast<std::size_t>(rows) * cols;
    l.b_offset = offset;
    offset += static_cast<std::size_t>(rows);
    return l;
  };
  int in = spec_.in_channels;
  for (const ConvSpec& c : spec_.conv) {
    conv_layers_.push_back(add(c.out_channels, in * c.kernel * c.kernel));
    in = c.out_channels;
  }
  int features = head_features(spec_);
  if (spec_.hidden > 0) {
    dense_layers_.push_back(add(spec_.hidden, features));
    features = spec_.hidden;
  }
  dense_layers_.push_back(add(spec_.outputs, features));
  output_offset_ = dense_layers_.back().w_offset;
  params_.assign(offset, T(0));
  grads_.assign(offset, T(0));

  std::mt19937_64 rng(seed);
  auto init = [&](const Layer& l, double limit) {
    std::uniform_real_distribution<double> u(-limit, limit);
    for (std::size_t i = 0; i < static_cast<std::size_t>(l.rows) * l.cols; ++i) params_[l.w_offset + i] = T(u(rng));
  };
  for (const Layer& l : conv_layers_) init(l, std::sqrt(6.0 / l.cols));
  for (std::size_t i = 0; i < dense_layers_.size(); ++i) {
    const Layer& l = dense_layers_[i];
    init(l, i + 1 < dense_layers_.size() ? std::sqrt(6.0 / l.cols) : std::sqrt(1.0 / l.cols));
  }
}

template <typename T>
void QNetworkT<T>::zero_grad() {
  std::fill(grads_.begin(), grads_.end(), T(0));
}

template <typename T>
Eigen::Map<const typename QNetworkT<T>::Matrix> QNetworkT<T>::weights(const Layer& l) const {
  return Eigen::Map<const Matrix>(params_.data() + l.w_offset, l.rows, l.cols);
}

template <typename T>
Eigen::Map<typename QNetworkT<T>::Matrix> QNetworkT<T>::weight_grad(const Layer& l) {
  return Eigen::Map<Matrix>(grads_.data() + l.w_offset, l.rows, l.cols);
}

namespace {

struct ConvGeometry {
  int channels, h, w, ho, wo, k, stride, pad;
};

template <typename Matrix>
void im2col(const Matrix& x, int batch, const ConvGeometry& g, Matrix& cols) {
  const int kk = g.k * g.k;
  cols.resize(g.channels * kk, static_cast<Eigen::Index>(batch) * g.ho * g.wo);
  const Eigen::Index in_plane = static_cast<Eigen::Index>(g.h) * g.w;
  for (int n = 0; n < batch; ++n) {
    for (int oy = 0; oy < g.ho; ++oy) {
      for (int ox = 0; ox < g.wo; ++ox) {
        auto col = cols.col((static_cast<Eigen::Index>(n) * g.ho + oy) * g.wo + ox);
        for (int ky = 0; ky < g.k; ++ky) {
          const int iy = oy * g.stride - g.pad + ky;
          for (int kx = 0; kx < g.k; ++kx) {
            const int ix = ox * g.stride - g.pad + kx;
            const bool inside = iy >= 0 && iy < g.h && ix >= 0 && ix < g.w;
            const Eigen::Index src = n * in_plane + static_cast<Eigen::Index>(iy) * g.w + ix;
            for (int c = 0; c < g.channels; ++c) {
              col(c * kk + ky * g.k + kx) = inside ? x(c, src) : typename Matrix::Scalar(0);
            }
          }
        }
      }
    }
  }
}

template <typename Matrix>
void col2im(const Matrix& cols, int batch, const ConvGeometry& g, Matrix& dx) {
  const int kk = g.k * g.k;
  const Eigen::Index in_plane = static_cast<Eigen::Index>(g.h) * g.w;
  dx.setZero(g.channels, batch * in_plane);
  for (int n = 0; n < batch; ++n) {
    for (int oy = 0; oy < g.ho; ++oy) {
      for (int ox = 0; ox < g.wo; ++ox) {
        const auto col = cols.col((static_cast<Eigen::Index>(n) * g.ho + oy) * g.wo + ox);
        for (int ky = 0; ky < g.k; ++ky) {
          const int iy = oy * g.stride - g.pad + ky;
          if (iy < 0 || iy >= g.h) continue;
          for (int kx = 0; kx < g.k; ++kx) {
            const int ix = ox * g.stride - g.pad + kx;
            if (ix < 0 || ix >= g.w) continue;
            const Eigen::Index dst = n * in_plane + static_cast<Eigen::Index>(iy) * g.w + ix;
            for (int c = 0; c < g.channels; ++c) dx(c, dst) += col(c * kk + ky * g.k + kx);
          }
        }
      }
    }
  }
}

}  // namespace

template <typename T>
typename QNetworkT<T>::Matrix QNetworkT<T>::forward(const Matrix& input, int batch) {
  const auto sizes = spec_.feature_sizes();
  if (batch < 1 || input.rows() != spec_.in_channels ||
      input.cols() != static_cast<Eigen::Index>(batch) * spec_.height * spec_.width) {
    throw std::invalid_argument("QNetwork::forward: input shape does not match the network");
  }
  batch_ = batch;
  cols_.resize(conv_layers_.size());
  conv_out_.resize(conv_layers_.size());
  const Matrix* x = &input;
  int channels = spec_.in_channels;
  for (std::size_t i = 0; i < conv_layers_.size(); ++i) {
    const ConvSpec& cs = spec_.conv[i];
    const ConvGeometry g{channels,   sizes[i][0], sizes[i][1], sizes[i + 1][0], sizes[i + 1][1],
                         cs.kernel, cs.stride,   cs.kernel / 2};
    im2col(*x, batch, g, cols_[i]);
    const Layer& l = conv_layers_[i];
    Eigen::Map<const Vector> b(params_.data() + l.b_offset, l.rows);
    conv_out_[i].noalias() = weights(l) * cols_[i];
    conv_out_[i].colwise() += b;
    conv_out_[i] = conv_out_[i].cwiseMax(T(0));
    x = &conv_out_[i];
    channels = cs.out_channels;
  }

  const Eigen::Index plane = static_cast<Eigen::Index>(sizes.back()[0]) * sizes.back()[1];
  const Matrix& last = conv_out_.back();
  Matrix features;
  if (spec_.head == HeadKind::kFlatten) {
    features.resize(channels * plane, batch);
    for (int n = 0; n < batch; ++n)
      for (int c = 0; c < channels; ++c)
        features.col(n).segment(c * plane, plane) = last.row(c).segment(n * plane, plane).transpose();
  } else {
    features.resize(channels, batch);
    for (int n = 0; n < batch; ++n)
      features.col(n) = last.middleCols(n * plane, plane).rowwise().mean();
  }

  dense_in_.resize(dense_layers_.size());
  dense_pre_.resize(dense_layers_.size());
  dense_in_[0] = std::move(features);
  for (std::size_t i = 0; i < dense_layers_.size(); ++i) {
    const Layer& l = dense_layers_[i];
    Eigen::Map<const Vector> b(params_.data() + l.b_offset, l.rows);
    dense_pre_[i].noalias() = weights(l) * dense_in_[i];
    dense_pre_[i].colwise() += b;
    if (i + 1 < dense_layers_.size()) dense_in_[i + 1] = dense_pre_[i].cwiseMax(T(0));
  }
  return dense_pre_.back();
}

template <typename T>
void QNetworkT<T>::backward(const Matrix& grad_output) {
  if (batch_ == 0 || grad_output.rows() != spec_.outputs || grad_output.cols() != batch_) {
    throw std::invalid_argument("QNetwork::backward: gradient shape does not match the last forward pass");
  }
  Matrix d = grad_output;
  for (std::size_t ii = dense_layers_.size(); ii-- > 0;) {
    const Layer& l = dense_layers_[ii];
    weight_grad(l).noalias() += d * dense_in_[ii].transpose();
    Eigen::Map<Vector>(grads_.data() + l.b_offset, l.rows) += d.rowwise().sum();
    Matrix din = weights(l).transpose() * d;
    if (ii > 0) din = din.cwiseProduct((dense_pre_[ii - 1].array() > T(0)).matrix().template cast<T>());
    d = std::move(din);
  }

  const auto sizes = spec_.feature_sizes();
  const Eigen::Index plane = static_cast<Eigen::Index>(sizes.back()[0]) * sizes.back()[1];
  const int channels = spec_.conv.back().out_channels;
  Matrix dy(channels, batch_ * plane);
  if (spec_.head == HeadKind::kFlatten) {
    for (int n = 0; n < batch_; ++n)
      for (int c = 0; c < channels; ++c)
        dy.row(c).segment(n * plane, plane) = d.col(n).segment(c * plane, plane).transpose();
  } else {
    for (int n = 0; n < batch_; ++n)
      dy.middleCols(n * plane, plane) = (d.col(n) / static_cast<T>(plane)).replicate(1, plane);
  }

  for (std::size_t ii = conv_layers_.size(); ii-- > 0;) {
    const Layer& l = conv_layers_[ii];
    dy = dy.cwiseProduct((conv_out_[ii].array() > T(0)).matrix().template cast<T>());
    weight_grad(l).noalias() += dy * cols_[ii].transpose();
    Eigen::Map<Vector>(grads_.data() + l.b_offset, l.rows) += dy.rowwise().sum();
    if (ii == 0) break;
    const ConvSpec& cs = spec_.conv[ii];
    const int ch = spec_.conv[ii - 1].out_channels;
    const ConvGeometry g{ch, sizes[ii][0], sizes[ii][1], sizes[ii + 1][0], sizes[ii + 1][1],
                         cs.kernel, cs.stride, cs.kernel / 2};
    Matrix dcols = weights(l).transpose() * dy;
    col2im(dcols, batch_, g, dy);
  }
}

template <typename T>
typename QNetworkT<T>::Matrix QNetworkT<T>::encode(const std::vector<const Observation*>& batch) const {
  const Eigen::Index plane = static_cast<Eigen::Index>(spec_.height) * spec_.width;
  Matrix x(spec_.in_channels, static_cast<Eigen::Index>(batch.size()) * plane);
  for (std::size_t n = 0; n < batch.size(); ++n) {
    const Observation& o = *batch[n];
    if (o.depth() != spec_.in_channels) {
      throw std::invalid_argument("QNetwork: observation has " + std::to_string(o.depth()) + " frames, network expects " +
                                  std::to_string(spec_.in_channels));
    }
    for (int f = 0; f < o.depth(); ++f) {
      const UsImage& img = *o.frames[static_cast<std::size_t>(f)];
      if (img.height != spec_.height || img.width != spec_.width) {
        throw std::invalid_argument("QNetwork: image is " + std::to_string(img.height) + "x" +
                                    std::to_string(img.width) + ", network expects " + std::to_string(spec_.height) +
                                    "x" + std::to_string(spec_.width));
      }
      for (Eigen::Index p = 0; p < plane; ++p)
        x(f, static_cast<Eigen::Index>(n) * plane + p) = static_cast<T>(img.pixels[static_cast<std::size_t>(p)]) / T(255);
    }
  }
  return x;
}

template <typename T>
typename QNetworkT<T>::Matrix QNetworkT<T>::q_values(const std::vector<const Observation*>& batch) {
  return forward(encode(batch), static_cast<int>(batch.size()));
}

template <typename T>
std::array<T, kNumActions> QNetworkT<T>::q_values(const Observation& obs) {
  if (spec_.outputs != kNumActions) throw std::invalid_argument("QNetwork: network does not output one value per action");
  const Matrix q = q_values(std::vector<const Observation*>{&obs});
  std::array<T, kNumActions> out{};
  for (int a = 0; a < kNumActions; ++a) out[static_cast<std::size_t>(a)] = q(a, 0);
  return out;
}

template <typename T>
void Adam<T>::step(typename QNetworkT<T>::Params& params, const typename QNetworkT<T>::Params& grads, double lr) {
  if (params.size() != m_.size() || grads.size() != m_.size()) throw std::invalid_argument("Adam: size mismatch");
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  const T b1 = T(beta1_), b2 = T(beta2_);
  const T step = T(lr / c1), inv_c2 = T(1.0 / c2), eps = T(eps_);
  for (std::size_t i = 0; i < params.size(); ++i) {
    m_[i] = b1 * m_[i] + (T(1) - b1) * grads[i];
    v_[i] = b2 * v_[i] + (T(1) - b2) * grads[i] * grads[i];
    params[i] -= step * m_[i] / (std::sqrt(v_[i] * inv_c2) + eps);
  }
}

template class QNetworkT<float>;
template class QNetworkT<double>;
template class Adam<float>;
template class Adam<double>;

}  // namespace sononav
