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

#include "sononav/agent.hpp"

using namespace sononav;

namespace {

Observation random_observation(std::mt19937_64& rng, int frames, int h, int w) {
  std::uniform_int_distribution<int> u(0, 255);
  Observation o;
  for (int f = 0; f < frames; ++f) {
    auto img = std::make_shared<UsImage>(h, w);
    for (auto& p : img->pixels) p = static_cast<uint8_t>(u(rng));
    o.frames.push_back(img);
  }
  return o;
}

NetworkSpec tiny_spec() {
  NetworkSpec s;
  s.in_channels = 2;
  s.height = 6;
  s.width = 7;
  s.conv = {{3, 3, 2}, {2, 3, 1}};
  s.hidden = 5;
  return s;
}

std::filesystem::path temp_path(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("sononav_test_" + name);
}

}  // namespace

TEST_CASE("network spec sizes and descriptor round trip") {
  NetworkSpec s;
  const auto sizes = s.feature_sizes();
  CHECK(sizes.back()[0] == 4);
  CHECK(sizes.back()[1] == 4);
  QNetwork q(s, 1);
  CHECK(q.params().size() == s.parameter_count());
  CHECK(NetworkSpec::from_json(s.to_json()) == s);
  NetworkSpec g = s;
  g.head = HeadKind::kGlobalPool;
  g.hidden = 0;
  CHECK(NetworkSpec::from_json(g.to_json()) == g);
  CHECK_THROWS_AS(NetworkSpec::from_json(R"({"height": 8, "colour": 1})"), std::invalid_argument);
  CHECK_THROWS_AS(NetworkSpec::from_json(R"({"conv": [{"out_channels": 4, "kernel": 2}]})"), std::invalid_argument);
}

TEST_CASE("forward pass: finite, deterministic, argmax invariant under output scaling") {
  std::mt19937_64 rng(3);
  for (HeadKind head : {HeadKind::kFlatten, HeadKind::kGlobalPool}) {
    NetworkSpec s;
    s.height = 32;
    s.width = 24;
    s.head = head;
    QNetwork q(s, 7);
    const Observation o = random_observation(rng, 4, 32, 24);
    const auto a = q.q_values(o);
    const auto b = q.q_values(o);
    for (int i = 0; i < kNumActions; ++i) {
      CHECK(std::isfinite(a[static_cast<std::size_t>(i)]));
      CHECK(a[static_cast<std::size_t>(i)] == b[static_cast<std::size_t>(i)]);
    }
    for (std::size_t i = q.output_layer_offset(); i < q.params().size(); ++i) q.params()[i] *= 2.0f;
    const auto c = q.q_values(o);
    for (int i = 0; i < kNumActions; ++i)
      CHECK(c[static_cast<std::size_t>(i)] == doctest::Approx(2.0 * a[static_cast<std::size_t>(i)]).epsilon(1e-5));
    CHECK(greedy_action(c) == greedy_action(a));

    // Batched and single forward agree.
    const Observation o2 = random_observation(rng, 4, 32, 24);
    const auto m = q.q_values(std::vector<const Observation*>{&o, &o2});
    const auto single = q.q_values(o2);
    for (int i = 0; i < kNumActions; ++i) CHECK(m(i, 1) == doctest::Approx(single[static_cast<std::size_t>(i)]));
  }
}

TEST_CASE("greedy ties go to the lowest index") {
  std::array<float, kNumActions> q{};
  CHECK(greedy_action(q) == Action::kTxPlus);
  q[3] = 1.0f;
  q[7] = 1.0f;
  CHECK(greedy_action(q) == Action::kTyMinus);
}

TEST_CASE("shape mismatches are rejected") {
  std::mt19937_64 rng(1);
  QNetwork q(NetworkSpec{}, 0);
  const Observation wrong_size = random_observation(rng, 4, 32, 32);
  CHECK_THROWS_AS(q.q_values(wrong_size), std::invalid_argument);
  const Observation wrong_depth = random_observation(rng, 3, 64, 64);
  CHECK_THROWS_AS(q.q_values(wrong_depth), std::invalid_argument);
}

TEST_CASE("td targets: terminal and zero discount") {
  std::mt19937_64 rng(2);
  QNetworkT<double> q(tiny_spec(), 1), target(tiny_spec(), 2);
  Transition t{random_observation(rng, 2, 6, 7), Action::kRxPlus, 10.0, random_observation(rng, 2, 6, 7), true};
  Transition u{random_observation(rng, 2, 6, 7), Action::kTyMinus, 0.25, random_observation(rng, 2, 6, 7), false};
  auto r = td_loss_and_grad(q, target, {&t, &u}, 0.9);
  CHECK(r.targets[0] == 10.0);
  const auto next = target.q_values(u.s_next);
  CHECK(r.targets[1] == doctest::Approx(0.25 + 0.9 * *std::max_element(next.begin(), next.end())));
  r = td_loss_and_grad(q, target, {&t, &u}, 0.0);
  CHECK(r.targets[0] == 10.0);
  CHECK(r.targets[1] == 0.25);
  CHECK_THROWS_AS(td_loss_and_grad(q, target, {}, 0.9), std::invalid_argument);
}

TEST_CASE("analytic TD gradient matches central differences") {
  std::mt19937_64 rng(11);
  for (HeadKind head : {HeadKind::kFlatten, HeadKind::kGlobalPool}) {
    NetworkSpec spec = tiny_spec();
    spec.head = head;
    QNetworkT<double> q(spec, 5), target(spec, 6);
    std::vector<Transition> data;
    for (int i = 0; i < 3; ++i) {
      data.push_back({random_observation(rng, 2, 6, 7), action_from_index(i * 3), 0.1 * i,
                      random_observation(rng, 2, 6, 7), i == 2});
    }
    std::vector<const Transition*> batch;
    for (const auto& t : data) batch.push_back(&t);
    // Small Huber delta so both branches of the loss are exercised.
    const double delta = 0.05;
    td_loss_and_grad(q, target, batch, 0.9, delta);
    const auto analytic = q.grads();
    const double h = 1e-6;
    double num = 0.0, den = 0.0, worst = 0.0;
    for (std::size_t i = 0; i < q.params().size(); ++i) {
      const double keep = q.params()[i];
      q.params()[i] = keep + h;
      const double up = td_loss_and_grad(q, target, batch, 0.9, delta).loss;
      q.params()[i] = keep - h;
      const double down = td_loss_and_grad(q, target, batch, 0.9, delta).loss;
      q.params()[i] = keep;
      const double fd = (up - down) / (2 * h);
      num += (analytic[i] - fd) * (analytic[i] - fd);
      den += fd * fd;
      worst = std::max(worst, std::abs(analytic[i] - fd) / std::max(1e-6, std::abs(fd) + std::abs(analytic[i])));
    }
    CHECK(std::sqrt(num / den) < 1e-4);
    CHECK(worst < 1e-4);
  }
}

TEST_CASE("adam decreases a simple quadratic") {
  QNetworkT<double>::Params p = {3.0, -2.0};
  Adam<double> opt(2);
  for (int i = 0; i < 2000; ++i) {
    QNetworkT<double>::Params g = {2 * p[0], 2 * p[1]};
    opt.step(p, g, 0.01);
  }
  CHECK(std::abs(p[0]) < 1e-2);
  CHECK(std::abs(p[1]) < 1e-2);
}

TEST_CASE("checkpoint round trip, mismatch and corruption") {
  std::mt19937_64 rng(4);
  NetworkSpec s;
  s.height = 16;
  s.width = 16;
  QNetwork q(s, 9);
  const Observation o = random_observation(rng, 4, 16, 16);
  const auto before = q.q_values(o);
  const auto path = temp_path("net.ckpt");
  save_checkpoint(q, path);
  QNetwork back = load_checkpoint(path, s);
  CHECK(back.params() == q.params());
  const auto after = back.q_values(o);
  for (int i = 0; i < kNumActions; ++i) CHECK(after[static_cast<std::size_t>(i)] == before[static_cast<std::size_t>(i)]);

  NetworkSpec other = s;
  other.height = 32;
  try {
    load_checkpoint(path, other);
    FAIL("expected CheckpointError");
  } catch (const CheckpointError& e) {
    CHECK(std::string(e.what()).find("4x16x16") != std::string::npos);
  }

  {
    std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(200);
    f.put('\x7f');
  }
  CHECK_THROWS_AS(load_checkpoint(path), CheckpointError);
  std::filesystem::resize_file(path, 10);
  CHECK_THROWS_AS(load_checkpoint(path), CheckpointError);
  std::filesystem::remove(path);
  CHECK_THROWS_AS(load_checkpoint(path), std::ios_base::failure);
}
