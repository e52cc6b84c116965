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

#include "sononav/agent.hpp"
#include "sononav/phantom.hpp"

using namespace sononav;

namespace {

std::shared_ptr<const Scene> test_scene() {
  static const std::shared_ptr<const Scene> scene = [] {
    PhantomSpec spec;
    spec.spacing_mm = 1.0;
    Phantom p = generate_phantom(spec);
    return make_scene(std::move(p.volume), p.goal);
  }();
  return scene;
}

EnvConfig tiny_env() {
  EnvConfig cfg;
  cfg.image_height = 24;
  cfg.image_width = 24;
  cfg.pixel_spacing_mm = 3.125;
  cfg.roi_height = 18;
  cfg.roi_width = 14;
  return cfg;
}

TrainConfig tiny_train() {
  TrainConfig tc;
  tc.network.conv = {{4, 3, 2}, {8, 3, 2}};
  tc.network.hidden = 16;
  tc.pretrain_demos = 60;
  tc.pretrain_updates = 5;
  tc.demo_seed = 40;
  tc.batch_size = 8;
  tc.interaction_steps = 230;
  tc.target_sync = 4;
  tc.seed = 3;
  return tc;
}

Transition marker(double r) {
  Transition t;
  t.r = r;
  return t;
}

}  // namespace

TEST_CASE("replay memory is a bounded FIFO") {
  ReplayMemory m(3);
  for (int i = 0; i < 5; ++i) m.push(marker(i));
  CHECK(m.size() == 3);
  CHECK(m.at(0).r == 2.0);
  CHECK(m.at(2).r == 4.0);
  Rng a(1), b(1);
  const auto s1 = m.sample(10, a), s2 = m.sample(10, b);
  CHECK(s1 == s2);
  for (const auto* t : s1) CHECK(t->r >= 2.0);
  ReplayMemory empty(2);
  CHECK_THROWS_AS(empty.sample(1, a), std::logic_error);
  CHECK_THROWS_AS(ReplayMemory(0), std::invalid_argument);
}

TEST_CASE("epsilon and learning-rate schedules") {
  EpsilonSchedule eps;
  CHECK(eps(0) == 0.5);
  CHECK(eps(50000) == doctest::Approx(0.3));
  CHECK(eps(100000) == doctest::Approx(0.1));
  CHECK(eps(400000) == doctest::Approx(0.1));
  LrSchedule lr;
  CHECK(lr(0) == 0.01);
  CHECK(lr(39999) == 0.01);
  CHECK(lr(40000) == 0.001);
  CHECK(lr(80000) == 5e-4);
  CHECK(lr(109999) == 5e-4);
  CHECK(lr(110000) == 1e-4);
  CHECK(lr(10000000) == 1e-4);

  const TrainConfig s = TrainConfig{}.scaled_to(50000);
  CHECK(s.interaction_steps == 50000);
  CHECK(s.epsilon.horizon == 3125);
  CHECK(s.lr.boundaries == std::vector<long long>{1250, 2500, 3438});
  CHECK(s.target_sync == 31);
  CHECK(s.batch_size == 32);
  CHECK(s.train_every == 10);

  TrainConfig bad;
  bad.gamma = 1.0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = TrainConfig{};
  bad.lr.values.pop_back();
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("expert moves toward the goal") {
  const auto scene = test_scene();
  Environment env(tiny_env());
  Pose start = scene->goal;
  start.position -= 20.0 * horizontal_axes(scene->goal).x;
  env.reset_at(scene, start);
  CHECK(expert_action(env) == Action::kTxPlus);

  start = scene->goal;
  start.position += 20.0 * horizontal_axes(scene->goal).y;
  env.reset_at(scene, start);
  CHECK(expert_action(env) == Action::kTyMinus);

  // At the goal every action does some damage; the expert takes the least.
  env.reset_at(scene, scene->goal);
  const Action a = expert_action(env);
  double best = -10.0;
  for (Action b : kAllActions) {
    const auto imp = env.preview(b).improvement;
    best = std::max(best, imp.delta_d + imp.delta_theta);
  }
  const auto imp = env.preview(a).improvement;
  CHECK(imp.delta_d + imp.delta_theta == best);
  CHECK(best <= 0.0);
}

TEST_CASE("demonstrations are deterministic and independent of the worker count") {
  const std::vector<std::shared_ptr<const Scene>> ds{test_scene()};
  const auto a = generate_demonstrations(ds, tiny_env(), 150, 0.1, 9, 1);
  const auto b = generate_demonstrations(ds, tiny_env(), 150, 0.1, 9, 3);
  REQUIRE(a.size() == 150);
  REQUIRE(b.size() == 150);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].a == b[i].a);
    CHECK(a[i].r == b[i].r);
    CHECK(a[i].done == b[i].done);
    CHECK(*a[i].s_next.frames.back() == *b[i].s_next.frames.back());
  }
}

TEST_CASE("training loop bookkeeping") {
  const std::vector<std::shared_ptr<const Scene>> ds{test_scene()};
  const TrainConfig tc = tiny_train();
  std::vector<TrainRecord> log;
  TrainHooks hooks;
  hooks.on_record = [&](const TrainRecord& r) { log.push_back(r); };
  long long checkpoints = 0;
  TrainConfig with_ckpt = tc;
  with_ckpt.checkpoint_every = 7;
  hooks.on_checkpoint = [&](const QNetwork&, long long) { ++checkpoints; };
  const TrainResult res = train(ds, tiny_env(), with_ckpt, hooks);

  CHECK(res.interaction_steps == 230);
  CHECK(res.training_steps == 23);
  CHECK(res.pretrain_updates == 5);
  CHECK(checkpoints == 3);

  long long insertions = 0;
  long long first_rl = -1;
  for (std::size_t i = 0; i < log.size(); ++i) {
    const auto& r = log[i];
    if (r.phase != "rl") continue;
    if (first_rl < 0) {
      first_rl = static_cast<long long>(i);
      // Replay starts with the demonstration seed.
      CHECK(r.replay_size == tc.demo_seed + r.episode_steps);
    }
    CHECK(r.insertions == r.episode_steps);
    insertions += r.insertions;
    CHECK_FALSE(r.mean_delta_c.has_value());
    CHECK(TrainRecord::from_json(r.to_json()).to_json() == r.to_json());
  }
  CHECK(insertions == 230);
  CHECK(log.back().interaction_step == 230);

  // Same seed, same log.
  std::vector<TrainRecord> again;
  TrainHooks h2;
  h2.on_record = [&](const TrainRecord& r) { again.push_back(r); };
  const TrainResult res2 = train(ds, tiny_env(), tc, h2);
  REQUIRE(again.size() == log.size());
  for (std::size_t i = 0; i < log.size(); ++i) CHECK(again[i].to_json() == log[i].to_json());
  CHECK(res2.q.params() == res.q.params());
}

TEST_CASE("no updates leave the initial parameters untouched") {
  const std::vector<std::shared_ptr<const Scene>> ds{test_scene()};
  TrainConfig tc = tiny_train();
  tc.pretrain_updates = 0;
  tc.interaction_steps = 9;  // below one training period
  const TrainResult res = train(ds, tiny_env(), tc);
  CHECK(res.training_steps == 0);
  NetworkSpec spec = tc.network;
  spec.in_channels = 4;
  spec.height = 24;
  spec.width = 24;
  CHECK(res.q.params() == QNetwork(spec, tc.seed).params());
}

TEST_CASE("confidence-aware training logs the confidence change") {
  const std::vector<std::shared_ptr<const Scene>> ds{test_scene()};
  TrainConfig tc = tiny_train();
  tc.interaction_steps = 60;
  EnvConfig env = tiny_env();
  env.confidence_in_reward = true;
  bool saw = false;
  TrainHooks hooks;
  hooks.on_record = [&](const TrainRecord& r) {
    if (r.phase == "rl") {
      CHECK(r.mean_delta_c.has_value());
      CHECK(r.mean_c.has_value());
      saw = true;
    }
  };
  train(ds, env, tc, hooks);
  CHECK(saw);
}
