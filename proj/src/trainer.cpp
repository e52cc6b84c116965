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

#include <cmath>

#include "sononav/agent.hpp"

namespace sononav {

namespace {

constexpr uint64_t kLoopStream = 1ULL << 62;
constexpr uint64_t kPretrainStream = kLoopStream + 1;

struct EpisodeStats {
  int steps = 0;
  double ret = 0.0;
  double sum_dd = 0.0, sum_dt = 0.0, sum_dc = 0.0, sum_c = 0.0;
};

}  // namespace

TrainResult train(const std::vector<std::shared_ptr<const Scene>>& dataset, const EnvConfig& env_cfg,
                  const TrainConfig& cfg, const TrainHooks& hooks, int workers) {
  if (dataset.empty()) throw std::invalid_argument("train: empty dataset");
  cfg.validate();
  env_cfg.validate();
  NetworkSpec spec = cfg.network;
  spec.in_channels = env_cfg.frames;
  spec.height = env_cfg.image_height;
  spec.width = env_cfg.image_width;
  spec.outputs = kNumActions;

  TrainResult result{QNetwork(spec, cfg.seed)};
  QNetwork& q = result.q;
  QNetwork target = q;
  Adam<float> opt(q.params().size());
  auto emit = [&](const TrainRecord& r) {
    if (hooks.on_record) hooks.on_record(r);
  };

  // Demonstration pretraining.
  std::vector<Transition> demos =
      generate_demonstrations(dataset, env_cfg, cfg.pretrain_demos, cfg.demo_epsilon, cfg.seed, workers);
  {
    Rng rng = derived_rng(cfg.seed, kPretrainStream);
    std::uniform_int_distribution<std::size_t> pick(0, demos.empty() ? 0 : demos.size() - 1);
    const long long block = std::max<long long>(1, cfg.pretrain_updates / 10);
    double loss_sum = 0.0;
    long long loss_n = 0;
    for (long long u = 0; u < cfg.pretrain_updates; ++u) {
      std::vector<const Transition*> batch(static_cast<std::size_t>(cfg.batch_size));
      for (auto& p : batch) p = &demos[pick(rng)];
      loss_sum += td_update(q, target, batch, cfg.gamma, opt, cfg.pretrain_lr, cfg.huber_delta);
      ++loss_n;
      if ((u + 1) % cfg.target_sync == 0) target = q;
      if ((u + 1) % block == 0 || u + 1 == cfg.pretrain_updates) {
        TrainRecord r;
        r.phase = "pretrain";
        r.training_steps = u + 1;
        r.loss = loss_sum / static_cast<double>(loss_n);
        r.lr = cfg.pretrain_lr;
        emit(r);
        loss_sum = 0.0;
        loss_n = 0;
      }
    }
    result.pretrain_updates = cfg.pretrain_updates;
  }
  target = q;

  ReplayMemory memory(static_cast<std::size_t>(cfg.replay_capacity));
  for (long long i = 0; i < cfg.demo_seed; ++i) memory.push(demos[static_cast<std::size_t>(i)]);
  demos.clear();
  demos.shrink_to_fit();

  Rng rng = derived_rng(cfg.seed, kLoopStream);
  std::uniform_int_distribution<std::size_t> pick_scene(0, dataset.size() - 1);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  std::uniform_int_distribution<int> random_action(0, kNumActions - 1);
  Environment env(env_cfg, EnvMode::kTraining);

  long long n = 0, train_steps = 0, episode = 0, insertions = 0;
  double loss_sum = 0.0;
  long long loss_n = 0;
  while (n < cfg.interaction_steps) {
    Observation s = env.reset(dataset[pick_scene(rng)], rng);
    EpisodeStats st;
    StepInfo last;
    bool done = false;
    while (!done && n < cfg.interaction_steps) {
      const double eps = cfg.epsilon(n);
      Action a;
      if (u01(rng) < eps) {
        a = action_from_index(random_action(rng));
      } else {
        a = greedy_action(q.q_values(s));
      }
      StepOutcome o = env.step(a);
      memory.push({s, a, o.reward, o.observation, o.done});
      ++insertions;
      ++n;
      done = o.done;
      s = std::move(o.observation);
      last = o.info;
      ++st.steps;
      st.ret += o.reward;
      st.sum_dd += o.info.delta_d;
      st.sum_dt += o.info.delta_theta;
      st.sum_dc += o.info.delta_c;
      st.sum_c += o.info.c_roi;

      if (n % cfg.train_every == 0) {
        const auto batch = memory.sample(static_cast<std::size_t>(cfg.batch_size), rng);
        loss_sum += td_update(q, target, batch, cfg.gamma, opt, cfg.lr(train_steps), cfg.huber_delta);
        ++loss_n;
        ++train_steps;
        if (train_steps % cfg.target_sync == 0) target = q;
        if (cfg.checkpoint_every > 0 && train_steps % cfg.checkpoint_every == 0 && hooks.on_checkpoint) {
          hooks.on_checkpoint(q, train_steps);
        }
      }
    }
    TrainRecord r;
    r.episode = episode++;
    r.interaction_step = n;
    r.training_steps = train_steps;
    r.insertions = insertions;
    r.replay_size = static_cast<long long>(memory.size());
    r.episode_steps = st.steps;
    r.loss = loss_n > 0 ? loss_sum / static_cast<double>(loss_n) : 0.0;
    r.epsilon = cfg.epsilon(n);
    r.lr = cfg.lr(train_steps);
    r.episode_return = st.ret;
    const double k = std::max(1, st.steps);
    r.mean_delta_d = st.sum_dd / k;
    r.mean_delta_theta = st.sum_dt / k;
    if (env.confidence_enabled()) {
      r.mean_delta_c = st.sum_dc / k;
      r.mean_c = st.sum_c / k;
    }
    r.final_d_mm = last.d_mm;
    r.final_theta_deg = last.theta_deg;
    r.reason = std::string(termination_name(last.reason));
    emit(r);
    insertions = 0;
    loss_sum = 0.0;
    loss_n = 0;
  }
  result.interaction_steps = n;
  result.training_steps = train_steps;
  result.episodes = episode;
  return result;
}

}  // namespace sononav
