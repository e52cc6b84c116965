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

#include <algorithm>
#include <cmath>
#include <numeric>
#include <thread>

#include <json.hpp>

#include "sononav/agent.hpp"

namespace sononav {

ReplayMemory::ReplayMemory(std::size_t capacity) : capacity_(capacity) {
  if (capacity == 0) throw std::invalid_argument("ReplayMemory: capacity must be positive");
}

void ReplayMemory::push(Transition t) {
  if (items_.size() == capacity_) items_.pop_front();
  items_.push_back(std::move(t));
}

std::vector<const Transition*> ReplayMemory::sample(std::size_t n, Rng& rng) const {
  if (items_.empty()) throw std::logic_error("ReplayMemory::sample: memory is empty");
  std::uniform_int_distribution<std::size_t> u(0, items_.size() - 1);
  std::vector<const Transition*> out(n);
  for (auto& p : out) p = &items_[u(rng)];
  return out;
}

Action expert_action(const Environment& env) {
  std::array<ActionPreview, kNumActions> previews;
  std::array<int, kNumActions> order{};
  for (int a = 0; a < kNumActions; ++a) {
    previews[static_cast<std::size_t>(a)] = env.preview(action_from_index(a));
    order[static_cast<std::size_t>(a)] = a;
  }
  auto score = [&](int a) {
    const auto& imp = previews[static_cast<std::size_t>(a)].improvement;
    return imp.delta_d + imp.delta_theta;
  };
  std::stable_sort(order.begin(), order.end(), [&](int x, int y) { return score(x) > score(y); });
  for (int a : order) {
    const ActionPreview& p = previews[static_cast<std::size_t>(a)];
    if (p.out_of_footprint) continue;
    if (env.image_out_of_volume(env.render(p.pose))) continue;
    return action_from_index(a);
  }
  return action_from_index(order.front());
}

double EpsilonSchedule::operator()(long long n) const {
  if (n <= 0) return start;
  if (horizon <= 0 || n >= horizon) return end;
  return start + (end - start) * static_cast<double>(n) / static_cast<double>(horizon);
}

double LrSchedule::operator()(long long step) const {
  std::size_t i = 0;
  while (i < boundaries.size() && step >= boundaries[i]) ++i;
  return values[i];
}

void LrSchedule::validate() const {
  if (values.size() != boundaries.size() + 1) {
    throw std::invalid_argument("lr schedule: needs one more value than boundaries");
  }
  if (!std::is_sorted(boundaries.begin(), boundaries.end())) {
    throw std::invalid_argument("lr schedule: boundaries must be non-decreasing");
  }
  for (double v : values)
    if (!(v > 0.0)) throw std::invalid_argument("lr schedule: rates must be positive");
}

void TrainConfig::validate() const {
  auto require = [](bool ok, const char* what) {
    if (!ok) throw std::invalid_argument(std::string("train config: ") + what);
  };
  require(gamma > 0.0 && gamma < 1.0, "gamma must be in (0, 1)");
  require(epsilon.start >= 0.0 && epsilon.start <= 1.0 && epsilon.end >= 0.0 && epsilon.end <= 1.0,
          "epsilon must be in [0, 1]");
  require(epsilon.horizon >= 0, "epsilon horizon must be >= 0");
  require(batch_size > 0, "batch size must be positive");
  require(train_every > 0, "train_every must be positive");
  require(target_sync > 0, "target_sync must be positive");
  lr.validate();
  require(huber_delta > 0.0, "huber delta must be positive");
  require(pretrain_demos >= 0 && pretrain_updates >= 0, "pretraining counts must be >= 0");
  require(pretrain_updates == 0 || pretrain_demos > 0, "pretraining needs demonstrations");
  require(pretrain_lr > 0.0, "pretrain lr must be positive");
  require(demo_epsilon >= 0.0 && demo_epsilon <= 1.0, "demo epsilon must be in [0, 1]");
  require(demo_seed >= 0 && demo_seed <= pretrain_demos, "demo seed count must be within the demonstration set");
  require(replay_capacity > 0, "replay capacity must be positive");
  require(interaction_steps > 0, "interaction steps must be positive");
  require(checkpoint_every >= 0, "checkpoint_every must be >= 0");
  network.validate();
}

TrainConfig TrainConfig::scaled_to(long long interactions) const {
  TrainConfig out = *this;
  const double f = static_cast<double>(interactions) / static_cast<double>(kReferenceInteractions);
  auto scale = [f](long long v) { return std::max<long long>(1, std::llround(static_cast<double>(v) * f)); };
  out.interaction_steps = interactions;
  out.epsilon.horizon = scale(epsilon.horizon);
  for (auto& b : out.lr.boundaries) b = scale(b);
  out.target_sync = scale(target_sync);
  return out;
}

namespace {

double huber(double x, double delta) {
  const double a = std::abs(x);
  return a <= delta ? 0.5 * x * x : delta * (a - 0.5 * delta);
}

}  // namespace

template <typename T>
TdResult td_loss_and_grad(QNetworkT<T>& q, QNetworkT<T>& target, const std::vector<const Transition*>& batch,
                          double gamma, double huber_delta) {
  if (batch.empty()) throw std::invalid_argument("td update: empty batch");
  const int n = static_cast<int>(batch.size());
  std::vector<const Observation*> s(batch.size()), s_next(batch.size());
  bool any_bootstrap = false;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    s[i] = &batch[i]->s;
    s_next[i] = &batch[i]->s_next;
    any_bootstrap = any_bootstrap || (!batch[i]->done && gamma != 0.0);
  }
  typename QNetworkT<T>::Matrix q_next;
  if (any_bootstrap) q_next = target.q_values(s_next);
  const typename QNetworkT<T>::Matrix q_now = q.q_values(s);

  TdResult out;
  out.targets.resize(batch.size());
  typename QNetworkT<T>::Matrix grad = QNetworkT<T>::Matrix::Zero(q_now.rows(), n);
  double loss = 0.0;
  for (int i = 0; i < n; ++i) {
    const Transition& t = *batch[static_cast<std::size_t>(i)];
    double y = t.r;
    if (!t.done && gamma != 0.0) y += gamma * static_cast<double>(q_next.col(i).maxCoeff());
    out.targets[static_cast<std::size_t>(i)] = y;
    const int a = action_index(t.a);
    const double diff = static_cast<double>(q_now(a, i)) - y;
    loss += huber(diff, huber_delta);
    grad(a, i) = static_cast<T>(std::clamp(diff, -huber_delta, huber_delta) / n);
  }
  out.loss = loss / n;
  q.zero_grad();
  q.backward(grad);
  return out;
}

template <typename T>
double td_update(QNetworkT<T>& q, QNetworkT<T>& target, const std::vector<const Transition*>& batch, double gamma,
                 Adam<T>& opt, double lr, double huber_delta) {
  const TdResult r = td_loss_and_grad(q, target, batch, gamma, huber_delta);
  if (!std::isfinite(r.loss)) throw TrainingDiverged("td update: loss is not finite");
  for (T g : q.grads())
    if (!std::isfinite(static_cast<double>(g))) throw TrainingDiverged("td update: gradient is not finite");
  opt.step(q.params(), q.grads(), lr);
  return r.loss;
}

template TdResult td_loss_and_grad(QNetworkT<float>&, QNetworkT<float>&, const std::vector<const Transition*>&, double,
                                   double);
template TdResult td_loss_and_grad(QNetworkT<double>&, QNetworkT<double>&, const std::vector<const Transition*>&,
                                   double, double);
template double td_update(QNetworkT<float>&, QNetworkT<float>&, const std::vector<const Transition*>&, double,
                          Adam<float>&, double, double);
template double td_update(QNetworkT<double>&, QNetworkT<double>&, const std::vector<const Transition*>&, double,
                          Adam<double>&, double, double);

Rng derived_rng(uint64_t seed, uint64_t index) {
  std::seed_seq seq{static_cast<uint32_t>(seed), static_cast<uint32_t>(seed >> 32), static_cast<uint32_t>(index),
                    static_cast<uint32_t>(index >> 32), 0x5eed5eedu};
  return Rng(seq);
}

namespace {

std::vector<Transition> demo_episode(const std::vector<std::shared_ptr<const Scene>>& dataset, const EnvConfig& cfg,
                                     double demo_epsilon, uint64_t seed, uint64_t episode) {
  Rng rng = derived_rng(seed, episode);
  std::uniform_int_distribution<std::size_t> pick(0, dataset.size() - 1);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  std::uniform_int_distribution<int> random_action(0, kNumActions - 1);
  Environment env(cfg, EnvMode::kTraining);
  Observation s = env.reset(dataset[pick(rng)], rng);
  std::vector<Transition> out;
  while (true) {
    Action a = expert_action(env);
    if (demo_epsilon > 0.0 && u01(rng) < demo_epsilon) a = action_from_index(random_action(rng));
    StepOutcome o = env.step(a);
    out.push_back({s, a, o.reward, o.observation, o.done});
    s = std::move(o.observation);
    if (o.done) break;
  }
  return out;
}

}  // namespace

std::vector<Transition> generate_demonstrations(const std::vector<std::shared_ptr<const Scene>>& dataset,
                                                const EnvConfig& env_cfg, long long count, double demo_epsilon,
                                                uint64_t seed, int workers) {
  if (dataset.empty()) throw std::invalid_argument("generate_demonstrations: empty dataset");
  if (workers < 1) throw std::invalid_argument("generate_demonstrations: workers must be >= 1");
  std::vector<Transition> out;
  uint64_t next_episode = 0;
  while (static_cast<long long>(out.size()) < count) {
    std::vector<std::vector<Transition>> chunk(static_cast<std::size_t>(workers));
    if (workers == 1) {
      chunk[0] = demo_episode(dataset, env_cfg, demo_epsilon, seed, next_episode);
    } else {
      std::vector<std::thread> threads;
      for (int w = 0; w < workers; ++w) {
        threads.emplace_back([&, w] {
          chunk[static_cast<std::size_t>(w)] = demo_episode(dataset, env_cfg, demo_epsilon, seed, next_episode + w);
        });
      }
      for (auto& t : threads) t.join();
    }
    next_episode += static_cast<uint64_t>(workers);
    for (auto& ep : chunk) {
      for (auto& t : ep) {
        if (static_cast<long long>(out.size()) == count) break;
        out.push_back(std::move(t));
      }
    }
  }
  return out;
}

std::string TrainRecord::to_json() const {
  nlohmann::ordered_json j;
  j["phase"] = phase;
  j["episode"] = episode;
  j["interaction_step"] = interaction_step;
  j["training_steps"] = training_steps;
  j["insertions"] = insertions;
  j["replay_size"] = replay_size;
  j["episode_steps"] = episode_steps;
  j["loss"] = loss;
  j["epsilon"] = epsilon;
  j["lr"] = lr;
  j["episode_return"] = episode_return;
  j["mean_delta_d"] = mean_delta_d;
  j["mean_delta_theta"] = mean_delta_theta;
  if (mean_delta_c) j["mean_delta_c"] = *mean_delta_c;
  if (mean_c) j["mean_c"] = *mean_c;
  j["final_d_mm"] = final_d_mm;
  j["final_theta_deg"] = final_theta_deg;
  j["reason"] = reason;
  return j.dump();
}

TrainRecord TrainRecord::from_json(const std::string& line) {
  TrainRecord r;
  try {
    const auto j = nlohmann::json::parse(line);
    r.phase = j.at("phase").get<std::string>();
    r.episode = j.at("episode").get<long long>();
    r.interaction_step = j.at("interaction_step").get<long long>();
    r.training_steps = j.at("training_steps").get<long long>();
    r.insertions = j.at("insertions").get<long long>();
    r.replay_size = j.at("replay_size").get<long long>();
    r.episode_steps = j.at("episode_steps").get<int>();
    r.loss = j.at("loss").get<double>();
    r.epsilon = j.at("epsilon").get<double>();
    r.lr = j.at("lr").get<double>();
    r.episode_return = j.at("episode_return").get<double>();
    r.mean_delta_d = j.at("mean_delta_d").get<double>();
    r.mean_delta_theta = j.at("mean_delta_theta").get<double>();
    if (j.contains("mean_delta_c")) r.mean_delta_c = j.at("mean_delta_c").get<double>();
    if (j.contains("mean_c")) r.mean_c = j.at("mean_c").get<double>();
    r.final_d_mm = j.at("final_d_mm").get<double>();
    r.final_theta_deg = j.at("final_theta_deg").get<double>();
    r.reason = j.at("reason").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("training log record: ") + e.what());
  }
  return r;
}

}  // namespace sononav
