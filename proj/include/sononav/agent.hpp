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

#ifndef SONONAV_AGENT_HPP
#define SONONAV_AGENT_HPP

#include <deque>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "sononav/environment.hpp"
#include "sononav/qnetwork.hpp"

namespace sononav {

struct Transition {
  Observation s;
  Action a = Action::kTxPlus;
  double r = 0.0;
  Observation s_next;
  bool done = false;
};

/// Bounded FIFO of transitions.
class ReplayMemory {
 public:
  explicit ReplayMemory(std::size_t capacity);

  void push(Transition t);
  std::size_t size() const { return items_.size(); }
  std::size_t capacity() const { return capacity_; }
  const Transition& at(std::size_t i) const { return items_.at(i); }
  /// Uniform draw with replacement. Throws std::logic_error when empty.
  std::vector<const Transition*> sample(std::size_t n, Rng& rng) const;

 private:
  std::size_t capacity_;
  std::deque<Transition> items_;
};

/// Greedy one-step expert: simulates every action under the environment
/// restrictions and picks the largest Δd + Δθ, lowest index on ties.
/// Actions that leave the volume rank last.
Action expert_action(const Environment& env);

/// Linear decay from `start` to `end` over `horizon` interaction steps.
struct EpsilonSchedule {
  double start = 0.5;
  double end = 0.1;
  long long horizon = 100000;
  double operator()(long long n) const;
};

/// Piecewise-constant learning rate over training steps.
struct LrSchedule {
  std::vector<long long> boundaries = {40000, 80000, 110000};
  std::vector<double> values = {0.01, 0.001, 5e-4, 1e-4};
  double operator()(long long step) const;
  void validate() const;
};

struct TrainConfig {
  /// Interaction budget the reference schedules refer to (160k training
  /// steps at one update per 10 interactions).
  static constexpr long long kReferenceInteractions = 1600000;

  double gamma = 0.9;
  EpsilonSchedule epsilon;
  int batch_size = 32;
  int train_every = 10;
  long long target_sync = 1000;  // training steps
  LrSchedule lr;
  double huber_delta = 1.0;
  long long pretrain_demos = 100000;
  long long pretrain_updates = 10000;
  double pretrain_lr = 0.01;
  double demo_epsilon = 0.0;  // chance of a random action during demonstrations
  long long demo_seed = 5000;
  long long replay_capacity = 100000;
  long long interaction_steps = kReferenceInteractions;
  long long checkpoint_every = 0;  // training steps; 0 = never
  uint64_t seed = 0;
  NetworkSpec network;

  /// Throws std::invalid_argument.
  void validate() const;
  /// Copy with the epsilon horizon, learning-rate boundaries and target
  /// sync period shrunk by interaction_steps / kReferenceInteractions.
  TrainConfig scaled_to(long long interactions) const;
};

/// Raised when a loss or gradient stops being finite.
class TrainingDiverged : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TdResult {
  double loss = 0.0;
  std::vector<double> targets;
};

/// Huber TD loss over the batch. Gradients are accumulated into q (after
/// zeroing); `target` is only read.
template <typename T>
TdResult td_loss_and_grad(QNetworkT<T>& q, QNetworkT<T>& target, const std::vector<const Transition*>& batch,
                             double gamma, double huber_delta = 1.0);

/// One Adam step on q. Throws TrainingDiverged on a non-finite loss.
template <typename T>
double td_update(QNetworkT<T>& q, QNetworkT<T>& target, const std::vector<const Transition*>& batch, double gamma,
                 Adam<T>& opt, double lr, double huber_delta = 1.0);

/// Expert rollouts in training mode until `count` transitions are
/// collected. Episode e uses its own stream derived from (seed, e), so the
/// result does not depend on `workers`.
std::vector<Transition> generate_demonstrations(const std::vector<std::shared_ptr<const Scene>>& dataset,
                                                const EnvConfig& env_cfg, long long count, double demo_epsilon,
                                                uint64_t seed, int workers = 1);

/// Seed sequence for stream `index` of a run seeded with `seed`.
Rng derived_rng(uint64_t seed, uint64_t index);

/// One record per episode (phase "rl") or per pretraining block
/// (phase "pretrain").
struct TrainRecord {
  std::string phase = "rl";
  long long episode = 0;
  long long interaction_step = 0;
  long long training_steps = 0;
  long long insertions = 0;
  long long replay_size = 0;
  int episode_steps = 0;
  double loss = 0.0;  // mean over updates since the previous record
  double epsilon = 0.0;
  double lr = 0.0;
  double episode_return = 0.0;
  double mean_delta_d = 0.0;
  double mean_delta_theta = 0.0;
  std::optional<double> mean_delta_c;  // absent when confidence is not computed
  std::optional<double> mean_c;
  double final_d_mm = 0.0;
  double final_theta_deg = 0.0;
  std::string reason;

  std::string to_json() const;
  /// Throws std::invalid_argument on malformed lines.
  static TrainRecord from_json(const std::string& line);
};

struct TrainHooks {
  std::function<void(const TrainRecord&)> on_record;
  std::function<void(const QNetwork&, long long training_steps)> on_checkpoint;
};

struct TrainResult {
  QNetwork q;
  long long interaction_steps = 0;
  long long training_steps = 0;
  long long pretrain_updates = 0;
  long long episodes = 0;
};

/// Demonstration pretraining followed by epsilon-greedy DQN.
TrainResult train(const std::vector<std::shared_ptr<const Scene>>& dataset, const EnvConfig& env_cfg,
                  const TrainConfig& cfg, const TrainHooks& hooks = {}, int workers = 1);

/// Raised for unreadable, corrupted or mismatched checkpoint files.
class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

void save_checkpoint(const QNetwork& q, const std::filesystem::path& path);
QNetwork load_checkpoint(const std::filesystem::path& path);
/// Also checks the architecture against `expected`.
QNetwork load_checkpoint(const std::filesystem::path& path, const NetworkSpec& expected);

}  // namespace sononav

#endif  // SONONAV_AGENT_HPP
