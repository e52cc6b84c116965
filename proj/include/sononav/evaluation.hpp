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

#ifndef SONONAV_EVALUATION_HPP
#define SONONAV_EVALUATION_HPP

#include <functional>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "sononav/agent.hpp"
#include "sononav/environment.hpp"

namespace sononav {

/// Mean local SSIM, 11x11 Gaussian window (sigma 1.5), K1 = 0.01,
/// K2 = 0.03, dynamic range 255, over window positions fully inside the
/// image. Throws std::invalid_argument on a size mismatch or images
/// smaller than the window.
double ssim(const UsImage& a, const UsImage& b);

/// One environment step as written to trajectory files.
struct TrajectoryRecord {
  int t = 0;
  Vec3 position_mm = Vec3::Zero();
  Eigen::Vector4d quaternion_xyzw = Eigen::Vector4d(0, 0, 0, 1);
  int action = 0;
  double reward = 0.0;
  double d_mm = 0.0;
  double theta_deg = 0.0;
  double c_roi = 0.0;
  double delta_d = 0.0;
  double delta_theta = 0.0;
  double delta_c = 0.0;
  double beta_deg = 0.0;
  double d_step_mm = 0.0;
  double theta_step_deg = 0.0;
  bool done = false;
  std::string reason;

  static TrajectoryRecord from_step(const Pose& pose, Action a, const StepOutcome& out);
  std::string to_json() const;
  /// Throws std::invalid_argument.
  static TrajectoryRecord from_json(const std::string& line);
  bool operator==(const TrajectoryRecord&) const = default;
};

void write_trajectory(const std::vector<TrajectoryRecord>& records, const std::filesystem::path& path);
std::vector<TrajectoryRecord> read_trajectory(const std::filesystem::path& path);

/// Navigation policy. Instances are used by one episode at a time.
class Policy {
 public:
  virtual ~Policy() = default;
  /// Called before every episode with a per-episode seed.
  virtual void begin_episode(uint64_t /*seed*/) {}
  virtual Action act(const Environment& env, const Observation& obs) = 0;
};

/// Builds an independent policy instance (one per evaluation worker).
using PolicyFactory = std::function<std::unique_ptr<Policy>()>;

/// Uniform over the 10 actions, reseeded at each episode.
class RandomPolicy : public Policy {
 public:
  explicit RandomPolicy(uint64_t seed = 0) : rng_(seed) {}
  void begin_episode(uint64_t seed) override { rng_.seed(seed); }
  Action act(const Environment& env, const Observation& obs) override;
  Action next();

 private:
  Rng rng_;
};

std::unique_ptr<Policy> random_policy(uint64_t seed = 0);

/// Privileged greedy expert (reads the goal from the environment).
class ExpertPolicy : public Policy {
 public:
  Action act(const Environment& env, const Observation& obs) override;
};

/// Greedy on a Q-network.
class GreedyPolicy : public Policy {
 public:
  explicit GreedyPolicy(QNetwork q) : q_(std::move(q)) {}
  Action act(const Environment& env, const Observation& obs) override;

 private:
  QNetwork q_;
};

struct EpisodeResult {
  int episode = 0;
  int volume = 0;
  double final_d_mm = 0.0;
  double final_theta_deg = 0.0;
  double ssim = 0.0;
  int steps = 0;
  double mean_delta_dtheta = 0.0;
  double mean_c = 0.0;
  bool success = false;
  std::string reason;
  std::vector<TrajectoryRecord> trajectory;  // filled when requested
};

struct Aggregate {
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation; 0 for a single row
};

struct EvalReport {
  std::vector<EpisodeResult> rows;

  Aggregate delta_dtheta() const;
  Aggregate final_d() const;
  Aggregate final_theta() const;
  Aggregate ssim() const;
  Aggregate steps() const;
  Aggregate mean_c() const;
  double success_rate() const;

  /// One row per episode, then `mean` and `std` footer rows.
  std::string to_csv() const;
  std::string to_json() const;
};

Aggregate aggregate(const std::vector<double>& values);

struct EvalConfig {
  int episodes_per_volume = 3;
  uint64_t seed = 0;
  bool record_trajectories = false;
  int workers = 1;
};

/**
 * Runs evaluation-mode episodes: for volume v, episodes v*k .. v*k+k-1.
 * Episode i draws its start pose from a stream derived from (seed, i), so
 * the report does not depend on the number of workers.
 */
EvalReport evaluate(const PolicyFactory& policy, const std::vector<std::shared_ptr<const Scene>>& dataset,
                    const EnvConfig& env_cfg, const EvalConfig& cfg);

struct CorrelationBin {
  int bin = 0;
  long long first_episode = 0;
  long long last_episode = 0;
  double mean_delta_c = 0.0;
  double mean_delta_dtheta = 0.0;
  double mean_final_d_mm = 0.0;
  double mean_final_theta_deg = 0.0;
};

struct CorrelationStudy {
  std::vector<CorrelationBin> bins;
  /// Spearman rank correlation of bin mean Δc against bin mean Δd+Δθ;
  /// empty when either column is constant.
  std::optional<double> spearman;
  std::string to_csv() const;
};

/// Bins the RL episodes of a training log in order. Throws
/// std::invalid_argument for a log without RL episodes or without Δc.
CorrelationStudy correlation_study(const std::vector<TrainRecord>& log, int bins = 10);
std::vector<TrainRecord> read_training_log(const std::filesystem::path& path);

/// Rank correlation with average ranks for ties; empty when a column is
/// constant. Throws std::invalid_argument on a length mismatch.
std::optional<double> spearman(const std::vector<double>& x, const std::vector<double>& y);

}  // namespace sononav

#endif  // SONONAV_EVALUATION_HPP
