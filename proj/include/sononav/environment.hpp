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

#ifndef SONONAV_ENVIRONMENT_HPP
#define SONONAV_ENVIRONMENT_HPP

#include <deque>
#include <memory>
#include <optional>
#include <random>
#include <string_view>
#include <vector>

#include "sononav/confidence.hpp"
#include "sononav/pose_math.hpp"
#include "sononav/volume.hpp"

namespace sononav {

using Rng = std::mt19937_64;

/// A volume with its extracted surface and the goal pose.
struct Scene {
  Volume volume;
  SurfaceMap surface;
  Pose goal;
};

/// Extracts the surface once. Throws like extract_surface and
/// Pose::validate.
std::shared_ptr<const Scene> make_scene(Volume volume, const Pose& goal);

/// The m most recent frames, oldest first.
struct Observation {
  std::vector<std::shared_ptr<const UsImage>> frames;

  int depth() const { return static_cast<int>(frames.size()); }
  const UsImage& latest() const { return *frames.back(); }
};

enum class TerminationReason { kNone, kGoal, kMaxSteps, kStepExhausted, kOutOfVolume };

std::string_view termination_name(TerminationReason r);
/// Inverse of termination_name. Throws std::invalid_argument.
TerminationReason termination_from_name(std::string_view name);

enum class EnvMode { kTraining, kEvaluation };

struct EnvConfig {
  int image_height = 150;
  int image_width = 150;
  double pixel_spacing_mm = 0.5;
  int frames = 4;
  int roi_height = 110;  // centered
  int roi_width = 90;
  double tilt_limit_deg = 30.0;
  double out_of_volume_fraction = 0.30;
  double goal_distance_mm = 1.0;
  double goal_angle_deg = 1.0;
  double success_distance_mm = 10.0;
  double success_angle_deg = 10.0;
  int max_steps = 120;
  int pose_buffer_length = 30;
  double convergence_threshold = 0.01;
  int convergence_pairs = 3;
  int initial_step_level = StepSizes::kInitial;
  bool confidence_in_reward = false;
  bool always_compute_confidence = false;
  double init_x_min = 0.3;
  double init_x_max = 0.7;
  double init_y_min = 0.2;
  double init_y_max = 0.8;
  ConfidenceParams confidence;

  /// Throws std::invalid_argument.
  void validate() const;
  RoiRect roi() const { return RoiRect::centered(image_height, image_width, roi_height, roi_width); }
};

/// Per-step diagnostics. Distances and angles refer to the pose after the
/// step; `steps` holds the sizes that will apply to the next action.
struct StepInfo {
  int t = 0;
  double d_mm = 0.0;
  double theta_deg = 0.0;
  double c_roi = 0.0;
  double delta_d = 0.0;
  double delta_theta = 0.0;
  double delta_c = 0.0;
  double beta_deg = 0.0;
  bool tilt_violation = false;
  TerminationReason reason = TerminationReason::kNone;
  StepSizes steps;
};

struct StepOutcome {
  Observation observation;
  double reward = 0.0;
  bool done = false;
  StepInfo info;
};

struct RewardInputs {
  bool out_of_volume = false;
  bool tilt_violation = false;
  bool goal_reached = false;
  double delta_d = 0.0;
  double delta_theta = 0.0;
  double delta_c = 0.0;
};

double compute_reward(const RewardInputs& in, bool confidence_in_reward);

/// Both tolerances inclusive.
bool check_goal(double d_mm, double theta_deg, double d_tol_mm = 1.0, double theta_tol_deg = 1.0);

struct TerminationState {
  EnvMode mode = EnvMode::kTraining;
  bool out_of_volume = false;
  bool goal_reached = false;
  bool steps_exhausted = false;
  int steps_taken = 0;
  int max_steps = 120;
};

/// Out of volume first, then goal (training only), step exhaustion, and
/// the step limit.
TerminationReason check_termination(const TerminationState& s);

/// FIFO of recent poses used to shrink step sizes once the probe stops
/// making progress.
class PoseBuffer {
 public:
  PoseBuffer(int capacity, double position_scale_mm, double threshold, int pairs_needed);

  /// Adds a pose. Returns true (and clears the buffer) when at least
  /// `pairs_needed` pairs of buffered poses lie closer than the threshold.
  bool push(const Pose& pose);
  void clear() { poses_.clear(); }
  int size() const { return static_cast<int>(poses_.size()); }
  /// Distance between two poses in the normalized 7D encoding.
  double distance(const Pose& a, const Pose& b) const;

 private:
  int capacity_;
  double scale_;
  double threshold_;
  int pairs_needed_;
  std::deque<Pose> poses_;
};

/// Applies the buffer result to the step sizes.
StepSizes update_step_scheduler(PoseBuffer& buffer, const Pose& pose, StepSizes steps);

/// Effect of an action under the environment restrictions, without
/// committing it.
struct ActionPreview {
  Pose pose;
  bool out_of_footprint = false;
  bool tilt_violation = false;
  PoseImprovement improvement;
};

/**
 * Probe navigation environment on one scene at a time.
 *
 * Single-threaded. Instances may share scenes.
 */
class Environment {
 public:
  explicit Environment(EnvConfig cfg, EnvMode mode = EnvMode::kTraining);

  /// Random start in the central region with the probe pointing down and a
  /// random yaw. Throws std::runtime_error if no valid surface point is
  /// found in 100 attempts.
  Observation reset(std::shared_ptr<const Scene> scene, Rng& rng);
  /// Starts from a given pose (z is taken from the surface).
  Observation reset_at(std::shared_ptr<const Scene> scene, const Pose& start);

  /// Throws std::logic_error when no episode is active.
  StepOutcome step(Action a);

  ActionPreview preview(Action a) const;
  /// Whether the slice at `pose` has too few nonzero pixels.
  bool image_out_of_volume(const UsImage& img) const;
  UsImage render(const Pose& pose) const;
  UsImage goal_image() const { return render(scene_->goal); }

  const EnvConfig& config() const { return cfg_; }
  EnvMode mode() const { return mode_; }
  void set_mode(EnvMode m) { mode_ = m; }
  const Pose& pose() const { return pose_; }
  const Scene& scene() const { return *scene_; }
  const StepSizes& steps() const { return steps_; }
  int steps_taken() const { return t_; }
  bool active() const { return active_; }
  const Observation& observation() const { return obs_; }
  double distance_to_goal() const;
  double angle_to_goal() const;
  /// ROI confidence of the latest frame, or 0 when not computed.
  double current_confidence() const { return c_; }
  bool confidence_enabled() const { return cfg_.confidence_in_reward || cfg_.always_compute_confidence; }

 private:
  double frame_confidence(const UsImage& img) const;
  Observation begin(std::shared_ptr<const Scene> scene, const Pose& start);

  EnvConfig cfg_;
  EnvMode mode_;
  std::shared_ptr<const Scene> scene_;
  Pose pose_;
  StepSizes steps_;
  std::optional<PoseBuffer> buffer_;
  Observation obs_;
  double c_ = 0.0;
  int t_ = 0;
  bool active_ = false;
};

}  // namespace sononav

#endif  // SONONAV_ENVIRONMENT_HPP
