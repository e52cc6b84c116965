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

#include "sononav/environment.hpp"

#include <array>
#include <cmath>
#include <stdexcept>
#include <string>

namespace sononav {

std::shared_ptr<const Scene> make_scene(Volume volume, const Pose& goal) {
  goal.validate(1e-6);
  SurfaceMap surface = extract_surface(volume);
  return std::make_shared<const Scene>(Scene{std::move(volume), std::move(surface), goal});
}

namespace {

constexpr std::array<std::string_view, 5> kReasonNames = {"none", "goal", "max_steps", "step_exhausted",
                                                          "out_of_volume"};

}  // namespace

std::string_view termination_name(TerminationReason r) { return kReasonNames[static_cast<std::size_t>(r)]; }

TerminationReason termination_from_name(std::string_view name) {
  for (std::size_t i = 0; i < kReasonNames.size(); ++i) {
    if (kReasonNames[i] == name) return static_cast<TerminationReason>(i);
  }
  throw std::invalid_argument("unknown termination reason: " + std::string(name));
}

void EnvConfig::validate() const {
  auto require = [](bool ok, const char* what) {
    if (!ok) throw std::invalid_argument(std::string("env config: ") + what);
  };
  require(image_height >= 3 && image_width >= 1, "image size too small");
  require(pixel_spacing_mm > 0.0, "pixel spacing must be positive");
  require(frames >= 1, "frames must be >= 1");
  require(roi_height > 0 && roi_width > 0 && roi_height <= image_height && roi_width <= image_width,
          "roi must fit inside the image");
  require(tilt_limit_deg > 0.0 && tilt_limit_deg < 90.0, "tilt limit must be in (0, 90)");
  require(out_of_volume_fraction > 0.0 && out_of_volume_fraction <= 1.0, "out-of-volume fraction must be in (0, 1]");
  require(goal_distance_mm > 0.0 && goal_angle_deg > 0.0, "goal tolerances must be positive");
  require(success_distance_mm > 0.0 && success_angle_deg > 0.0, "success tolerances must be positive");
  require(max_steps > 0, "max steps must be positive");
  require(pose_buffer_length >= 2, "pose buffer length must be >= 2");
  require(convergence_threshold > 0.0, "convergence threshold must be positive");
  require(convergence_pairs >= 1, "convergence pairs must be >= 1");
  require(initial_step_level >= 1, "initial step level must be >= 1");
  require(0.0 <= init_x_min && init_x_min <= init_x_max && init_x_max <= 1.0, "init x range must lie in [0, 1]");
  require(0.0 <= init_y_min && init_y_min <= init_y_max && init_y_max <= 1.0, "init y range must lie in [0, 1]");
  confidence.validate();
}

double compute_reward(const RewardInputs& in, bool confidence_in_reward) {
  if (in.out_of_volume) return -1.0;
  if (in.tilt_violation) return -0.5;
  if (in.goal_reached) return 10.0;
  double r = in.delta_d + in.delta_theta;
  if (confidence_in_reward) r += in.delta_c;
  return r;
}

bool check_goal(double d_mm, double theta_deg, double d_tol_mm, double theta_tol_deg) {
  return d_mm <= d_tol_mm && theta_deg <= theta_tol_deg;
}

TerminationReason check_termination(const TerminationState& s) {
  if (s.out_of_volume) return TerminationReason::kOutOfVolume;
  if (s.mode == EnvMode::kTraining && s.goal_reached) return TerminationReason::kGoal;
  if (s.steps_exhausted) return TerminationReason::kStepExhausted;
  if (s.steps_taken >= s.max_steps) return TerminationReason::kMaxSteps;
  return TerminationReason::kNone;
}

PoseBuffer::PoseBuffer(int capacity, double position_scale_mm, double threshold, int pairs_needed)
    : capacity_(capacity), scale_(position_scale_mm), threshold_(threshold), pairs_needed_(pairs_needed) {
  if (capacity < 2 || !(position_scale_mm > 0.0) || !(threshold > 0.0) || pairs_needed < 1) {
    throw std::invalid_argument("PoseBuffer: invalid parameters");
  }
}

double PoseBuffer::distance(const Pose& a, const Pose& b) const {
  const double dp2 = ((a.position - b.position) / scale_).squaredNorm();
  const Eigen::Vector4d qa = a.orientation.coeffs(), qb = b.orientation.coeffs();
  // q and -q are the same rotation.
  const double dq2 = std::min((qa - qb).squaredNorm(), (qa + qb).squaredNorm());
  return std::sqrt(dp2 + dq2);
}

bool PoseBuffer::push(const Pose& pose) {
  if (static_cast<int>(poses_.size()) == capacity_) poses_.pop_front();
  poses_.push_back(pose);
  int hits = 0;
  for (std::size_t i = 0; i < poses_.size(); ++i) {
    for (std::size_t j = i + 1; j < poses_.size(); ++j) {
      if (distance(poses_[i], poses_[j]) < threshold_ && ++hits >= pairs_needed_) {
        poses_.clear();
        return true;
      }
    }
  }
  return false;
}

StepSizes update_step_scheduler(PoseBuffer& buffer, const Pose& pose, StepSizes steps) {
  if (buffer.push(pose)) steps.decrement();
  return steps;
}

Environment::Environment(EnvConfig cfg, EnvMode mode) : cfg_(std::move(cfg)), mode_(mode) { cfg_.validate(); }

UsImage Environment::render(const Pose& pose) const {
  return sample_slice(scene_->volume, pose, cfg_.image_height, cfg_.image_width, cfg_.pixel_spacing_mm);
}

bool Environment::image_out_of_volume(const UsImage& img) const {
  return nonzero_fraction(img) < cfg_.out_of_volume_fraction;
}

double Environment::frame_confidence(const UsImage& img) const {
  if (!confidence_enabled()) return 0.0;
  return roi_confidence(compute_confidence_map(img, cfg_.confidence), cfg_.roi());
}

double Environment::distance_to_goal() const { return pos_distance(pose_.position, scene_->goal.position); }

double Environment::angle_to_goal() const { return quat_angle(pose_.orientation, scene_->goal.orientation); }

Observation Environment::begin(std::shared_ptr<const Scene> scene, const Pose& start) {
  if (!scene) throw std::invalid_argument("Environment: null scene");
  scene_ = std::move(scene);
  pose_ = start;
  pose_.position.z() = scene_->surface.lookup(start.position.x(), start.position.y());
  steps_ = StepSizes{cfg_.initial_step_level};
  buffer_.emplace(cfg_.pose_buffer_length, scene_->volume.diagonal(), cfg_.convergence_threshold,
                  cfg_.convergence_pairs);
  auto frame = std::make_shared<const UsImage>(render(pose_));
  c_ = frame_confidence(*frame);
  obs_.frames.assign(static_cast<std::size_t>(cfg_.frames), frame);
  t_ = 0;
  active_ = true;
  return obs_;
}

Observation Environment::reset(std::shared_ptr<const Scene> scene, Rng& rng) {
  if (!scene) throw std::invalid_argument("Environment: null scene");
  const Volume& v = scene->volume;
  const Vec3 ext = v.extent();
  std::uniform_real_distribution<double> ux(cfg_.init_x_min, cfg_.init_x_max);
  std::uniform_real_distribution<double> uy(cfg_.init_y_min, cfg_.init_y_max);
  std::uniform_real_distribution<double> uyaw(0.0, 360.0);
  for (int attempt = 0; attempt < 100; ++attempt) {
    const double x = v.origin().x() + ux(rng) * ext.x();
    const double y = v.origin().y() + uy(rng) * ext.y();
    const double yaw = uyaw(rng);
    const int i = static_cast<int>(std::lround((x - v.origin().x()) / v.spacing()));
    const int j = static_cast<int>(std::lround((y - v.origin().y()) / v.spacing()));
    if (!scene->surface.valid(i, j)) continue;
    Pose start;
    start.position = Vec3(x, y, 0.0);
    start.orientation = probe_down_orientation(yaw);
    return begin(std::move(scene), start);
  }
  throw std::runtime_error("Environment::reset: no valid surface point after 100 attempts");
}

Observation Environment::reset_at(std::shared_ptr<const Scene> scene, const Pose& start) {
  start.validate(1e-6);
  return begin(std::move(scene), start);
}

ActionPreview Environment::preview(Action a) const {
  if (!active_) throw std::logic_error("Environment: no active episode");
  const Pose candidate = apply_action(pose_, a, steps_);
  ActionPreview out;
  out.pose.position = candidate.position;
  try {
    out.pose.position.z() = scene_->surface.lookup(candidate.position.x(), candidate.position.y());
  } catch (const OutOfFootprint&) {
    out.out_of_footprint = true;
  }
  if (tilt_angle(candidate) > cfg_.tilt_limit_deg) {
    out.tilt_violation = true;
    out.pose.orientation = pose_.orientation;
  } else {
    out.pose.orientation = candidate.orientation;
  }
  const Pose& g = scene_->goal;
  out.improvement = pose_improvement(distance_to_goal(), pos_distance(out.pose.position, g.position),
                                     angle_to_goal(), quat_angle(out.pose.orientation, g.orientation), steps_);
  return out;
}

StepOutcome Environment::step(Action a) {
  if (!active_) throw std::logic_error("Environment::step called without an active episode");
  const ActionPreview pv = preview(a);
  pose_ = pv.pose;
  ++t_;

  auto frame = std::make_shared<const UsImage>(render(pose_));
  const bool out_of_volume = pv.out_of_footprint || image_out_of_volume(*frame);
  obs_.frames.erase(obs_.frames.begin());
  obs_.frames.push_back(frame);

  StepInfo info;
  info.t = t_;
  info.d_mm = distance_to_goal();
  info.theta_deg = angle_to_goal();
  info.beta_deg = tilt_angle(pose_);
  info.tilt_violation = pv.tilt_violation;
  info.delta_d = pv.improvement.delta_d;
  info.delta_theta = pv.improvement.delta_theta;
  const double c_next = frame_confidence(*frame);
  info.c_roi = c_next;
  info.delta_c = confidence_improvement(c_, c_next);
  c_ = c_next;

  const bool goal = check_goal(info.d_mm, info.theta_deg, cfg_.goal_distance_mm, cfg_.goal_angle_deg);
  RewardInputs rin{out_of_volume, pv.tilt_violation, goal, info.delta_d, info.delta_theta, info.delta_c};

  StepOutcome out;
  out.reward = compute_reward(rin, cfg_.confidence_in_reward);
  steps_ = update_step_scheduler(*buffer_, pose_, steps_);
  info.steps = steps_;
  info.reason = check_termination({mode_, out_of_volume, goal, steps_.exhausted(), t_, cfg_.max_steps});
  out.done = info.reason != TerminationReason::kNone;
  if (out.done) active_ = false;
  out.info = info;
  out.observation = obs_;
  return out;
}

}  // namespace sononav
