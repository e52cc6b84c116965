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

#include "sononav/run_config.hpp"

#include <algorithm>
#include <fstream>
#include <functional>
#include <sstream>
#include <type_traits>

#include <json.hpp>

namespace sononav {

namespace {

using nlohmann::ordered_json;

template <typename V>
V read_value(const ordered_json& j, const std::string& key) {
  auto bad = [&](const char* want) { return ConfigError("config key '" + key + "' must be " + want); };
  if constexpr (std::is_same_v<V, bool>) {
    if (!j.is_boolean()) throw bad("a boolean");
    return j.get<bool>();
  } else if constexpr (std::is_integral_v<V>) {
    if (!j.is_number_integer()) throw bad("an integer");
    if constexpr (std::is_unsigned_v<V>) {
      if (j.is_number_unsigned()) return j.get<V>();
      if (j.get<long long>() < 0) throw bad("a non-negative integer");
    }
    return j.get<V>();
  } else if constexpr (std::is_floating_point_v<V>) {
    if (!j.is_number()) throw bad("a number");
    return j.get<V>();
  } else if constexpr (std::is_same_v<V, Vec3>) {
    if (!j.is_array() || j.size() != 3) throw bad("an array of 3 numbers");
    Vec3 v;
    for (int i = 0; i < 3; ++i) v[i] = read_value<double>(j[static_cast<std::size_t>(i)], key);
    return v;
  } else {
    static_assert(std::is_same_v<V, std::string>);
    if (!j.is_string()) throw bad("a string");
    return j.get<std::string>();
  }
}

template <typename V>
ordered_json write_value(const V& v) {
  if constexpr (std::is_same_v<V, Vec3>) {
    return ordered_json::array({v.x(), v.y(), v.z()});
  } else {
    return ordered_json(v);
  }
}

template <typename S>
struct Field {
  std::string key;
  std::string doc;
  bool method = false;
  std::function<ordered_json(const S&)> get;
  std::function<void(S&, const ordered_json&)> set;
};

template <typename S, typename V>
Field<S> member(V S::*m, std::string key, std::string doc, bool method = false) {
  Field<S> f;
  f.key = key;
  f.doc = std::move(doc);
  f.method = method;
  f.get = [m](const S& s) { return write_value(s.*m); };
  f.set = [m, key](S& s, const ordered_json& j) { s.*m = read_value<V>(j, key); };
  return f;
}

std::string solver_name(ConfidenceSolver s) { return s == ConfidenceSolver::kDirect ? "direct" : "cg"; }

ConfidenceSolver solver_from_name(const std::string& s) {
  if (s == "direct") return ConfidenceSolver::kDirect;
  if (s == "cg") return ConfidenceSolver::kConjugateGradient;
  throw ConfigError("confidence.solver must be 'direct' or 'cg', got '" + s + "'");
}

const std::vector<Field<EnvConfig>>& env_fields() {
  static const std::vector<Field<EnvConfig>> f = {
      member(&EnvConfig::image_height, "image_height", "image rows (pixels)", true),
      member(&EnvConfig::image_width, "image_width", "image columns (pixels)", true),
      member(&EnvConfig::pixel_spacing_mm, "pixel_spacing_mm", "image pixel spacing", true),
      member(&EnvConfig::frames, "frames", "stacked frames per observation", true),
      member(&EnvConfig::roi_height, "roi_height", "ROI rows, centered", true),
      member(&EnvConfig::roi_width, "roi_width", "ROI columns, centered", true),
      member(&EnvConfig::tilt_limit_deg, "tilt_limit_deg", "maximum probe tilt", true),
      member(&EnvConfig::out_of_volume_fraction, "out_of_volume_fraction",
             "episode ends below this nonzero-pixel fraction", true),
      member(&EnvConfig::goal_distance_mm, "goal_distance_mm", "goal tolerance, distance", true),
      member(&EnvConfig::goal_angle_deg, "goal_angle_deg", "goal tolerance, angle", true),
      member(&EnvConfig::success_distance_mm, "success_distance_mm", "evaluation success, distance", true),
      member(&EnvConfig::success_angle_deg, "success_angle_deg", "evaluation success, angle", true),
      member(&EnvConfig::max_steps, "max_steps", "steps per episode", true),
      member(&EnvConfig::pose_buffer_length, "pose_buffer_length", "recent poses kept for convergence", true),
      member(&EnvConfig::convergence_threshold, "convergence_threshold", "normalized pose distance", true),
      member(&EnvConfig::convergence_pairs, "convergence_pairs", "close pairs that shrink the step size", true),
      member(&EnvConfig::initial_step_level, "initial_step_level", "initial step, mm and degrees", true),
      member(&EnvConfig::confidence_in_reward, "confidence_in_reward", "add the ROI confidence change to the reward"),
      member(&EnvConfig::always_compute_confidence, "always_compute_confidence",
             "compute confidence even when it is not rewarded"),
      member(&EnvConfig::init_x_min, "init_x_min", "start region, fraction of volume x"),
      member(&EnvConfig::init_x_max, "init_x_max", "start region, fraction of volume x"),
      member(&EnvConfig::init_y_min, "init_y_min", "start region, fraction of volume y"),
      member(&EnvConfig::init_y_max, "init_y_max", "start region, fraction of volume y"),
  };
  return f;
}

const std::vector<Field<ConfidenceParams>>& confidence_fields() {
  static const std::vector<Field<ConfidenceParams>> f = [] {
    std::vector<Field<ConfidenceParams>> v = {
        member(&ConfidenceParams::alpha, "alpha", "depth attenuation exponent", true),
        member(&ConfidenceParams::beta, "beta", "intensity-difference sensitivity", true),
        member(&ConfidenceParams::gamma, "gamma", "horizontal edge penalty", true),
    };
    Field<ConfidenceParams> solver;
    solver.key = "solver";
    solver.doc = "direct or cg";
    solver.get = [](const ConfidenceParams& p) { return ordered_json(solver_name(p.solver)); };
    solver.set = [](ConfidenceParams& p, const ordered_json& j) {
      p.solver = solver_from_name(read_value<std::string>(j, "confidence.solver"));
    };
    v.push_back(solver);
    v.push_back(member(&ConfidenceParams::tolerance, "tolerance", "CG relative residual"));
    v.push_back(member(&ConfidenceParams::max_iterations, "max_iterations", "CG iteration cap"));
    v.push_back(member(&ConfidenceParams::downsample, "downsample", "solve on a grid this many times coarser"));
    return v;
  }();
  return f;
}

const std::vector<Field<TrainConfig>>& train_fields() {
  static const std::vector<Field<TrainConfig>> f = [] {
    std::vector<Field<TrainConfig>> v;
    v.push_back(member(&TrainConfig::gamma, "gamma", "discount factor", true));
    auto eps = [](std::string key, std::string doc, auto m) {
      Field<TrainConfig> x;
      x.key = key;
      x.doc = std::move(doc);
      x.method = true;
      x.get = [m](const TrainConfig& c) { return ordered_json(c.epsilon.*m); };
      x.set = [m, key](TrainConfig& c, const ordered_json& j) {
        c.epsilon.*m = read_value<std::remove_reference_t<decltype(c.epsilon.*m)>>(j, "train." + key);
      };
      return x;
    };
    v.push_back(eps("epsilon_start", "exploration rate at step 0", &EpsilonSchedule::start));
    v.push_back(eps("epsilon_end", "exploration rate after the horizon", &EpsilonSchedule::end));
    v.push_back(eps("epsilon_horizon", "interaction steps of linear decay", &EpsilonSchedule::horizon));
    v.push_back(member(&TrainConfig::batch_size, "batch_size", "transitions per update", true));
    v.push_back(member(&TrainConfig::train_every, "train_every", "interaction steps per update", true));
    v.push_back(member(&TrainConfig::target_sync, "target_sync", "training steps between target syncs", true));
    Field<TrainConfig> lb;
    lb.key = "lr_boundaries";
    lb.doc = "training steps where the learning rate drops";
    lb.method = true;
    lb.get = [](const TrainConfig& c) { return ordered_json(c.lr.boundaries); };
    lb.set = [](TrainConfig& c, const ordered_json& j) {
      if (!j.is_array()) throw ConfigError("config key 'train.lr_boundaries' must be an array");
      c.lr.boundaries.clear();
      for (const auto& e : j) c.lr.boundaries.push_back(read_value<long long>(e, "train.lr_boundaries"));
    };
    v.push_back(lb);
    Field<TrainConfig> lv;
    lv.key = "lr_values";
    lv.doc = "learning rate per interval";
    lv.method = true;
    lv.get = [](const TrainConfig& c) { return ordered_json(c.lr.values); };
    lv.set = [](TrainConfig& c, const ordered_json& j) {
      if (!j.is_array()) throw ConfigError("config key 'train.lr_values' must be an array");
      c.lr.values.clear();
      for (const auto& e : j) c.lr.values.push_back(read_value<double>(e, "train.lr_values"));
    };
    v.push_back(lv);
    v.push_back(member(&TrainConfig::huber_delta, "huber_delta", "Huber loss threshold"));
    v.push_back(member(&TrainConfig::pretrain_demos, "pretrain_demos", "expert transitions generated", true));
    v.push_back(member(&TrainConfig::pretrain_updates, "pretrain_updates", "updates on demonstrations"));
    v.push_back(member(&TrainConfig::pretrain_lr, "pretrain_lr", "learning rate for pretraining"));
    v.push_back(member(&TrainConfig::demo_epsilon, "demo_epsilon", "random-action rate of the demonstrator"));
    v.push_back(member(&TrainConfig::demo_seed, "demo_seed", "demonstrations copied into replay", true));
    v.push_back(member(&TrainConfig::replay_capacity, "replay_capacity", "replay memory size", true));
    v.push_back(member(&TrainConfig::interaction_steps, "interaction_steps", "environment steps of training", true));
    v.push_back(member(&TrainConfig::checkpoint_every, "checkpoint_every", "training steps between checkpoints"));
    v.push_back(member(&TrainConfig::seed, "seed", "random seed"));
    Field<TrainConfig> net;
    net.key = "network";
    net.doc = "network descriptor";
    net.get = [](const TrainConfig& c) { return ordered_json::parse(c.network.to_json()); };
    net.set = [](TrainConfig& c, const ordered_json& j) {
      if (!j.is_object()) throw ConfigError("config key 'train.network' must be an object");
      try {
        c.network = NetworkSpec::from_json(j.dump());
      } catch (const std::exception& e) {
        throw ConfigError(std::string("train.network: ") + e.what());
      }
    };
    v.push_back(net);
    return v;
  }();
  return f;
}

const std::vector<Field<PhantomSpec>>& phantom_fields() {
  static const std::vector<Field<PhantomSpec>> f = {
      member(&PhantomSpec::size_mm, "size_mm", "volume extent x, y, z"),
      member(&PhantomSpec::spacing_mm, "spacing_mm", "voxel spacing", true),
      member(&PhantomSpec::body_half_axes_mm, "body_half_axes_mm", "body half-ellipsoid"),
      member(&PhantomSpec::tissue_intensity, "tissue_intensity", "soft tissue echo"),
      member(&PhantomSpec::skin_intensity, "skin_intensity", "skin echo"),
      member(&PhantomSpec::skin_thickness_mm, "skin_thickness_mm", "skin layer"),
      member(&PhantomSpec::fascia_depth_mm, "fascia_depth_mm", "fascia band depth"),
      member(&PhantomSpec::fascia_intensity, "fascia_intensity", "fascia echo"),
      member(&PhantomSpec::fiber_period_mm, "fiber_period_mm", "muscle texture period"),
      member(&PhantomSpec::fiber_contrast, "fiber_contrast", "muscle texture contrast"),
      member(&PhantomSpec::ridge_count, "ridge_count", "vertebral levels"),
      member(&PhantomSpec::ridge_pitch_mm, "ridge_pitch_mm", "level spacing along y"),
      member(&PhantomSpec::lamina_depth_mm, "lamina_depth_mm", "middle lamina depth"),
      member(&PhantomSpec::lamina_depth_step_mm, "lamina_depth_step_mm", "lamina depth change per level"),
      member(&PhantomSpec::lamina_offset_mm, "lamina_offset_mm", "lamina distance from midline"),
      member(&PhantomSpec::lamina_half_axes_mm, "lamina_half_axes_mm", "lamina ellipsoid"),
      member(&PhantomSpec::contralateral_extra_depth_mm, "contralateral_extra_depth_mm", "extra depth, far lamina"),
      member(&PhantomSpec::spinous_depth_mm, "spinous_depth_mm", "spinous process depth"),
      member(&PhantomSpec::spinous_half_axes_mm, "spinous_half_axes_mm", "spinous process ellipsoid"),
      member(&PhantomSpec::ridge_intensity, "ridge_intensity", "bone echo"),
      member(&PhantomSpec::speckle_variance, "speckle_variance", "multiplicative speckle variance"),
      member(&PhantomSpec::blur_sigma_mm, "blur_sigma_mm", "point-spread blur"),
      member(&PhantomSpec::attenuation_per_mm, "attenuation_per_mm", "exponential depth attenuation"),
      member(&PhantomSpec::shadow_strength, "shadow_strength", "echo loss below bone"),
      member(&PhantomSpec::goal_tilt_deg, "goal_tilt_deg", "medial tilt of the goal plane"),
      member(&PhantomSpec::seed, "seed", "speckle seed"),
  };
  return f;
}

const std::vector<Field<EvalConfig>>& eval_fields() {
  static const std::vector<Field<EvalConfig>> f = {
      member(&EvalConfig::episodes_per_volume, "episodes_per_volume", "navigation tests per volume", true),
      member(&EvalConfig::seed, "seed", "start-pose seed"),
  };
  return f;
}

template <typename S>
ordered_json dump_section(const std::vector<Field<S>>& fields, const S& s) {
  ordered_json out = ordered_json::object();
  for (const auto& f : fields) out[f.key] = f.get(s);
  return out;
}

template <typename S>
void load_section(const std::vector<Field<S>>& fields, S& s, const ordered_json& j, const std::string& name) {
  if (!j.is_object()) throw ConfigError("config section '" + name + "' must be an object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    const Field<S>* match = nullptr;
    for (const auto& f : fields) {
      if (f.key == it.key()) match = &f;
    }
    if (!match) throw ConfigError("unknown config key '" + name + "." + it.key() + "'");
    match->set(s, it.value());
  }
}

template <typename S>
void describe(std::ostringstream& out, const std::vector<Field<S>>& fields, const S& defaults, const std::string& name) {
  for (const auto& f : fields) {
    out << "  " << name << "." << f.key << "=" << f.get(defaults).dump() << (f.method ? "  [method]" : "") << "  "
        << f.doc << "\n";
  }
}

}  // namespace

std::string RunConfig::to_json() const {
  ordered_json j;
  j["env"] = dump_section(env_fields(), env);
  j["confidence"] = dump_section(confidence_fields(), env.confidence);
  j["train"] = dump_section(train_fields(), train);
  j["phantom"] = dump_section(phantom_fields(), phantom);
  j["eval"] = dump_section(eval_fields(), eval);
  return j.dump(2) + "\n";
}

RunConfig RunConfig::from_json(const std::string& text) {
  ordered_json j;
  try {
    j = ordered_json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  RunConfig c;
  for (auto it = j.begin(); it != j.end(); ++it) {
    const std::string& k = it.key();
    if (k == "env") {
      load_section(env_fields(), c.env, it.value(), k);
    } else if (k == "confidence") {
      load_section(confidence_fields(), c.env.confidence, it.value(), k);
    } else if (k == "train") {
      load_section(train_fields(), c.train, it.value(), k);
    } else if (k == "phantom") {
      load_section(phantom_fields(), c.phantom, it.value(), k);
    } else if (k == "eval") {
      load_section(eval_fields(), c.eval, it.value(), k);
    } else {
      throw ConfigError("unknown config section '" + k + "'");
    }
  }
  return c;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::ios_base::failure("cannot open config '" + path.string() + "'");
  std::ostringstream s;
  s << in.rdbuf();
  return from_json(s.str());
}

void RunConfig::validate() const {
  try {
    env.validate();
    train.validate();
    phantom.validate();
  } catch (const ConfigError&) {
    throw;
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  if (eval.episodes_per_volume < 1) throw ConfigError("eval.episodes_per_volume must be >= 1");
}

std::filesystem::path goal_sidecar_path(const std::filesystem::path& volume_path) {
  std::filesystem::path p = volume_path;
  p.replace_extension(".goal.json");
  return p;
}

std::vector<std::shared_ptr<const Scene>> load_dataset(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw std::ios_base::failure("data dir '" + dir.string() + "' not found");
  std::vector<std::filesystem::path> volumes;
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".usv") volumes.push_back(e.path());
  }
  std::sort(volumes.begin(), volumes.end());
  if (volumes.empty()) throw std::ios_base::failure("data dir '" + dir.string() + "' holds no .usv volumes");
  std::vector<std::shared_ptr<const Scene>> out;
  for (const auto& v : volumes) {
    const auto goal = goal_sidecar_path(v);
    if (!std::filesystem::exists(goal)) throw std::ios_base::failure("missing goal sidecar '" + goal.string() + "'");
    out.push_back(make_scene(load_volume(v), load_pose(goal)));
  }
  return out;
}

std::string config_reference() {
  const RunConfig d;
  std::ostringstream out;
  describe(out, env_fields(), d.env, "env");
  describe(out, confidence_fields(), d.env.confidence, "confidence");
  describe(out, train_fields(), d.train, "train");
  describe(out, phantom_fields(), d.phantom, "phantom");
  describe(out, eval_fields(), d.eval, "eval");
  return out.str();
}

}  // namespace sononav
