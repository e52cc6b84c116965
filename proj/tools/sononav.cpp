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

// Command-line front end: phantom, train, eval, confmap, correlation,
// dump-config.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>

#include "sononav/agent.hpp"
#include "sononav/confidence.hpp"
#include "sononav/evaluation.hpp"
#include "sononav/phantom.hpp"
#include "sononav/run_config.hpp"

namespace fs = std::filesystem;
using namespace sononav;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitArgs = 2;
constexpr int kExitIo = 3;
constexpr int kExitNumeric = 4;

struct NumericFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Options {
  std::string config;
  int workers = 1;

  std::string out;
  std::optional<uint64_t> seed;
  std::optional<double> spacing;

  std::string data_dir;
  std::string out_dir;
  bool with_confidence = false;
  bool no_confidence = false;
  std::optional<long long> scale_to;
  std::optional<long long> checkpoint_every;

  std::string checkpoint;
  std::string policy;
  std::optional<int> episodes_per_volume;
  std::string traj_out;
  std::string report;
  std::string report_json;

  std::string image;
  std::string volume;
  std::string pose;
  std::optional<int> roi_height;
  std::optional<int> roi_width;
  std::optional<double> beta;

  std::string log;
  int bins = 10;
};

RunConfig load_config(const Options& o) {
  RunConfig c = o.config.empty() ? RunConfig{} : RunConfig::load(o.config);
  return c;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::ios_base::failure("cannot write '" + path.string() + "'");
  out << text;
  if (!out) throw std::ios_base::failure("write failed for '" + path.string() + "'");
}

std::string fmt_pose(const Pose& p) {
  std::ostringstream s;
  s << std::setprecision(6) << "position_mm=[" << p.position.x() << ", " << p.position.y() << ", " << p.position.z()
    << "] quaternion_xyzw=[" << p.orientation.x() << ", " << p.orientation.y() << ", " << p.orientation.z() << ", "
    << p.orientation.w() << "]";
  return s.str();
}

int cmd_phantom(const Options& o) {
  RunConfig c = load_config(o);
  if (o.seed) c.phantom.seed = *o.seed;
  if (o.spacing) c.phantom.spacing_mm = *o.spacing;
  try {
    c.phantom.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  const Phantom p = generate_phantom(c.phantom);
  const fs::path out = o.out;
  save_volume(p.volume, out);
  save_pose(p.goal, goal_sidecar_path(out));
  const auto d = p.volume.dims();
  std::cout << "volume " << out.string() << " dims " << d[0] << " " << d[1] << " " << d[2] << " spacing_mm "
            << p.volume.spacing() << "\n";
  std::cout << "goal " << goal_sidecar_path(out).string() << " " << fmt_pose(p.goal) << "\n";
  return kExitOk;
}

int cmd_train(const Options& o) {
  RunConfig c = load_config(o);
  if (o.seed) c.train.seed = *o.seed;
  if (o.with_confidence) c.env.confidence_in_reward = true;
  if (o.no_confidence) c.env.confidence_in_reward = false;
  if (o.scale_to) c.train = c.train.scaled_to(*o.scale_to);
  if (o.checkpoint_every) c.train.checkpoint_every = *o.checkpoint_every;
  c.validate();
  const auto dataset = load_dataset(o.data_dir);

  const fs::path dir = o.out_dir;
  fs::create_directories(dir);
  write_text(dir / "config.json", c.to_json());
  std::ofstream log(dir / "train_log.jsonl", std::ios::binary);
  if (!log) throw std::ios_base::failure("cannot write '" + (dir / "train_log.jsonl").string() + "'");

  fs::path last_good;
  TrainHooks hooks;
  hooks.on_record = [&](const TrainRecord& r) {
    log << r.to_json() << "\n";
    log.flush();
    if (!log) throw std::ios_base::failure("write failed for the training log");
  };
  hooks.on_checkpoint = [&](const QNetwork& q, long long step) {
    std::ostringstream name;
    name << "checkpoint_" << std::setw(7) << std::setfill('0') << step << ".snq";
    save_checkpoint(q, dir / name.str());
    last_good = dir / name.str();
  };
  try {
    const TrainResult res = train(dataset, c.env, c.train, hooks, o.workers);
    const fs::path final_path = dir / "final.snq";
    save_checkpoint(res.q, final_path);
    std::cout << "trained " << res.interaction_steps << " interaction steps, " << res.training_steps
              << " training steps, " << res.episodes << " episodes\n";
    std::cout << "checkpoint " << final_path.string() << "\n";
  } catch (const TrainingDiverged& e) {
    std::ostringstream msg;
    msg << e.what() << "; last good checkpoint: " << (last_good.empty() ? std::string("none") : last_good.string());
    throw NumericFailure(msg.str());
  }
  return kExitOk;
}

int cmd_eval(const Options& o) {
  RunConfig c = load_config(o);
  if (o.seed) c.eval.seed = *o.seed;
  if (o.episodes_per_volume) c.eval.episodes_per_volume = *o.episodes_per_volume;
  c.eval.workers = o.workers;
  c.eval.record_trajectories = !o.traj_out.empty();
  c.validate();
  if (o.checkpoint.empty() == o.policy.empty()) throw ConfigError("eval needs exactly one of --checkpoint or --policy");

  PolicyFactory factory;
  if (!o.checkpoint.empty()) {
    NetworkSpec expected = c.train.network;
    expected.in_channels = c.env.frames;
    expected.height = c.env.image_height;
    expected.width = c.env.image_width;
    const QNetwork q = load_checkpoint(o.checkpoint, expected);
    factory = [q] { return std::make_unique<GreedyPolicy>(q); };
  } else if (o.policy == "expert") {
    factory = [] { return std::make_unique<ExpertPolicy>(); };
  } else if (o.policy == "random") {
    const uint64_t seed = c.eval.seed;
    factory = [seed] { return random_policy(seed); };
  } else {
    throw ConfigError("--policy must be 'expert' or 'random'");
  }

  const auto dataset = load_dataset(o.data_dir);
  const EvalReport rep = evaluate(factory, dataset, c.env, c.eval);
  const std::string csv = rep.to_csv();
  if (o.report.empty()) {
    std::cout << csv;
  } else {
    write_text(o.report, csv);
  }
  if (!o.report_json.empty()) write_text(o.report_json, rep.to_json());
  if (!o.traj_out.empty()) {
    fs::create_directories(o.traj_out);
    for (const auto& row : rep.rows) {
      std::ostringstream name;
      name << "episode_" << std::setw(4) << std::setfill('0') << row.episode << ".jsonl";
      write_trajectory(row.trajectory, fs::path(o.traj_out) / name.str());
    }
  }
  std::cerr << "success_rate " << rep.success_rate() << " final_d_mm " << rep.final_d().mean << " final_theta_deg "
            << rep.final_theta().mean << "\n";
  return kExitOk;
}

int cmd_confmap(const Options& o) {
  RunConfig c = load_config(o);
  if (o.beta) c.env.confidence.beta = *o.beta;
  c.env.confidence.validate();
  UsImage img;
  if (!o.image.empty()) {
    if (!o.volume.empty() || !o.pose.empty()) throw ConfigError("use either --image or --volume with --pose");
    img = load_pgm(o.image);
  } else {
    if (o.volume.empty() || o.pose.empty()) throw ConfigError("confmap needs --image, or --volume and --pose");
    const Volume v = load_volume(o.volume);
    img = sample_slice(v, load_pose(o.pose), c.env.image_height, c.env.image_width, c.env.pixel_spacing_mm);
  }
  const int rh = o.roi_height.value_or(std::min(c.env.roi_height, img.height));
  const int rw = o.roi_width.value_or(std::min(c.env.roi_width, img.width));
  if (rh < 1 || rw < 1 || rh > img.height || rw > img.width) {
    std::ostringstream msg;
    msg << "ROI " << rh << "x" << rw << " does not fit the " << img.height << "x" << img.width << " image";
    throw ConfigError(msg.str());
  }
  ConfidenceMap map;
  try {
    map = compute_confidence_map(img, c.env.confidence);
  } catch (const SolverError& e) {
    std::ostringstream msg;
    msg << e.what() << " (residual " << e.residual() << " after " << e.iterations() << " iterations)";
    throw NumericFailure(msg.str());
  }
  save_pgm(confidence_to_image(map), o.out);
  std::cout << std::fixed << std::setprecision(4) << "c_roi " << roi_confidence(map, RoiRect::centered(img.height, img.width, rh, rw))
            << "\n";
  return kExitOk;
}

int cmd_correlation(const Options& o) {
  const auto log = read_training_log(o.log);
  const CorrelationStudy s = correlation_study(log, o.bins);
  std::cout << s.to_csv();
  return kExitOk;
}

int cmd_dump_config(const Options& o) {
  RunConfig c = load_config(o);
  c.validate();
  std::cout << c.to_json();
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Ultrasound probe navigation: phantoms, training, evaluation"};
  app.require_subcommand(1);
  Options o;
  const std::string defaults = "Configuration keys and defaults ([method] = value of the reference method):\n" +
                               config_reference();
  app.footer(defaults);
  app.add_option("--config", o.config, "JSON run configuration")->envname("SONONAV_CONFIG");
  app.add_option("--workers", o.workers, "parallel environments; 1 gives the reproducible order")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();

  auto* phantom = app.add_subcommand("phantom", "generate a phantom volume and its goal pose");
  phantom->add_option("--out", o.out, "volume path (.usv); the goal goes to <stem>.goal.json")->required();
  phantom->add_option("--seed", o.seed, "speckle seed (phantom.seed)");
  phantom->add_option("--spacing", o.spacing, "voxel spacing in mm (phantom.spacing_mm=0.5)");

  auto* train_cmd = app.add_subcommand("train", "pretrain on demonstrations, then train the Q-network");
  train_cmd->add_option("--data-dir", o.data_dir, "directory of .usv volumes with goal sidecars")->required();
  train_cmd->add_option("--out-dir", o.out_dir, "checkpoints, log and effective config")->required();
  auto* with = train_cmd->add_flag("--with-confidence", o.with_confidence, "reward includes the ROI confidence change");
  auto* without = train_cmd->add_flag("--no-confidence", o.no_confidence, "reward from pose improvement only (default)");
  with->excludes(without);
  train_cmd->add_option("--seed", o.seed, "training seed (train.seed=0)");
  train_cmd->add_option("--scale-to", o.scale_to,
                        "run N interaction steps, shrinking exploration, learning-rate and target-sync schedules "
                        "from the 1.6M-step reference in proportion")
      ->check(CLI::PositiveNumber);
  train_cmd->add_option("--checkpoint-every", o.checkpoint_every, "training steps between checkpoints (0 = final only)")
      ->check(CLI::NonNegativeNumber);

  auto* eval_cmd = app.add_subcommand("eval", "run evaluation episodes and report the metrics");
  eval_cmd->add_option("--checkpoint", o.checkpoint, "trained network");
  eval_cmd->add_option("--policy", o.policy, "built-in policy: expert or random")
      ->check(CLI::IsMember({"expert", "random"}));
  eval_cmd->add_option("--data-dir", o.data_dir, "directory of .usv volumes with goal sidecars")->required();
  eval_cmd->add_option("--episodes-per-volume", o.episodes_per_volume, "episodes per volume (eval.episodes_per_volume=3)")
      ->check(CLI::PositiveNumber);
  eval_cmd->add_option("--seed", o.seed, "start-pose seed (eval.seed=0)");
  eval_cmd->add_option("--traj-out", o.traj_out, "directory for one trajectory file per episode");
  eval_cmd->add_option("--report", o.report, "CSV report path (default: stdout)");
  eval_cmd->add_option("--report-json", o.report_json, "JSON report path");

  auto* conf = app.add_subcommand("confmap", "confidence map of an image or of a volume slice");
  conf->add_option("--image", o.image, "input PGM image");
  conf->add_option("--volume", o.volume, "input .usv volume");
  conf->add_option("--pose", o.pose, "probe pose JSON (same format as goal sidecars)");
  conf->add_option("--out", o.out, "output PGM")->required();
  conf->add_option("--roi-height", o.roi_height, "ROI rows (env.roi_height=110)");
  conf->add_option("--roi-width", o.roi_width, "ROI columns (env.roi_width=90)");
  conf->add_option("--beta", o.beta, "intensity sensitivity (confidence.beta=90)");

  auto* corr = app.add_subcommand("correlation", "bin a training log: mean confidence change vs pose improvement");
  corr->add_option("--log", o.log, "train_log.jsonl")->required();
  corr->add_option("--bins", o.bins, "number of bins")->check(CLI::PositiveNumber)->capture_default_str();

  auto* dump = app.add_subcommand("dump-config", "print the effective configuration");

  for (auto* sub : {phantom, train_cmd, eval_cmd, conf, corr, dump}) sub->footer(defaults);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitArgs;
  }

  try {
    if (*phantom) return cmd_phantom(o);
    if (*train_cmd) return cmd_train(o);
    if (*eval_cmd) return cmd_eval(o);
    if (*conf) return cmd_confmap(o);
    if (*corr) return cmd_correlation(o);
    if (*dump) return cmd_dump_config(o);
  } catch (const NumericFailure& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const SolverError& e) {
    std::cerr << "error: " << e.what() << " (residual " << e.residual() << ")\n";
    return kExitNumeric;
  } catch (const TrainingDiverged& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const std::ios_base::failure& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitIo;
  } catch (const VolumeFormatError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitIo;
  } catch (const CheckpointError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitIo;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitIo;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitArgs;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return kExitArgs;
}
