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

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "sononav/confidence.hpp"
#include "sononav/evaluation.hpp"
#include "sononav/run_config.hpp"

namespace fs = std::filesystem;
using namespace sononav;

namespace {

fs::path scratch() {
  static const fs::path dir = [] {
    fs::path d = fs::temp_directory_path() / "sononav_test_cli";
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

int run(const std::string& args, std::string* output = nullptr, const std::string& env = "") {
  const fs::path log = scratch() / "out.txt";
  const std::string cmd = env + " \"" + std::string(SONONAV_CLI) + "\" " + args + " > \"" + log.string() + "\" 2>&1";
  const int status = std::system(cmd.c_str());
  if (output) {
    std::ifstream in(log);
    std::ostringstream s;
    s << in.rdbuf();
    *output = s.str();
  }
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

const fs::path& data_dir() {
  static const fs::path dir = [] {
    const fs::path d = scratch() / "data";
    fs::create_directories(d);
    REQUIRE(run("phantom --spacing 1.0 --seed 4 --out \"" + (d / "a.usv").string() + "\"") == 0);
    return d;
  }();
  return dir;
}

}  // namespace

TEST_CASE("run config: defaults, round trip, unknown keys") {
  const RunConfig d;
  const RunConfig back = RunConfig::from_json(d.to_json());
  CHECK(back.to_json() == d.to_json());

  RunConfig c = RunConfig::from_json(R"({"train": {"gamma": 0.5, "lr_values": [0.1, 0.01, 0.001, 0.0001]},
                                         "confidence": {"solver": "cg", "beta": 30}})");
  CHECK(c.train.gamma == 0.5);
  CHECK(c.train.lr.values[0] == 0.1);
  CHECK(c.env.confidence.solver == ConfidenceSolver::kConjugateGradient);
  CHECK(c.env.confidence.beta == 30.0);
  CHECK(c.env.max_steps == 120);
  CHECK(RunConfig::from_json(c.to_json()).to_json() == c.to_json());

  CHECK_THROWS_AS(RunConfig::from_json(R"({"env": {"max_step": 3}})"), ConfigError);
  CHECK_THROWS_AS(RunConfig::from_json(R"({"agent": {}})"), ConfigError);
  CHECK_THROWS_AS(RunConfig::from_json(R"({"env": {"max_steps": 1.5}})"), ConfigError);
  CHECK_THROWS_AS(RunConfig::from_json(R"({"confidence": {"solver": "lu"}})"), ConfigError);
  CHECK_THROWS_AS(RunConfig::from_json("{"), ConfigError);
  CHECK_THROWS_AS(RunConfig::from_json(R"({"train": {"network": {"depth": 3}}})"), ConfigError);

  RunConfig bad;
  bad.train.gamma = 2.0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);

  const std::string ref = config_reference();
  CHECK(ref.find("train.gamma=0.9") != std::string::npos);
  CHECK(ref.find("train.batch_size=32") != std::string::npos);
  CHECK(ref.find("env.max_steps=120") != std::string::npos);
}

TEST_CASE("cli: help and argument errors") {
  std::string out;
  CHECK(run("train --help", &out) == 0);
  CHECK(out.find("train.gamma=0.9") != std::string::npos);
  CHECK(out.find("env.max_steps=120") != std::string::npos);
  CHECK(run("", &out) == 2);
  CHECK(run("train --data-dir x", &out) == 2);
  CHECK(run("eval --data-dir x --policy greedy", &out) == 2);
  CHECK(run("train --with-confidence --no-confidence --data-dir a --out-dir b", &out) == 2);
}

TEST_CASE("cli: config file, environment variable and dump-config") {
  const fs::path cfg = scratch() / "cfg.json";
  std::ofstream(cfg) << R"({"env": {"max_steps": 77}})";
  const fs::path bad = scratch() / "bad.json";
  std::ofstream(bad) << R"({"env": {"max_stepz": 77}})";
  std::string out;
  REQUIRE(run("--config \"" + cfg.string() + "\" dump-config", &out) == 0);
  CHECK(RunConfig::from_json(out).env.max_steps == 77);
  // dump-config output loads back to the same settings.
  const fs::path dumped = scratch() / "dumped.json";
  std::ofstream(dumped) << out;
  std::string again;
  REQUIRE(run("--config \"" + dumped.string() + "\" dump-config", &again) == 0);
  CHECK(again == out);

  REQUIRE(run("dump-config", &out, "SONONAV_CONFIG=\"" + cfg.string() + "\"") == 0);
  CHECK(RunConfig::from_json(out).env.max_steps == 77);
  CHECK(run("--config \"" + cfg.string() + "\" dump-config", &out, "SONONAV_CONFIG=\"" + bad.string() + "\"") == 0);
  CHECK(run("dump-config", &out, "SONONAV_CONFIG=\"" + bad.string() + "\"") == 2);
  CHECK(out.find("max_stepz") != std::string::npos);
  CHECK(run("--config /nonexistent/cfg.json dump-config", &out) == 3);
}

TEST_CASE("cli: phantom is deterministic and loadable") {
  const fs::path a = scratch() / "p1.usv", b = scratch() / "p2.usv";
  std::string out;
  REQUIRE(run("phantom --spacing 1.0 --seed 9 --out \"" + a.string() + "\"", &out) == 0);
  CHECK(out.find("dims 121 161 91") != std::string::npos);
  REQUIRE(run("phantom --spacing 1.0 --seed 9 --out \"" + b.string() + "\"") == 0);
  CHECK(slurp(a) == slurp(b));
  CHECK(slurp(goal_sidecar_path(a)) == slurp(goal_sidecar_path(b)));
  CHECK(load_volume(a).dims() == std::array<int, 3>{121, 161, 91});
  CHECK(run("phantom --out /nonexistent/dir/p.usv") == 3);
  CHECK(run("phantom --spacing -1 --out \"" + a.string() + "\"") == 2);
}

TEST_CASE("cli: eval with built-in policies and trajectory export") {
  const std::string data = "--data-dir \"" + data_dir().string() + "\"";
  const fs::path traj = scratch() / "traj";
  const fs::path expert = scratch() / "expert.csv", random = scratch() / "random.csv";
  REQUIRE(run("eval --policy expert --episodes-per-volume 4 --seed 2 " + data + " --report \"" + expert.string() +
              "\" --traj-out \"" + traj.string() + "\"") == 0);
  REQUIRE(run("eval --policy random --episodes-per-volume 4 --seed 2 " + data + " --report \"" + random.string() + "\"") ==
          0);
  auto success = [](const fs::path& csv) {
    std::istringstream in(slurp(csv));
    std::string line;
    double rate = -1.0;
    while (std::getline(in, line)) {
      if (line.rfind("mean,", 0) == 0) {
        // success is the 7th column
        std::istringstream cells(line);
        std::string cell;
        for (int i = 0; i < 7; ++i) std::getline(cells, cell, ',');
        rate = std::stod(cell);
      }
    }
    return rate;
  };
  CHECK(success(expert) > success(random));
  int files = 0;
  for (const auto& e : fs::directory_iterator(traj)) {
    ++files;
    const auto records = read_trajectory(e.path());
    REQUIRE_FALSE(records.empty());
    CHECK(records.back().done);
  }
  CHECK(files == 4);
  CHECK(run("eval " + data) == 2);
  CHECK(run("eval --policy expert --checkpoint x.snq " + data) == 2);
  CHECK(run("eval --checkpoint /nonexistent.snq " + data) == 3);
  CHECK(run("eval --policy expert --data-dir /nonexistent") == 3);
}

TEST_CASE("cli: confmap") {
  UsImage flat(40, 30);
  std::fill(flat.pixels.begin(), flat.pixels.end(), 120);
  const fs::path img = scratch() / "flat.pgm", map1 = scratch() / "map1.pgm", map2 = scratch() / "map2.pgm";
  save_pgm(flat, img);
  std::string out;
  REQUIRE(run("confmap --image \"" + img.string() + "\" --out \"" + map1.string() + "\"", &out) == 0);
  CHECK(out.find("c_roi 0.") != std::string::npos);
  REQUIRE(run("confmap --image \"" + img.string() + "\" --out \"" + map2.string() + "\"") == 0);
  CHECK(slurp(map1) == slurp(map2));
  const UsImage m = load_pgm(map1);
  for (int c = 0; c < m.width; ++c) {
    CHECK(m.at(0, c) == 255);
    CHECK(m.at(m.height - 1, c) == 0);
  }
  CHECK(run("confmap --image \"" + img.string() + "\" --roi-height 50 --out \"" + map1.string() + "\"") == 2);
  CHECK(run("confmap --out \"" + map1.string() + "\"") == 2);

  const fs::path vol = data_dir() / "a.usv";
  REQUIRE(run("confmap --volume \"" + vol.string() + "\" --pose \"" + goal_sidecar_path(vol).string() + "\" --out \"" +
              map1.string() + "\"", &out) == 0);
  CHECK(load_pgm(map1).height == 150);
}

TEST_CASE("cli: training writes a log, checkpoints and a final network") {
  const fs::path cfg = scratch() / "tiny.json";
  std::ofstream(cfg) << R"({
    "env": {"image_height": 24, "image_width": 24, "pixel_spacing_mm": 3.125, "roi_height": 18, "roi_width": 14},
    "train": {"pretrain_demos": 60, "demo_seed": 40, "pretrain_updates": 4, "interaction_steps": 120,
              "batch_size": 8, "target_sync": 4, "checkpoint_every": 5,
              "network": {"conv": [{"out_channels": 4, "kernel": 3, "stride": 2}], "hidden": 8}}
  })";
  const fs::path out_dir = scratch() / "train";
  std::string out;
  REQUIRE(run("--config \"" + cfg.string() + "\" train --no-confidence --seed 1 --data-dir \"" + data_dir().string() +
              "\" --out-dir \"" + out_dir.string() + "\"", &out) == 0);
  CHECK(fs::exists(out_dir / "final.snq"));
  CHECK(fs::exists(out_dir / "checkpoint_0000010.snq"));
  const auto log = read_training_log(out_dir / "train_log.jsonl");
  REQUIRE_FALSE(log.empty());
  for (const auto& r : log) CHECK_FALSE(r.mean_delta_c.has_value());
  CHECK(RunConfig::load(out_dir / "config.json").env.confidence_in_reward == false);

  // The checkpoint drives a greedy evaluation with the same config.
  REQUIRE(run("--config \"" + cfg.string() + "\" eval --episodes-per-volume 1 --checkpoint \"" +
              (out_dir / "final.snq").string() + "\" --data-dir \"" + data_dir().string() + "\"", &out) == 0);
  // A different image size is a mismatch.
  CHECK(run("eval --episodes-per-volume 1 --checkpoint \"" + (out_dir / "final.snq").string() + "\" --data-dir \"" +
            data_dir().string() + "\"", &out) == 3);
  CHECK(out.find("24x24") != std::string::npos);

  REQUIRE(run("--config \"" + cfg.string() + "\" train --with-confidence --seed 1 --data-dir \"" + data_dir().string() +
              "\" --out-dir \"" + (scratch() / "train_conf").string() + "\"") == 0);
  const auto conf_log = read_training_log(scratch() / "train_conf" / "train_log.jsonl");
  bool any_rl = false;
  for (const auto& r : conf_log) {
    if (r.phase != "rl") continue;
    any_rl = true;
    CHECK(r.mean_delta_c.has_value());
  }
  CHECK(any_rl);
  std::string corr;
  CHECK(run("correlation --bins 2 --log \"" + (scratch() / "train_conf" / "train_log.jsonl").string() + "\"", &corr) == 0);
  CHECK(corr.find("mean_delta_c") != std::string::npos);
}
