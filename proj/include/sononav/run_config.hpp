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

#ifndef SONONAV_RUN_CONFIG_HPP
#define SONONAV_RUN_CONFIG_HPP

#include <filesystem>
#include <stdexcept>
#include <string>

#include "sononav/agent.hpp"
#include "sononav/environment.hpp"
#include "sononav/evaluation.hpp"
#include "sononav/phantom.hpp"

namespace sononav {

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/**
 * Settings for every command, as one JSON document with sections
 * `env`, `confidence`, `train`, `phantom` and `eval`. Missing keys keep
 * their defaults; unknown sections or keys are rejected.
 */
struct RunConfig {
  EnvConfig env;
  TrainConfig train;
  PhantomSpec phantom;
  EvalConfig eval;

  /// Complete document (every key), pretty-printed.
  std::string to_json() const;
  /// Throws ConfigError for malformed text, unknown keys or bad types.
  static RunConfig from_json(const std::string& text);
  static RunConfig load(const std::filesystem::path& path);

  /// Validates every section. Throws ConfigError.
  void validate() const;
};

/// `<dir>/name.usv` pairs with `<dir>/name.goal.json`.
std::filesystem::path goal_sidecar_path(const std::filesystem::path& volume_path);

/// Every `*.usv` volume in `dir` with its goal sidecar, sorted by file
/// name. Throws std::ios_base::failure for a missing directory, sidecar or
/// an empty directory.
std::vector<std::shared_ptr<const Scene>> load_dataset(const std::filesystem::path& dir);

/// One line per key, `section.key=default`; `[method]` marks values of the
/// reference navigation method.
std::string config_reference();

}  // namespace sononav

#endif  // SONONAV_RUN_CONFIG_HPP
