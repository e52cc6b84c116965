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

#include "sononav/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>
#include <thread>

#include <json.hpp>

namespace sononav {

double ssim(const UsImage& a, const UsImage& b) {
  constexpr int kWin = 11;
  constexpr double kSigma = 1.5;
  if (a.height != b.height || a.width != b.width) throw std::invalid_argument("ssim: image sizes differ");
  if (a.height < kWin || a.width < kWin) throw std::invalid_argument("ssim: images smaller than the 11x11 window");
  const double c1 = std::pow(0.01 * 255.0, 2), c2 = std::pow(0.03 * 255.0, 2);

  std::array<double, kWin> g{};
  double gs = 0.0;
  for (int i = 0; i < kWin; ++i) {
    const double x = i - kWin / 2;
    g[static_cast<std::size_t>(i)] = std::exp(-x * x / (2 * kSigma * kSigma));
    gs += g[static_cast<std::size_t>(i)];
  }
  for (auto& v : g) v /= gs;

  const int h = a.height, w = a.width, ho = h - kWin + 1, wo = w - kWin + 1;
  // Separable filtering of x, y, x^2, y^2, xy: rows first, then columns.
  std::array<std::vector<double>, 5> rows;
  for (auto& r : rows) r.assign(static_cast<std::size_t>(h) * wo, 0.0);
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < wo; ++c) {
      double s[5] = {0, 0, 0, 0, 0};
      for (int k = 0; k < kWin; ++k) {
        const double x = a.at(r, c + k), y = b.at(r, c + k), gk = g[static_cast<std::size_t>(k)];
        s[0] += gk * x;
        s[1] += gk * y;
        s[2] += gk * x * x;
        s[3] += gk * y * y;
        s[4] += gk * x * y;
      }
      for (int m = 0; m < 5; ++m) rows[static_cast<std::size_t>(m)][static_cast<std::size_t>(r) * wo + c] = s[m];
    }
  }
  double total = 0.0;
  for (int r = 0; r < ho; ++r) {
    for (int c = 0; c < wo; ++c) {
      double s[5] = {0, 0, 0, 0, 0};
      for (int k = 0; k < kWin; ++k) {
        const double gk = g[static_cast<std::size_t>(k)];
        for (int m = 0; m < 5; ++m) s[m] += gk * rows[static_cast<std::size_t>(m)][static_cast<std::size_t>(r + k) * wo + c];
      }
      const double mx = s[0], my = s[1];
      const double vx = s[2] - mx * mx, vy = s[3] - my * my, cxy = s[4] - mx * my;
      total += ((2 * mx * my + c1) * (2 * cxy + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
    }
  }
  return total / (static_cast<double>(ho) * wo);
}

TrajectoryRecord TrajectoryRecord::from_step(const Pose& pose, Action a, const StepOutcome& out) {
  TrajectoryRecord r;
  r.t = out.info.t;
  r.position_mm = pose.position;
  r.quaternion_xyzw = pose.orientation.coeffs();
  r.action = action_index(a);
  r.reward = out.reward;
  r.d_mm = out.info.d_mm;
  r.theta_deg = out.info.theta_deg;
  r.c_roi = out.info.c_roi;
  r.delta_d = out.info.delta_d;
  r.delta_theta = out.info.delta_theta;
  r.delta_c = out.info.delta_c;
  r.beta_deg = out.info.beta_deg;
  r.d_step_mm = out.info.steps.d_step_mm();
  r.theta_step_deg = out.info.steps.theta_step_deg();
  r.done = out.done;
  r.reason = std::string(termination_name(out.info.reason));
  return r;
}

std::string TrajectoryRecord::to_json() const {
  nlohmann::ordered_json j;
  j["t"] = t;
  j["position_mm"] = {position_mm.x(), position_mm.y(), position_mm.z()};
  j["quaternion_xyzw"] = {quaternion_xyzw[0], quaternion_xyzw[1], quaternion_xyzw[2], quaternion_xyzw[3]};
  j["action"] = action;
  j["reward"] = reward;
  j["d_mm"] = d_mm;
  j["theta_deg"] = theta_deg;
  j["c_roi"] = c_roi;
  j["delta_d"] = delta_d;
  j["delta_theta"] = delta_theta;
  j["delta_c"] = delta_c;
  j["beta_deg"] = beta_deg;
  j["d_step_mm"] = d_step_mm;
  j["theta_step_deg"] = theta_step_deg;
  j["done"] = done;
  j["reason"] = reason;
  return j.dump();
}

TrajectoryRecord TrajectoryRecord::from_json(const std::string& line) {
  TrajectoryRecord r;
  try {
    const auto j = nlohmann::json::parse(line);
    r.t = j.at("t").get<int>();
    const auto p = j.at("position_mm").get<std::vector<double>>();
    const auto q = j.at("quaternion_xyzw").get<std::vector<double>>();
    if (p.size() != 3 || q.size() != 4) throw std::invalid_argument("trajectory record: bad pose arrays");
    r.position_mm = Vec3(p[0], p[1], p[2]);
    r.quaternion_xyzw = Eigen::Vector4d(q[0], q[1], q[2], q[3]);
    r.action = j.at("action").get<int>();
    r.reward = j.at("reward").get<double>();
    r.d_mm = j.at("d_mm").get<double>();
    r.theta_deg = j.at("theta_deg").get<double>();
    r.c_roi = j.at("c_roi").get<double>();
    r.delta_d = j.at("delta_d").get<double>();
    r.delta_theta = j.at("delta_theta").get<double>();
    r.delta_c = j.at("delta_c").get<double>();
    r.beta_deg = j.at("beta_deg").get<double>();
    r.d_step_mm = j.at("d_step_mm").get<double>();
    r.theta_step_deg = j.at("theta_step_deg").get<double>();
    r.done = j.at("done").get<bool>();
    r.reason = j.at("reason").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("trajectory record: ") + e.what());
  }
  return r;
}

void write_trajectory(const std::vector<TrajectoryRecord>& records, const std::filesystem::path& path) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw std::ios_base::failure("cannot open " + path.string() + " for writing");
  for (const auto& r : records) f << r.to_json() << '\n';
  if (!f) throw std::ios_base::failure("write failed: " + path.string());
}

std::vector<TrajectoryRecord> read_trajectory(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw std::ios_base::failure("cannot open " + path.string());
  std::vector<TrajectoryRecord> out;
  std::string line;
  while (std::getline(f, line))
    if (!line.empty()) out.push_back(TrajectoryRecord::from_json(line));
  return out;
}

Action RandomPolicy::next() {
  std::uniform_int_distribution<int> u(0, kNumActions - 1);
  return action_from_index(u(rng_));
}

Action RandomPolicy::act(const Environment&, const Observation&) { return next(); }

std::unique_ptr<Policy> random_policy(uint64_t seed) { return std::make_unique<RandomPolicy>(seed); }

Action ExpertPolicy::act(const Environment& env, const Observation&) { return expert_action(env); }

Action GreedyPolicy::act(const Environment&, const Observation& obs) { return greedy_action(q_.q_values(obs)); }

Aggregate aggregate(const std::vector<double>& values) {
  Aggregate a;
  if (values.empty()) return a;
  a.mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
  if (values.size() > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - a.mean) * (v - a.mean);
    a.std = std::sqrt(ss / static_cast<double>(values.size() - 1));
  }
  return a;
}

namespace {

template <typename F>
Aggregate column(const std::vector<EpisodeResult>& rows, F f) {
  std::vector<double> v;
  v.reserve(rows.size());
  for (const auto& r : rows) v.push_back(f(r));
  return aggregate(v);
}

std::string fmt(double v) {
  std::ostringstream os;
  os << std::setprecision(10) << v;
  return os.str();
}

}  // namespace

Aggregate EvalReport::delta_dtheta() const {
  return column(rows, [](const EpisodeResult& r) { return r.mean_delta_dtheta; });
}
Aggregate EvalReport::final_d() const { return column(rows, [](const EpisodeResult& r) { return r.final_d_mm; }); }
Aggregate EvalReport::final_theta() const {
  return column(rows, [](const EpisodeResult& r) { return r.final_theta_deg; });
}
Aggregate EvalReport::ssim() const { return column(rows, [](const EpisodeResult& r) { return r.ssim; }); }
Aggregate EvalReport::steps() const {
  return column(rows, [](const EpisodeResult& r) { return static_cast<double>(r.steps); });
}
Aggregate EvalReport::mean_c() const { return column(rows, [](const EpisodeResult& r) { return r.mean_c; }); }
double EvalReport::success_rate() const {
  return column(rows, [](const EpisodeResult& r) { return r.success ? 1.0 : 0.0; }).mean;
}

std::string EvalReport::to_csv() const {
  std::ostringstream os;
  os << "episode,volume,delta_d_plus_delta_theta,final_d_mm,final_theta_deg,ssim,success,steps,mean_c,reason\n";
  for (const auto& r : rows) {
    os << r.episode << ',' << r.volume << ',' << fmt(r.mean_delta_dtheta) << ',' << fmt(r.final_d_mm) << ','
       << fmt(r.final_theta_deg) << ',' << fmt(r.ssim) << ',' << (r.success ? 1 : 0) << ',' << r.steps << ','
       << fmt(r.mean_c) << ',' << r.reason << '\n';
  }
  const Aggregate s = column(rows, [](const EpisodeResult& r) { return r.success ? 1.0 : 0.0; });
  const std::array<Aggregate, 6> cols = {delta_dtheta(), final_d(), final_theta(), ssim(), steps(), mean_c()};
  for (int which = 0; which < 2; ++which) {
    auto pick = [&](const Aggregate& a) { return fmt(which == 0 ? a.mean : a.std); };
    os << (which == 0 ? "mean" : "std") << ",," << pick(cols[0]) << ',' << pick(cols[1]) << ',' << pick(cols[2])
       << ',' << pick(cols[3]) << ',' << pick(s) << ',' << pick(cols[4]) << ',' << pick(cols[5]) << ",\n";
  }
  return os.str();
}

std::string EvalReport::to_json() const {
  nlohmann::ordered_json j;
  j["episodes"] = nlohmann::ordered_json::array();
  for (const auto& r : rows) {
    nlohmann::ordered_json e;
    e["episode"] = r.episode;
    e["volume"] = r.volume;
    e["delta_d_plus_delta_theta"] = r.mean_delta_dtheta;
    e["final_d_mm"] = r.final_d_mm;
    e["final_theta_deg"] = r.final_theta_deg;
    e["ssim"] = r.ssim;
    e["success"] = r.success;
    e["steps"] = r.steps;
    e["mean_c"] = r.mean_c;
    e["reason"] = r.reason;
    j["episodes"].push_back(e);
  }
  auto agg = [](const Aggregate& a) { return nlohmann::ordered_json{{"mean", a.mean}, {"std", a.std}}; };
  j["aggregate"] = {{"delta_d_plus_delta_theta", agg(delta_dtheta())},
                    {"final_d_mm", agg(final_d())},
                    {"final_theta_deg", agg(final_theta())},
                    {"ssim", agg(ssim())},
                    {"steps", agg(steps())},
                    {"mean_c", agg(mean_c())}};
  j["success_rate"] = success_rate();
  return j.dump(2);
}

namespace {

EpisodeResult run_episode(Policy& policy, const std::shared_ptr<const Scene>& scene, const EnvConfig& env_cfg,
                          const EvalConfig& cfg, int episode, int volume) {
  Rng rng = derived_rng(cfg.seed, static_cast<uint64_t>(episode));
  Environment env(env_cfg, EnvMode::kEvaluation);
  Observation obs = env.reset(scene, rng);
  policy.begin_episode(rng());
  EpisodeResult res;
  res.episode = episode;
  res.volume = volume;
  double sum_imp = 0.0, sum_c = 0.0;
  StepOutcome out;
  do {
    const Action a = policy.act(env, obs);
    out = env.step(a);
    sum_imp += out.info.delta_d + out.info.delta_theta;
    sum_c += out.info.c_roi;
    if (cfg.record_trajectories) res.trajectory.push_back(TrajectoryRecord::from_step(env.pose(), a, out));
    obs = out.observation;
  } while (!out.done);
  res.steps = out.info.t;
  res.final_d_mm = out.info.d_mm;
  res.final_theta_deg = out.info.theta_deg;
  res.mean_delta_dtheta = sum_imp / res.steps;
  res.mean_c = sum_c / res.steps;
  res.ssim = ssim(obs.latest(), env.goal_image());
  res.success = res.final_d_mm < env_cfg.success_distance_mm && res.final_theta_deg < env_cfg.success_angle_deg;
  res.reason = std::string(termination_name(out.info.reason));
  return res;
}

}  // namespace

EvalReport evaluate(const PolicyFactory& policy, const std::vector<std::shared_ptr<const Scene>>& dataset,
                    const EnvConfig& env_cfg, const EvalConfig& cfg) {
  if (cfg.episodes_per_volume < 1) throw std::invalid_argument("evaluate: episodes_per_volume must be >= 1");
  if (cfg.workers < 1) throw std::invalid_argument("evaluate: workers must be >= 1");
  EnvConfig ecfg = env_cfg;
  ecfg.always_compute_confidence = true;
  ecfg.validate();
  const int total = static_cast<int>(dataset.size()) * cfg.episodes_per_volume;
  EvalReport report;
  report.rows.resize(static_cast<std::size_t>(total));
  auto work = [&](int first, int stride) {
    std::unique_ptr<Policy> p = policy();
    for (int e = first; e < total; e += stride) {
      const int v = e / cfg.episodes_per_volume;
      report.rows[static_cast<std::size_t>(e)] = run_episode(*p, dataset[static_cast<std::size_t>(v)], ecfg, cfg, e, v);
    }
  };
  if (cfg.workers == 1) {
    work(0, 1);
  } else {
    std::vector<std::thread> threads;
    for (int w = 0; w < cfg.workers; ++w) threads.emplace_back(work, w, cfg.workers);
    for (auto& t : threads) t.join();
  }
  return report;
}

std::optional<double> spearman(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size()) throw std::invalid_argument("spearman: length mismatch");
  auto ranks = [](const std::vector<double>& v) {
    std::vector<std::size_t> idx(v.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    std::vector<double> r(v.size());
    for (std::size_t i = 0; i < idx.size();) {
      std::size_t j = i;
      while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
      const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
      for (std::size_t k = i; k <= j; ++k) r[idx[k]] = avg;
      i = j + 1;
    }
    return r;
  };
  if (x.size() < 2) return std::nullopt;
  const auto rx = ranks(x), ry = ranks(y);
  const double mx = aggregate(rx).mean, my = aggregate(ry).mean;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return std::nullopt;
  return sxy / std::sqrt(sxx * syy);
}

CorrelationStudy correlation_study(const std::vector<TrainRecord>& log, int bins) {
  if (bins < 1) throw std::invalid_argument("correlation_study: bins must be >= 1");
  std::vector<const TrainRecord*> rl;
  for (const auto& r : log) {
    if (r.phase != "rl") continue;
    if (!r.mean_delta_c) {
      throw std::invalid_argument("correlation_study: episode " + std::to_string(r.episode) +
                                  " has no confidence change (train with confidence enabled)");
    }
    rl.push_back(&r);
  }
  if (rl.empty()) throw std::invalid_argument("correlation_study: log has no training episodes");
  const int nb = std::min<int>(bins, static_cast<int>(rl.size()));
  CorrelationStudy out;
  std::vector<double> xs, ys;
  for (int b = 0; b < nb; ++b) {
    const std::size_t lo = rl.size() * static_cast<std::size_t>(b) / nb;
    const std::size_t hi = rl.size() * static_cast<std::size_t>(b + 1) / nb;
    CorrelationBin cb;
    cb.bin = b;
    cb.first_episode = rl[lo]->episode;
    cb.last_episode = rl[hi - 1]->episode;
    double dc = 0, imp = 0, d = 0, th = 0;
    for (std::size_t i = lo; i < hi; ++i) {
      dc += *rl[i]->mean_delta_c;
      imp += rl[i]->mean_delta_d + rl[i]->mean_delta_theta;
      d += rl[i]->final_d_mm;
      th += rl[i]->final_theta_deg;
    }
    const double n = static_cast<double>(hi - lo);
    cb.mean_delta_c = dc / n;
    cb.mean_delta_dtheta = imp / n;
    cb.mean_final_d_mm = d / n;
    cb.mean_final_theta_deg = th / n;
    xs.push_back(cb.mean_delta_c);
    ys.push_back(cb.mean_delta_dtheta);
    out.bins.push_back(cb);
  }
  out.spearman = spearman(xs, ys);
  return out;
}

std::string CorrelationStudy::to_csv() const {
  std::ostringstream os;
  os << "bin,first_episode,last_episode,mean_delta_c,mean_delta_d_plus_delta_theta,mean_final_d_mm,mean_final_theta_deg\n";
  for (const auto& b : bins) {
    os << b.bin << ',' << b.first_episode << ',' << b.last_episode << ',' << fmt(b.mean_delta_c) << ','
       << fmt(b.mean_delta_dtheta) << ',' << fmt(b.mean_final_d_mm) << ',' << fmt(b.mean_final_theta_deg) << '\n';
  }
  os << "# spearman," << (spearman ? fmt(*spearman) : std::string("undefined")) << '\n';
  return os.str();
}

std::vector<TrainRecord> read_training_log(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw std::ios_base::failure("cannot open " + path.string());
  std::vector<TrainRecord> out;
  std::string line;
  while (std::getline(f, line))
    if (!line.empty()) out.push_back(TrainRecord::from_json(line));
  return out;
}

}  // namespace sononav
