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

#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <string>

#include <json.hpp>

#include "sononav/volume.hpp"

namespace sononav {

namespace {

constexpr const char* kFormatTag = "USV1";

std::string format_double(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

std::map<std::string, std::string> read_header(std::istream& in) {
  std::map<std::string, std::string> kv;
  std::string line;
  bool terminated = false;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) {
      terminated = true;
      break;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw VolumeFormatError("malformed header line: '" + line + "'");
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  if (!terminated) throw VolumeFormatError("header is not terminated by a blank line");
  return kv;
}

const std::string& require_key(const std::map<std::string, std::string>& kv, const std::string& key) {
  auto it = kv.find(key);
  if (it == kv.end()) throw VolumeFormatError("missing header key '" + key + "'");
  return it->second;
}

template <typename T, std::size_t N>
std::array<T, N> parse_fields(const std::string& text, const std::string& key) {
  std::istringstream is(text);
  std::array<T, N> out{};
  for (auto& v : out) {
    if (!(is >> v)) throw VolumeFormatError("malformed value for '" + key + "': '" + text + "'");
  }
  std::string rest;
  if (is >> rest) throw VolumeFormatError("trailing data in '" + key + "'");
  return out;
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::ios_base::failure("cannot open '" + path.string() + "' for writing");
  return out;
}

std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::ios_base::failure("cannot open '" + path.string() + "' for reading");
  return in;
}

}  // namespace

void save_volume(const Volume& v, const std::filesystem::path& path) {
  auto out = open_out(path);
  out << "format=" << kFormatTag << "\n"
      << "dims=" << v.nx() << " " << v.ny() << " " << v.nz() << "\n"
      << "spacing_mm=" << format_double(v.spacing()) << "\n"
      << "origin_mm=" << format_double(v.origin().x()) << " " << format_double(v.origin().y()) << " "
      << format_double(v.origin().z()) << "\n\n";
  out.write(reinterpret_cast<const char*>(v.data().data()), static_cast<std::streamsize>(v.data().size()));
  if (!out) throw std::ios_base::failure("write failed for '" + path.string() + "'");
}

Volume load_volume(const std::filesystem::path& path) {
  auto in = open_in(path);
  const auto kv = read_header(in);
  const std::string& fmt = require_key(kv, "format");
  if (fmt != kFormatTag) throw VolumeFormatError("unsupported volume format '" + fmt + "'");
  const auto dims = parse_fields<long long, 3>(require_key(kv, "dims"), "dims");
  const auto spacing = parse_fields<double, 1>(require_key(kv, "spacing_mm"), "spacing_mm")[0];
  const auto origin = parse_fields<double, 3>(require_key(kv, "origin_mm"), "origin_mm");
  for (auto d : dims) {
    if (d <= 0 || d > (1 << 16)) throw VolumeFormatError("dims out of range");
  }
  if (!(spacing > 0.0) || !std::isfinite(spacing)) throw VolumeFormatError("spacing_mm must be positive");
  for (double o : origin) {
    if (!std::isfinite(o)) throw VolumeFormatError("origin_mm must be finite");
  }
  const std::size_t n = static_cast<std::size_t>(dims[0] * dims[1] * dims[2]);
  std::vector<uint8_t> data(n);
  in.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(in.gcount()) != n) {
    throw VolumeFormatError("size mismatch: expected " + std::to_string(n) + " data bytes, found " +
                            std::to_string(in.gcount()));
  }
  if (in.peek() != std::char_traits<char>::eof()) {
    throw VolumeFormatError("size mismatch: trailing bytes after data section");
  }
  return Volume({static_cast<int>(dims[0]), static_cast<int>(dims[1]), static_cast<int>(dims[2])}, spacing,
                Vec3(origin[0], origin[1], origin[2]), std::move(data));
}

void save_pose(const Pose& pose, const std::filesystem::path& path) {
  nlohmann::json j;
  j["position_mm"] = {pose.position.x(), pose.position.y(), pose.position.z()};
  j["quaternion_xyzw"] = {pose.orientation.x(), pose.orientation.y(), pose.orientation.z(), pose.orientation.w()};
  auto out = open_out(path);
  out << j.dump(2) << "\n";
  if (!out) throw std::ios_base::failure("write failed for '" + path.string() + "'");
}

Pose load_pose(const std::filesystem::path& path) {
  auto in = open_in(path);
  nlohmann::json j;
  try {
    in >> j;
    const auto p = j.at("position_mm").get<std::array<double, 3>>();
    const auto q = j.at("quaternion_xyzw").get<std::array<double, 4>>();
    Pose pose;
    pose.position = Vec3(p[0], p[1], p[2]);
    pose.orientation = Quat(q[3], q[0], q[1], q[2]);
    if (std::abs(pose.orientation.norm() - 1.0) > 1e-6) {
      throw VolumeFormatError("goal quaternion is not unit-norm");
    }
    pose.orientation.normalize();
    pose.validate();
    return pose;
  } catch (const nlohmann::json::exception& e) {
    throw VolumeFormatError("malformed pose file '" + path.string() + "': " + e.what());
  }
}

void save_pgm(const UsImage& img, const std::filesystem::path& path) {
  auto out = open_out(path);
  out << "P5\n" << img.width << " " << img.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(img.pixels.data()), static_cast<std::streamsize>(img.pixels.size()));
  if (!out) throw std::ios_base::failure("write failed for '" + path.string() + "'");
}

UsImage load_pgm(const std::filesystem::path& path) {
  auto in = open_in(path);
  std::string magic;
  in >> magic;
  if (magic != "P5") throw VolumeFormatError("only binary PGM (P5) is supported");
  auto next_int = [&]() {
    int v = 0;
    while (in >> std::ws && in.peek() == '#') {
      std::string comment;
      std::getline(in, comment);
    }
    if (!(in >> v)) throw VolumeFormatError("malformed PGM header");
    return v;
  };
  const int w = next_int();
  const int h = next_int();
  const int maxval = next_int();
  if (w <= 0 || h <= 0 || maxval != 255) throw VolumeFormatError("unsupported PGM geometry or depth");
  in.get();
  UsImage img(h, w);
  in.read(reinterpret_cast<char*>(img.pixels.data()), static_cast<std::streamsize>(img.pixels.size()));
  if (static_cast<std::size_t>(in.gcount()) != img.pixels.size()) throw VolumeFormatError("truncated PGM data");
  return img;
}

}  // namespace sononav
