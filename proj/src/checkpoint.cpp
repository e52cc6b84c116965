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

#include <cstring>
#include <fstream>
#include <iterator>

#include "sononav/agent.hpp"

namespace sononav {

namespace {

constexpr char kMagic[4] = {'S', 'N', 'Q', 'N'};
constexpr uint32_t kVersion = 1;

uint64_t fnv1a(const std::string& bytes) {
  uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

template <typename U>
void put(std::string& out, U v) {
  char buf[sizeof(U)];
  std::memcpy(buf, &v, sizeof(U));
  out.append(buf, sizeof(U));
}

template <typename U>
U get(const std::string& in, std::size_t& pos) {
  if (pos + sizeof(U) > in.size()) throw CheckpointError("checkpoint: file is truncated");
  U v;
  std::memcpy(&v, in.data() + pos, sizeof(U));
  pos += sizeof(U);
  return v;
}

}  // namespace

void save_checkpoint(const QNetwork& q, const std::filesystem::path& path) {
  std::string out(kMagic, 4);
  put<uint32_t>(out, kVersion);
  const std::string desc = q.spec().to_json();
  put<uint32_t>(out, static_cast<uint32_t>(desc.size()));
  out += desc;
  put<uint64_t>(out, static_cast<uint64_t>(q.params().size()));
  out.append(reinterpret_cast<const char*>(q.params().data()), q.params().size() * sizeof(float));
  put<uint64_t>(out, fnv1a(out));
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::ios_base::failure("cannot open " + path.string() + " for writing");
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw std::ios_base::failure("write failed: " + path.string());
}

QNetwork load_checkpoint(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::ios_base::failure("cannot open " + path.string());
  const std::string in((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  if (in.size() < 4 + 4 + 4 + 8 + 8 || std::memcmp(in.data(), kMagic, 4) != 0) {
    throw CheckpointError("checkpoint: " + path.string() + " is not a network checkpoint");
  }
  std::size_t tail = in.size() - sizeof(uint64_t);
  const uint64_t stored = get<uint64_t>(in, tail);
  if (stored != fnv1a(in.substr(0, in.size() - sizeof(uint64_t)))) {
    throw CheckpointError("checkpoint: checksum mismatch in " + path.string());
  }
  std::size_t pos = 4;
  const uint32_t version = get<uint32_t>(in, pos);
  if (version != kVersion) {
    throw CheckpointError("checkpoint: format version " + std::to_string(version) + ", expected " +
                          std::to_string(kVersion));
  }
  const uint32_t desc_len = get<uint32_t>(in, pos);
  if (pos + desc_len > in.size()) throw CheckpointError("checkpoint: file is truncated");
  NetworkSpec spec;
  try {
    spec = NetworkSpec::from_json(in.substr(pos, desc_len));
  } catch (const std::invalid_argument& e) {
    throw CheckpointError(std::string("checkpoint: bad architecture descriptor: ") + e.what());
  }
  pos += desc_len;
  const uint64_t count = get<uint64_t>(in, pos);
  QNetwork q(spec);
  if (count != q.params().size() || pos + count * sizeof(float) + sizeof(uint64_t) != in.size()) {
    throw CheckpointError("checkpoint: parameter count does not match the architecture");
  }
  std::memcpy(q.params().data(), in.data() + pos, count * sizeof(float));
  return q;
}

QNetwork load_checkpoint(const std::filesystem::path& path, const NetworkSpec& expected) {
  QNetwork q = load_checkpoint(path);
  const NetworkSpec& got = q.spec();
  if (got.in_channels != expected.in_channels || got.height != expected.height || got.width != expected.width) {
    throw CheckpointError("checkpoint: network input is " + std::to_string(got.in_channels) + "x" +
                          std::to_string(got.height) + "x" + std::to_string(got.width) + " but the run uses " +
                          std::to_string(expected.in_channels) + "x" + std::to_string(expected.height) + "x" +
                          std::to_string(expected.width) + " (frames x height x width)");
  }
  if (!(got == expected)) throw CheckpointError("checkpoint: architecture differs from the configured network");
  return q;
}

}  // namespace sononav
