// Copyright 2026 The asynclqr Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <vector>

namespace asynclqr {

using Engine = std::mt19937_64;

/// Names a deterministic random substream as a path of integers under a root
/// seed. Two keys with the same path always produce the same engine state, so
/// results never depend on the order in which substreams are consumed.
class StreamKey {
 public:
  static constexpr std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
  }

  explicit StreamKey(std::uint64_t seed) : path_{seed} {}

  StreamKey child(std::uint64_t index) const {
    StreamKey k = *this;
    k.path_.push_back(index);
    return k;
  }

  StreamKey child(std::initializer_list<std::uint64_t> indices) const {
    StreamKey k = *this;
    k.path_.insert(k.path_.end(), indices);
    return k;
  }

  /// Engine seeded with a splitmix64 hash of the whole path.
  Engine engine() const {
    std::uint64_t h = 0x9e3779b97f4a7c15ull ^ path_.size();
    for (std::uint64_t v : path_) h = splitmix64(h ^ splitmix64(v));
    return Engine(h);
  }

  const std::vector<std::uint64_t>& path() const { return path_; }

 private:
  std::vector<std::uint64_t> path_;
};

/// Top-level stream namespaces.
enum class StreamTag : std::uint64_t {
  kFleet = 1,
  kZo = 2,
  kDelay = 3,
  kTest = 4,
  kLipschitz = 5,
};

inline StreamKey tagged(std::uint64_t seed, StreamTag tag) {
  return StreamKey(seed).child(static_cast<std::uint64_t>(tag));
}

}  // namespace asynclqr
