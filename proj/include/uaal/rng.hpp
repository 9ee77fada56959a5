// Copyright 2026 The uaal Authors
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

namespace uaal {

using Rng = std::mt19937_64;

/// Mixes a base seed with stream tags (round, epoch, purpose, ...) into an
/// independent seed, so every random stream in a run is reproducible.
inline std::uint64_t derive_seed(std::uint64_t base,
                                 std::initializer_list<std::uint64_t> tags) {
  auto mix = [](std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  };
  std::uint64_t h = mix(base);
  for (std::uint64_t t : tags) h = mix(h ^ mix(t));
  return h;
}

// Stream purposes for derive_seed.
enum SeedStream : std::uint64_t {
  kStreamInit = 1,
  kStreamShuffle = 2,
  kStreamAugment = 3,
  kStreamSeedSet = 4,
  kStreamRandomQuery = 5,
  kStreamDataset = 6,
  kStreamSplit = 7,
  kStreamOutdomain = 8,
};

}  // namespace uaal
