#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <vector>

namespace rseg {

/// Engine seeded from a tuple of 64-bit words (seed, index, stream tag, ...).
inline std::mt19937_64 seeded_engine(std::initializer_list<std::uint64_t> words) {
  std::vector<std::uint32_t> parts;
  parts.reserve(words.size() * 2);
  for (std::uint64_t w : words) {
    parts.push_back(std::uint32_t(w & 0xffffffffu));
    parts.push_back(std::uint32_t(w >> 32));
  }
  std::seed_seq seq(parts.begin(), parts.end());
  return std::mt19937_64(seq);
}

// Stream tags keep independent random consumers decorrelated under one seed.
inline constexpr std::uint64_t kPhantomStream = 0x70686e74;
inline constexpr std::uint64_t kNoiseStream = 0x6e6f6973;
inline constexpr std::uint64_t kSplitStream = 0x73706c74;
inline constexpr std::uint64_t kShuffleStream = 0x73686666;

}  // namespace rseg
