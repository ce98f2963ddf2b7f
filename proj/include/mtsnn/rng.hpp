#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <string>

namespace mtsnn {

/// One engine drives shuffling, augmentation and initialisation so a run is a
/// pure function of its seed. Draws are derived from raw engine output (not
/// std distributions) to keep them identical across standard libraries and
/// to keep the engine state the only thing a checkpoint needs.
using Rng = std::mt19937_64;

/// Uniform on [0, 1) with 53 random bits.
double uniform01(Rng& rng);
/// Standard normal via Box-Muller; consumes two draws, caches nothing.
double standard_normal(Rng& rng);
/// Uniform integer in [0, n).
std::size_t uniform_index(Rng& rng, std::size_t n);
bool coin_flip(Rng& rng);

std::string serialize_rng(const Rng& rng);
Rng deserialize_rng(const std::string& text);

}  // namespace mtsnn
