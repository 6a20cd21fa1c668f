#pragma once

#include "dtanma/inference.hpp"

#include <string>

namespace dtanma {

// Binary posterior container: a text header (layout, spec hash, sampler
// config), little-endian float64 draws in chain-major order, the per-chain
// deviance traces, and per-chain resume checkpoints. A structured-text index
// (.idx) with parameter names and byte offsets is written alongside.
void save_posterior(const std::string& path, const PosteriorSamples& samples);
PosteriorSamples load_posterior(const std::string& path);

}  // namespace dtanma
