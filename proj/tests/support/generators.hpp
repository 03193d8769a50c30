#pragma once

#include "afforda/io.hpp"
#include "afforda/rng.hpp"

namespace afforda::testing {

BinaryMask random_mask(Rng& rng, int max_side = 24);
// Structurally valid manifest with random optional fields; files are not
// created.
Manifest random_manifest(Rng& rng);

}  // namespace afforda::testing
