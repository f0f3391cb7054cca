#pragma once

#include <string>

#include "panokit/nn.hpp"

namespace panokit {

// Writes every parameter and then every registered buffer, in registration
// order, as one flat container of native-endian doubles, with a JSON layout
// manifest (names, kinds, shapes, offsets) at path + ".json".
void save_weights(const ParamStore& store, const std::string& path);

// Restores a container written by save_weights into a store with the same
// registration layout. Throws IoError when a file is missing, truncated, or
// unparseable, and DimensionError when the manifest disagrees with the live
// store (different names, kinds, shapes, or entry count).
void load_weights(ParamStore& store, const std::string& path);

}  // namespace panokit
