#pragma once

#include <string>

#include "deepstruct/model.hpp"

namespace deepstruct {

// Binary model checkpoint: magic "DSMODEL1", version, hash + full text of the
// canonical config, the named f64 parameter tensors with shapes, and a
// trailing CRC32. The embedded config lets eval/inspect rebuild the model
// without the original spec file; save(load(x)) is byte-identical to x.
void save_model(const std::string& path, const Model& m);
Model load_model(const std::string& path);

}  // namespace deepstruct
