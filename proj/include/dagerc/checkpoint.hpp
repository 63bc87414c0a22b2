#pragma once

#include <string>

#include "dagerc/model.hpp"

namespace dagerc {

// Structured-text container: model config plus a flat list of
// (name, shape, row-major values). Byte-stable for identical models.
void save_checkpoint(const Model& model, const std::string& path);
Model load_checkpoint(const std::string& path);

}  // namespace dagerc
