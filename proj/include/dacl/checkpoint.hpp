#pragma once

#include <filesystem>

#include "dacl/model.hpp"

namespace dacl {

// A checkpoint is two files: `<stem>.bin`, the parameters as one little-endian f64
// blob in Model::parameters() order, and `<stem>.json`, a manifest with the model
// config and each parameter's name, shape, byte offset and byte length.

std::filesystem::path manifest_path(const std::filesystem::path& blob_path);

void save_checkpoint(const Model& model, const std::filesystem::path& blob_path);

/// Throws DataError naming the path when a file is missing or inconsistent.
Model load_checkpoint(const std::filesystem::path& blob_path);

}  // namespace dacl
