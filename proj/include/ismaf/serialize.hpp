#pragma once

// Model files: a text header (format version, seed, input shape, full
// config), every parameter as exact 64-bit patterns, and a CRC-32 trailer
// over everything before it.

#include "ismaf/model.hpp"

#include <filesystem>
#include <stdexcept>
#include <string>

namespace ismaf {

inline constexpr int kModelFormatVersion = 1;

struct ModelFormatError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

std::string serialize_model(const Model& model);
Model deserialize_model(const std::string& text);

void save_model(const Model& model, const std::filesystem::path& path);
Model load_model(const std::filesystem::path& path);

} // namespace ismaf
