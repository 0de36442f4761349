#pragma once

#include <filesystem>
#include <optional>
#include <string>

#include "ocgraf/ad.hpp"

namespace ocgraf::io {

struct CheckpointInfo {
    int64_t step = 0;
    std::string config_digest;
};

// Layout: <dir>/manifest.json + <dir>/params.bin (little-endian float32).
// Adam state rides along as extra named entries so training resumes cleanly.
void save_checkpoint(const std::filesystem::path& dir, const ad::ParamStore& params,
                     int64_t step, const std::string& config_digest);

// Fills an already-constructed ParamStore; shapes must match. A non-empty
// expected digest must equal the stored one.
CheckpointInfo load_checkpoint(const std::filesystem::path& dir, ad::ParamStore& params,
                               const std::string& expected_digest);

std::optional<std::filesystem::path> latest_checkpoint(const std::filesystem::path& out_dir);

}  // namespace ocgraf::io
