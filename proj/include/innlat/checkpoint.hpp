#pragma once

#include <filesystem>
#include <string>

#include "innlat/flow.hpp"

namespace innlat {

inline constexpr int kCheckpointVersion = 1;

/// Versioned JSON: {version, dim, blocks: [{actnorm: {log_scale, bias},
/// perm, coupling: {w1, b1, w2, b2, clamp}}]}. Matrices are row-major
/// nested arrays; reals carry 17 significant digits, so loading a saved
/// model reproduces it exactly.
std::string checkpoint_to_string(const FlowModel& model);
FlowModel checkpoint_from_string(const std::string& text);

void save_checkpoint(const FlowModel& model, const std::filesystem::path& path);
FlowModel load_checkpoint(const std::filesystem::path& path);

}  // namespace innlat
