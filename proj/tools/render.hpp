#pragma once

#include <filesystem>

#include "posecode/pose_data.hpp"

namespace posecode::cli {

// Orthographic (x, y) stick-figure render of every frame to
// frame_NNNNN.ppm under out_dir. Deterministic bytes for identical input.
// Returns the number of images written.
int render_pose_sequence(const PoseSequence& seq, const std::filesystem::path& out_dir,
                         int image_size = 384);

}  // namespace posecode::cli
