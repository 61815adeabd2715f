#pragma once

namespace posecode {

inline constexpr const char* kLibraryVersion = "1.0.0";

// On-disk format versions. Loaders accept any minor revision of a known
// major version and reject everything else.
inline constexpr const char* kArtifactFormatVersion = "1.0";
inline constexpr int kArtifactFormatMajor = 1;

inline constexpr const char* kPoseTextMagic = "# posecode-pose v1";
inline constexpr const char* kPoseBinaryMagic = "PCPOSEB1";
inline constexpr const char* kTokenFileMagic = "# posecode-tokens v1";

}  // namespace posecode
