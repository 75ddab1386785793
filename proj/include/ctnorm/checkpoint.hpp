#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace ctnorm::nn {

struct TensorBlob {
    std::vector<std::int64_t> dims;
    std::vector<float> values;
};

// Insertion into std::map keeps file bytes deterministic for a given content.
using TensorMap = std::map<std::string, TensorBlob>;

inline constexpr std::uint32_t kCheckpointVersion = 1;

// Format: "STCT" | version u32 | tensor count u32 | per tensor:
//   name length u32, name bytes, rank u32, dims u64 each, f32 LE values.
void save_checkpoint(const std::filesystem::path& path, const TensorMap& tensors);
TensorMap load_checkpoint(const std::filesystem::path& path);

}  // namespace ctnorm::nn
