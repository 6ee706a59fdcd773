#pragma once

#include <filesystem>
#include <optional>

#include "utaam/fitting.hpp"
#include "utaam/model.hpp"

namespace utaam {

// "UTAM" chunked container: magic, u32 LE version, then named chunks
// (u8 name length, ASCII name, u64 LE payload length, payload). Array
// payloads reuse the "UTT1" tensor encoding. Chunks are written in a fixed
// order so save/load round trips are bit-exact:
//   MEAN_S MEAN_T CORE_S CORE_T MODE_S_I MODE_S_P MODE_S_E
//   MODE_T_I MODE_T_P MODE_T_L MODE_T_E MESH HOG [CASC]

struct ModelFile {
    UtaamModel model;
    std::optional<CascadeRegressor> cascade;
};

void save_model(const std::filesystem::path& path, const UtaamModel& model,
                const CascadeRegressor* cascade = nullptr);
ModelFile load_model(const std::filesystem::path& path);

}  // namespace utaam
