#pragma once

#include "warpcode/patch.hpp"
#include "warpcode/random.hpp"

#include <filesystem>
#include <string>

namespace testing {

inline warpcode::Vector random_vector(warpcode::Rng& rng, int n) {
    warpcode::Vector v(n);
    for (int i = 0; i < n; ++i) v[i] = rng.normal();
    return v;
}

inline warpcode::Matrix random_matrix(warpcode::Rng& rng, int rows, int cols) {
    warpcode::Matrix m(rows, cols);
    for (int c = 0; c < cols; ++c)
        for (int r = 0; r < rows; ++r) m(r, c) = rng.normal();
    return m;
}

inline warpcode::ImagePatch random_patch(warpcode::Rng& rng, int n) {
    return warpcode::contrast_normalize(random_vector(rng, n));
}

// Fresh, empty scratch directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / ("warpcode_test_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

}  // namespace testing
