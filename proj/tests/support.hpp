#pragma once

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include <Eigen/Dense>

#include "openenv/data.hpp"

namespace testing {

inline std::filesystem::path scratch_dir(const std::string& name) {
    const auto dir = std::filesystem::temp_directory_path() /
                     ("openenv_" + name + "_" + std::to_string(::getpid()));
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
    std::filesystem::create_directories(path.parent_path());
    std::ofstream(path) << text;
}

inline std::string read_text(const std::filesystem::path& path) {
    std::ifstream in(path);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline std::filesystem::path iris_csv() { return OPENENV_IRIS_CSV; }

// Numeric features f1..fd, target "y" with class names "0".."k-1" (k = 0 for regression).
inline openenv::Dataset make_dataset(const Eigen::MatrixXd& x, const std::vector<double>& y, openenv::TaskType task,
                                     int classes = 2) {
    openenv::Dataset ds;
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
        ds.schema.features.push_back({"f" + std::to_string(j + 1), openenv::ColumnKind::numeric, {}});
    }
    ds.schema.target.name = "y";
    ds.schema.task = task;
    if (task != openenv::TaskType::regression) {
        ds.schema.target.kind = openenv::ColumnKind::categorical;
        for (int c = 0; c < classes; ++c) ds.schema.target.levels.push_back(std::to_string(c));
    }
    ds.features = x;
    ds.targets = y;
    for (std::size_t i = 0; i < y.size(); ++i) ds.sample_ids.push_back(std::to_string(i));
    return ds;
}

}  // namespace testing
