#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace romx {

// Row-major little-endian IEEE-754 binary payloads that accompany JSON
// manifests. Doubles carry matrices, floats carry model weights.
void write_f64_matrix(const std::filesystem::path& path, const Eigen::MatrixXd& m);
Eigen::MatrixXd read_f64_matrix(const std::filesystem::path& path, int rows, int cols);

void write_f32_blob(const std::filesystem::path& path, const std::vector<float>& values);
std::vector<float> read_f32_blob(const std::filesystem::path& path, size_t expected_count);

// Wide debug table: one row per feature, one column per hour.
void write_matrix_debug_csv(const std::filesystem::path& path, const Eigen::MatrixXd& m,
                            const std::vector<std::string>& feature_order);

}  // namespace romx
