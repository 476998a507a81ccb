#include "matrix_io.hpp"

#include <cstdio>
#include <fstream>

#include "common.hpp"
#include "csv.hpp"

namespace romx {

void write_f64_matrix(const std::filesystem::path& path, const Eigen::MatrixXd& m) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write matrix payload: " + path.string());
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        for (Eigen::Index c = 0; c < m.cols(); ++c) {
            double v = m(r, c);
            out.write(reinterpret_cast<const char*>(&v), sizeof(v));
        }
    }
    if (!out) throw Error("short write on matrix payload: " + path.string());
}

Eigen::MatrixXd read_f64_matrix(const std::filesystem::path& path, int rows, int cols) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot read matrix payload: " + path.string());
    Eigen::MatrixXd m(rows, cols);
    for (int r = 0; r < rows; ++r) {
        for (int c = 0; c < cols; ++c) {
            double v = 0.0;
            in.read(reinterpret_cast<char*>(&v), sizeof(v));
            if (!in) throw Error("matrix payload truncated: " + path.string());
            m(r, c) = v;
        }
    }
    char extra = 0;
    if (in.read(&extra, 1))
        throw Error("matrix payload larger than manifest dimensions: " + path.string());
    return m;
}

void write_f32_blob(const std::filesystem::path& path, const std::vector<float>& values) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write weight payload: " + path.string());
    out.write(reinterpret_cast<const char*>(values.data()),
              static_cast<std::streamsize>(values.size() * sizeof(float)));
    if (!out) throw Error("short write on weight payload: " + path.string());
}

std::vector<float> read_f32_blob(const std::filesystem::path& path, size_t expected_count) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot read weight payload: " + path.string());
    std::vector<float> values(expected_count);
    in.read(reinterpret_cast<char*>(values.data()),
            static_cast<std::streamsize>(expected_count * sizeof(float)));
    if (!in || static_cast<size_t>(in.gcount()) != expected_count * sizeof(float))
        throw Error("weight payload truncated: " + path.string());
    char extra = 0;
    if (in.read(&extra, 1))
        throw Error("weight payload larger than manifest shapes: " + path.string());
    return values;
}

void write_matrix_debug_csv(const std::filesystem::path& path, const Eigen::MatrixXd& m,
                            const std::vector<std::string>& feature_order) {
    if (static_cast<Eigen::Index>(feature_order.size()) != m.rows())
        throw Error("debug csv: feature order size does not match matrix rows");
    std::ofstream out(path);
    if (!out) throw Error("cannot write debug csv: " + path.string());
    out << "feature";
    for (Eigen::Index c = 0; c < m.cols(); ++c) out << ",hour_" << c;
    out << '\n';
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        out << csv_escape(feature_order[static_cast<size_t>(r)]);
        for (Eigen::Index c = 0; c < m.cols(); ++c) out << ',' << fmt_double(m(r, c));
        out << '\n';
    }
}

}  // namespace romx
