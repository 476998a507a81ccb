#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace romx {

struct TimingRecord {
    std::string encounter_id;
    std::string method;  // predict | kshap | lbm
    double seconds = 0.0;
    int t_hours = 0;
    int n_features = 0;
    bool converged = true;
};

struct MethodTiming {
    std::string method;
    size_t n = 0;
    double median = 0.0;
    double q1 = 0.0;
    double q3 = 0.0;
    double iqr = 0.0;
    double min = 0.0;
    double max = 0.0;
};

// Median and interquartile range with linear-interpolation quartiles, one row
// per requested method; methods with no records are dropped with a warning on
// stderr.
std::vector<MethodTiming> timing_summary(std::span<const TimingRecord> records,
                                         std::span<const std::string> methods);

void write_timing_records_csv(const std::filesystem::path& path,
                              std::span<const TimingRecord> records);
void write_timing_summary_csv(const std::filesystem::path& path,
                              std::span<const MethodTiming> rows);
void write_timing_boxplot_svg(const std::filesystem::path& path,
                              std::span<const MethodTiming> rows);

}  // namespace romx
