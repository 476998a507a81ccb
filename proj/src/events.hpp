#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace romx {

// One long-format record: a variable observed (or a dose set) at a minute
// offset from encounter start.
struct RawEvent {
    std::string encounter_id;
    int64_t timestamp_minutes = 0;
    std::string variable;
    double value = 0.0;
};

// CSV with header `encounter_id,timestamp_minutes,variable,value`.
std::vector<RawEvent> read_events_csv(const std::filesystem::path& path);
void write_events_csv(const std::filesystem::path& path, std::span<const RawEvent> events);

}  // namespace romx
