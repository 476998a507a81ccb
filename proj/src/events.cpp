#include "events.hpp"

#include <charconv>
#include <fstream>

#include "common.hpp"
#include "csv.hpp"

namespace romx {

namespace {

const char* kHeader = "encounter_id,timestamp_minutes,variable,value";

int64_t parse_i64(const std::string& s, size_t line_no) {
    int64_t v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size())
        throw Error("events csv line " + std::to_string(line_no) + ": bad integer '" + s + "'");
    return v;
}

double parse_f64(const std::string& s, size_t line_no) {
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size())
        throw Error("events csv line " + std::to_string(line_no) + ": bad number '" + s + "'");
    return v;
}

}  // namespace

std::vector<RawEvent> read_events_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot read events csv: " + path.string());
    std::string line;
    if (!std::getline(in, line)) throw Error("events csv is empty: " + path.string());
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != kHeader)
        throw Error("events csv header must be '" + std::string(kHeader) + "', got '" + line + "'");

    std::vector<RawEvent> events;
    size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line == "\r") continue;
        auto fields = split_csv_line(line);
        if (fields.size() != 4)
            throw Error("events csv line " + std::to_string(line_no) + ": expected 4 fields, got " +
                        std::to_string(fields.size()));
        RawEvent e;
        e.encounter_id = fields[0];
        e.timestamp_minutes = parse_i64(fields[1], line_no);
        if (e.timestamp_minutes < 0)
            throw Error("events csv line " + std::to_string(line_no) + ": negative timestamp");
        e.variable = fields[2];
        e.value = parse_f64(fields[3], line_no);
        events.push_back(std::move(e));
    }
    return events;
}

void write_events_csv(const std::filesystem::path& path, std::span<const RawEvent> events) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write events csv: " + path.string());
    out << kHeader << '\n';
    for (const auto& e : events) {
        out << csv_escape(e.encounter_id) << ',' << e.timestamp_minutes << ','
            << csv_escape(e.variable) << ',' << fmt_double(e.value) << '\n';
    }
}

}  // namespace romx
