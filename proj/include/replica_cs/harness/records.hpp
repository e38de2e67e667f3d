#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "replica_cs/harness/config.hpp"

namespace replica_cs::harness {

inline constexpr const char* kVersion = "1.0.0";
inline constexpr int kHeaderVersion = 1;

using Value = std::variant<double, std::int64_t, bool, std::string>;

/// One run point as a flat key -> value map. Keys absent from a record are
/// written as empty CSV cells and omitted from JSON.
struct ResultRecord {
    std::map<std::string, Value> fields;

    void set(const std::string& key, Value v) { fields[key] = std::move(v); }
    bool has(const std::string& key) const { return fields.count(key) != 0; }
    std::optional<double> number(const std::string& key) const;
    std::optional<std::string> text(const std::string& key) const;
    std::optional<bool> flag(const std::string& key) const;
};

/// Shortest decimal string that reads back to the same double; inf, -inf, nan.
std::string format_double(double v);

/// The documented column order for a config (depends on mode, J and the free
/// variable names).
std::vector<std::string> record_header(const ExperimentConfig& cfg);

std::string format_csv(const std::vector<ResultRecord>& records, const std::vector<std::string>& header);
std::string format_json_lines(const std::vector<ResultRecord>& records, const std::vector<std::string>& header);

/// Writes to a temporary sibling and renames it over `path`.
void write_file_atomic(const std::string& path, const std::string& content);

/// Throws ParameterError if a record carries a key outside the header.
void write_records(const std::vector<ResultRecord>& records, const std::vector<std::string>& header,
                   const OutputConfig& output);

} // namespace replica_cs::harness
