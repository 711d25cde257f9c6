#pragma once

#include "emaxbr/model.hpp"

#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace emaxbr {

enum class DataLayout { Auto, Subject, Aggregated };

std::string_view to_string(DataLayout layout);
std::optional<DataLayout> parse_layout(std::string_view name);

class ParseError : public std::runtime_error {
public:
    ParseError(int line, const std::string& message);
    int line;  // 1-based; 0 when the problem is not tied to a line
};

/// Header row is mandatory. Subject layout has columns (dose, y), aggregated
/// has (dose, n, events), in any order; names are case-insensitive. Blank
/// lines are skipped, a UTF-8 BOM and surrounding whitespace are ignored.
/// With an explicit layout the header must match it. The layout found is
/// stored in `detected` when given.
ObservationSet parse_data_csv(std::string_view text, DataLayout layout = DataLayout::Auto,
                              DataLayout* detected = nullptr);

/// Reads and parses a file. A missing or unreadable file is a ParseError at
/// line 0.
ObservationSet read_data_csv(const std::filesystem::path& path, DataLayout layout = DataLayout::Auto,
                             DataLayout* detected = nullptr);

std::string read_text_file(const std::filesystem::path& path);

}  // namespace emaxbr
