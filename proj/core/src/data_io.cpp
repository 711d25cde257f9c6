#include "emaxbr/data_io.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>
#include <sstream>
#include <vector>

namespace emaxbr {

namespace {

std::string_view trim(std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    return s;
}

std::string lower(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return std::tolower(c); });
    return out;
}

std::vector<std::string_view> split(std::string_view line) {
    std::vector<std::string_view> cells;
    std::size_t pos = 0;
    while (true) {
        const std::size_t comma = line.find(',', pos);
        cells.push_back(trim(line.substr(pos, comma == std::string_view::npos ? std::string_view::npos : comma - pos)));
        if (comma == std::string_view::npos) break;
        pos = comma + 1;
    }
    return cells;
}

double parse_double(std::string_view cell, int line, std::string_view column) {
    double v = 0.0;
    const auto* end = cell.data() + cell.size();
    const auto [ptr, ec] = std::from_chars(cell.data(), end, v);
    if (cell.empty() || ec != std::errc() || ptr != end)
        throw ParseError(line, "column '" + std::string(column) + "': not a number: '" + std::string(cell) + "'");
    return v;
}

long parse_int(std::string_view cell, int line, std::string_view column) {
    long v = 0;
    const auto* end = cell.data() + cell.size();
    const auto [ptr, ec] = std::from_chars(cell.data(), end, v);
    if (cell.empty() || ec != std::errc() || ptr != end)
        throw ParseError(line, "column '" + std::string(column) + "': not an integer: '" + std::string(cell) + "'");
    return v;
}

}  // namespace

std::string_view to_string(DataLayout layout) {
    switch (layout) {
        case DataLayout::Auto: return "auto";
        case DataLayout::Subject: return "subject";
        case DataLayout::Aggregated: return "aggregated";
    }
    return "?";
}

std::optional<DataLayout> parse_layout(std::string_view name) {
    const std::string n = lower(trim(name));
    if (n == "auto") return DataLayout::Auto;
    if (n == "subject") return DataLayout::Subject;
    if (n == "aggregated" || n == "aggregate") return DataLayout::Aggregated;
    return std::nullopt;
}

ParseError::ParseError(int line_no, const std::string& message)
    : std::runtime_error(line_no > 0 ? "line " + std::to_string(line_no) + ": " + message : message), line(line_no) {}

ObservationSet parse_data_csv(std::string_view text, DataLayout layout, DataLayout* detected) {
    if (text.substr(0, 3) == "\xEF\xBB\xBF") text.remove_prefix(3);

    std::vector<std::pair<int, std::string_view>> lines;
    int line_no = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        const std::size_t nl = text.find('\n', pos);
        std::string_view raw = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
        ++line_no;
        if (!trim(raw).empty()) lines.emplace_back(line_no, trim(raw));
        if (nl == std::string_view::npos) break;
        pos = nl + 1;
    }
    if (lines.empty()) throw ParseError(0, "empty input: a header row is required");

    const auto [header_line, header_text] = lines.front();
    const auto header = split(header_text);
    int dose_col = -1, y_col = -1, n_col = -1, events_col = -1;
    for (int c = 0; c < static_cast<int>(header.size()); ++c) {
        const std::string name = lower(header[c]);
        int* slot = nullptr;
        if (name == "dose") slot = &dose_col;
        else if (name == "y") slot = &y_col;
        else if (name == "n") slot = &n_col;
        else if (name == "events") slot = &events_col;
        else throw ParseError(header_line, "unknown column '" + std::string(header[c]) + "'");
        if (*slot >= 0) throw ParseError(header_line, "duplicate column '" + std::string(header[c]) + "'");
        *slot = c;
    }
    if (dose_col < 0) throw ParseError(header_line, "missing column 'dose'");

    DataLayout found;
    if (y_col >= 0 && n_col < 0 && events_col < 0) found = DataLayout::Subject;
    else if (y_col < 0 && n_col >= 0 && events_col >= 0) found = DataLayout::Aggregated;
    else throw ParseError(header_line, "header must be 'dose,y' (subject) or 'dose,n,events' (aggregated)");
    if (layout != DataLayout::Auto && layout != found)
        throw ParseError(header_line, "header describes " + std::string(to_string(found)) + " data but layout " +
                                          std::string(to_string(layout)) + " was requested");

    std::vector<DoseGroup> groups;
    groups.reserve(lines.size() - 1);
    for (std::size_t k = 1; k < lines.size(); ++k) {
        const auto [ln, body] = lines[k];
        const auto cells = split(body);
        if (cells.size() != header.size())
            throw ParseError(ln, "expected " + std::to_string(header.size()) + " fields, found " +
                                     std::to_string(cells.size()));
        DoseGroup g;
        g.dose = parse_double(cells[dose_col], ln, "dose");
        if (!std::isfinite(g.dose) || g.dose < 0.0) throw ParseError(ln, "dose must be finite and nonnegative");
        if (found == DataLayout::Subject) {
            const long y = parse_int(cells[y_col], ln, "y");
            if (y != 0 && y != 1) throw ParseError(ln, "y must be 0 or 1");
            g.n = 1;
            g.events = static_cast<int>(y);
        } else {
            const long n = parse_int(cells[n_col], ln, "n");
            const long e = parse_int(cells[events_col], ln, "events");
            if (n <= 0 || n > 100000000) throw ParseError(ln, "n must be a positive integer");
            if (e < 0 || e > n) throw ParseError(ln, "events must lie in [0, n]");
            g.n = static_cast<int>(n);
            g.events = static_cast<int>(e);
        }
        groups.push_back(g);
    }
    if (groups.empty()) throw ParseError(0, "no data rows after the header");
    if (detected) *detected = found;
    return ObservationSet::from_groups(std::move(groups));
}

std::string read_text_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError(0, "cannot open '" + path.string() + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

ObservationSet read_data_csv(const std::filesystem::path& path, DataLayout layout, DataLayout* detected) {
    return parse_data_csv(read_text_file(path), layout, detected);
}

}  // namespace emaxbr
