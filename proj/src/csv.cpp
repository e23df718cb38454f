#include "compass/csv.hpp"

#include "compass/error.hpp"

namespace compass::csv {

std::vector<std::vector<std::string>> parse(std::string_view text) {
    std::vector<std::vector<std::string>> records;
    std::vector<std::string> record;
    std::string field;
    bool in_quotes = false;
    bool field_started = false;
    std::size_t line = 1;

    auto end_record = [&] {
        record.push_back(std::move(field));
        field.clear();
        const bool blank = record.size() == 1 && record.front().empty() && !field_started;
        if (!blank) records.push_back(std::move(record));
        record.clear();
        field_started = false;
    };

    if (text.size() >= 3 && text.substr(0, 3) == "\xEF\xBB\xBF") text.remove_prefix(3);

    for (std::size_t i = 0; i < text.size(); ++i) {
        const char c = text[i];
        if (in_quotes) {
            if (c == '"') {
                if (i + 1 < text.size() && text[i + 1] == '"') {
                    field.push_back('"');
                    ++i;
                } else {
                    in_quotes = false;
                }
            } else {
                if (c == '\n') ++line;
                field.push_back(c);
            }
            continue;
        }
        switch (c) {
        case '"':
            in_quotes = true;
            field_started = true;
            break;
        case ',':
            record.push_back(std::move(field));
            field.clear();
            field_started = true;
            break;
        case '\r':
            if (i + 1 < text.size() && text[i + 1] == '\n') break;
            end_record();
            ++line;
            break;
        case '\n':
            end_record();
            ++line;
            break;
        default:
            field.push_back(c);
            field_started = true;
        }
    }
    if (in_quotes) throw ParseError("unterminated quoted field near line " + std::to_string(line));
    if (field_started || !field.empty() || !record.empty()) end_record();
    return records;
}

std::string escape(std::string_view field) {
    if (field.find_first_of(",\"\r\n") == std::string_view::npos) return std::string(field);
    std::string out = "\"";
    for (char c : field) {
        if (c == '"') out.push_back('"');
        out.push_back(c);
    }
    out.push_back('"');
    return out;
}

std::string join_row(const std::vector<std::string>& fields) {
    std::string out;
    for (std::size_t i = 0; i < fields.size(); ++i) {
        if (i) out.push_back(',');
        out += escape(fields[i]);
    }
    return out;
}

} // namespace compass::csv
