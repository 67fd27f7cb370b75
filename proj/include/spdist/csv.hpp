#pragma once

// Minimal CSV reading and writing for the pipeline's file formats: comma
// separated, no quoting, header row required. Doubles are written in the
// shortest form that parses back to the same value.

#include <spdist/errors.hpp>

#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

namespace spdist::csv {

inline std::string format_double(double x) {
    if (std::isnan(x)) return "";
    char buf[64];
    const auto r = std::to_chars(buf, buf + sizeof(buf), x);
    return std::string(buf, r.ptr);
}

inline std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

inline std::vector<std::string_view> split(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    for (;;) {
        const std::size_t comma = line.find(',', start);
        out.push_back(trim(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start)));
        if (comma == std::string_view::npos) break;
        start = comma + 1;
    }
    return out;
}

class Table;

// One data row; values are fetched by column name with line-numbered errors.
class Row {
public:
    Row(const Table& table, std::vector<std::string_view> cells, std::size_t line)
        : table_(&table), cells_(std::move(cells)), line_(line) {}

    std::size_t line() const { return line_; }
    double number(std::string_view column) const;
    std::int64_t integer(std::string_view column) const;

private:
    std::string_view cell(std::string_view column) const;
    [[noreturn]] void fail(std::string_view column, const std::string& why) const;

    const Table* table_;
    std::vector<std::string_view> cells_;
    std::size_t line_;
};

class Table {
public:
    static Table read(const std::filesystem::path& path, const std::vector<std::string>& required) {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw SchemaError(path.filename().string() + ": cannot open " + path.string());
        std::ostringstream ss;
        ss << in.rdbuf();
        return parse(ss.str(), path.filename().string(), required);
    }

    static Table parse(std::string text, std::string name, const std::vector<std::string>& required) {
        Table t;
        t.name_ = std::move(name);
        t.text_ = std::move(text);
        std::string_view all = t.text_;
        std::size_t line_no = 0;
        bool have_header = false;
        while (!all.empty()) {
            const std::size_t nl = all.find('\n');
            std::string_view line = all.substr(0, nl);
            all = nl == std::string_view::npos ? std::string_view{} : all.substr(nl + 1);
            ++line_no;
            if (trim(line).empty()) continue;
            if (!have_header) {
                for (std::string_view h : split(line)) t.header_.emplace_back(h);
                have_header = true;
                continue;
            }
            t.rows_.push_back({split(line), line_no});
        }
        if (!have_header) throw SchemaError(t.name_ + ": missing header row");
        for (const std::string& col : required)
            if (t.column(col) < 0) throw SchemaError(t.name_ + ": missing required column '" + col + "'");
        for (const auto& [cells, ln] : t.rows_) {
            if (cells.size() != t.header_.size()) {
                throw SchemaError(t.name_ + ": line " + std::to_string(ln) + ": expected " +
                                  std::to_string(t.header_.size()) + " fields, found " + std::to_string(cells.size()));
            }
        }
        return t;
    }

    const std::string& name() const { return name_; }
    std::size_t size() const { return rows_.size(); }
    Row row(std::size_t i) const { return Row(*this, rows_[i].first, rows_[i].second); }

    int column(std::string_view name) const {
        for (std::size_t i = 0; i < header_.size(); ++i)
            if (header_[i] == name) return static_cast<int>(i);
        return -1;
    }

private:
    Table() = default;
    // Rows hold views into text_, so a Table must not be copied.
    Table(Table&&) = default;

    std::string name_;
    std::string text_;
    std::vector<std::string> header_;
    std::vector<std::pair<std::vector<std::string_view>, std::size_t>> rows_;
};

inline std::string_view Row::cell(std::string_view column) const {
    const int c = table_->column(column);
    if (c < 0) fail(column, "no such column");
    return cells_[static_cast<std::size_t>(c)];
}

inline void Row::fail(std::string_view column, const std::string& why) const {
    throw SchemaError(table_->name() + ": line " + std::to_string(line_) + ", column '" + std::string(column) +
                      "': " + why);
}

inline double Row::number(std::string_view column) const {
    const std::string_view s = cell(column);
    double x = 0.0;
    const auto r = std::from_chars(s.data(), s.data() + s.size(), x);
    if (r.ec != std::errc{} || r.ptr != s.data() + s.size()) fail(column, "expected a number, found '" + std::string(s) + "'");
    if (!std::isfinite(x)) fail(column, "value is not finite");
    return x;
}

inline std::int64_t Row::integer(std::string_view column) const {
    const std::string_view s = cell(column);
    std::int64_t x = 0;
    const auto r = std::from_chars(s.data(), s.data() + s.size(), x);
    if (r.ec != std::errc{} || r.ptr != s.data() + s.size()) fail(column, "expected an integer, found '" + std::string(s) + "'");
    return x;
}

// Write-then-rename so readers never observe a partial file.
inline void write_file_atomic(const std::filesystem::path& path, std::string_view content) {
    std::filesystem::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw ConfigError("cannot write " + tmp.string());
        out.write(content.data(), static_cast<std::streamsize>(content.size()));
        if (!out) throw ConfigError("failed writing " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

// Builds one CSV document in memory.
class Writer {
public:
    explicit Writer(std::initializer_list<std::string_view> header) {
        bool first = true;
        for (std::string_view h : header) {
            if (!first) out_ += ',';
            out_ += h;
            first = false;
        }
        out_ += '\n';
    }

    Writer& cell(std::string_view s) {
        sep();
        out_ += s;
        return *this;
    }
    Writer& cell(double x) { return cell(std::string_view(format_double(x))); }
    template <class Int>
        requires std::is_integral_v<Int>
    Writer& cell(Int x) {
        char buf[32];
        const auto r = std::to_chars(buf, buf + sizeof(buf), x);
        return cell(std::string_view(buf, static_cast<std::size_t>(r.ptr - buf)));
    }
    Writer& end_row() {
        out_ += '\n';
        fresh_ = true;
        return *this;
    }

    const std::string& str() const { return out_; }
    void save(const std::filesystem::path& path) const { write_file_atomic(path, out_); }

private:
    void sep() {
        if (!fresh_) out_ += ',';
        fresh_ = false;
    }

    std::string out_;
    bool fresh_ = true;
};

} // namespace spdist::csv
