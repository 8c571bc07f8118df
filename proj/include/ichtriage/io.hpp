#pragma once

// Plain-text CSV handling and atomic (temp file + rename) output staging.

#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "ichtriage/core.hpp"

namespace ichtriage::io {

namespace fs = std::filesystem;

inline std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorKind::Io, "cannot open '" + path.string() + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void write_file(const fs::path& path, std::string_view content) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorKind::Io, "cannot write '" + path.string() + "'");
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw Error(ErrorKind::Io, "short write to '" + path.string() + "'");
}

/// Collects every output of a command as temp files and renames them into
/// place only on commit(). Anything not committed is removed on destruction.
class AtomicOutputs {
public:
    AtomicOutputs() = default;
    AtomicOutputs(const AtomicOutputs&) = delete;
    AtomicOutputs& operator=(const AtomicOutputs&) = delete;

    ~AtomicOutputs() {
        if (committed_) return;
        std::error_code ec;
        for (const auto& [tmp, dest] : staged_) fs::remove(tmp, ec);
    }

    void stage(const fs::path& dest, std::string_view content) {
        if (dest.has_parent_path()) fs::create_directories(dest.parent_path());
        fs::path tmp = dest;
        tmp += ".tmp-" + std::to_string(staged_.size());
        write_file(tmp, content);
        staged_.emplace_back(tmp, dest);
    }

    void commit() {
        for (const auto& [tmp, dest] : staged_) fs::rename(tmp, dest);
        committed_ = true;
    }

    std::size_t size() const { return staged_.size(); }

private:
    std::vector<std::pair<fs::path, fs::path>> staged_;
    bool committed_ = false;
};

inline std::vector<std::string> split(std::string_view line, char sep = ',') {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        const auto pos = line.find(sep, start);
        std::string_view cell = line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start);
        while (!cell.empty() && (cell.back() == '\r' || cell.back() == ' ')) cell.remove_suffix(1);
        while (!cell.empty() && cell.front() == ' ') cell.remove_prefix(1);
        out.emplace_back(cell);
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return out;
}

/// Header-addressed CSV table. Cells are unquoted; identifiers must not
/// contain commas.
class CsvTable {
public:
    static CsvTable parse(std::string_view text, const std::string& origin = "csv") {
        CsvTable t;
        t.origin_ = origin;
        std::size_t start = 0;
        bool header = true;
        while (start < text.size()) {
            auto end = text.find('\n', start);
            if (end == std::string_view::npos) end = text.size();
            std::string_view line = text.substr(start, end - start);
            start = end + 1;
            if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
            if (line.empty()) continue;
            auto cells = split(line);
            if (header) {
                t.columns_ = cells;
                for (std::size_t i = 0; i < cells.size(); ++i) t.index_[cells[i]] = i;
                header = false;
            } else {
                if (cells.size() != t.columns_.size())
                    throw Error(ErrorKind::Format, origin + ": row " + std::to_string(t.rows_.size() + 1) + " has " +
                                                       std::to_string(cells.size()) + " cells, expected " +
                                                       std::to_string(t.columns_.size()));
                t.rows_.push_back(std::move(cells));
            }
        }
        if (header) throw Error(ErrorKind::Format, origin + ": missing header");
        return t;
    }

    static CsvTable load(const fs::path& path) { return parse(read_file(path), path.string()); }

    bool has(const std::string& column) const { return index_.count(column) != 0; }

    std::size_t column(const std::string& name) const {
        auto it = index_.find(name);
        if (it == index_.end()) throw Error(ErrorKind::Format, origin_ + ": missing column '" + name + "'");
        return it->second;
    }

    void require(std::initializer_list<const char*> names) const {
        for (const char* n : names) column(n);
    }

    const std::string& cell(std::size_t row, const std::string& name) const { return rows_.at(row)[column(name)]; }

    std::size_t rows() const { return rows_.size(); }
    const std::vector<std::string>& columns() const { return columns_; }
    const std::string& origin() const { return origin_; }

private:
    std::string origin_;
    std::vector<std::string> columns_;
    std::map<std::string, std::size_t> index_;
    std::vector<std::vector<std::string>> rows_;
};

class CsvWriter {
public:
    explicit CsvWriter(std::initializer_list<std::string_view> header) { row(header); }
    explicit CsvWriter(const std::vector<std::string>& header) {
        for (std::size_t i = 0; i < header.size(); ++i) {
            if (i) out_ << ',';
            out_ << header[i];
        }
        out_ << '\n';
    }

    template <typename Range>
    CsvWriter& row(const Range& cells) {
        bool first = true;
        for (const auto& c : cells) {
            if (!first) out_ << ',';
            out_ << c;
            first = false;
        }
        out_ << '\n';
        return *this;
    }

    CsvWriter& row(std::initializer_list<std::string_view> cells) { return row<std::initializer_list<std::string_view>>(cells); }

    std::string str() const { return out_.str(); }

private:
    std::ostringstream out_;
};

inline void check_identifier(const std::string& id, const char* what) {
    if (id.empty() || id.find_first_of(",\n\r\"") != std::string::npos)
        throw Error(ErrorKind::Data, std::string(what) + " '" + id + "' is empty or contains a CSV delimiter");
}

}  // namespace ichtriage::io
