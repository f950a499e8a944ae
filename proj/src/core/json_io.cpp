#include "regrel/json_io.hpp"

#include <fstream>
#include <optional>
#include <sstream>

#include <fcntl.h>
#include <unistd.h>

#include "regrel/error.hpp"

namespace regrel {

std::vector<json> parse_jsonl(std::string_view content, std::string_view source_name)
{
    std::vector<json> records;
    std::size_t line_no = 0;
    std::size_t start = 0;
    while (start <= content.size()) {
        auto end = content.find('\n', start);
        if (end == std::string_view::npos) {
            end = content.size();
        }
        ++line_no;
        auto line = content.substr(start, end - start);
        if (line.find_first_not_of(" \t\r") != std::string_view::npos) {
            try {
                records.push_back(json::parse(line));
            } catch (const json::parse_error& e) {
                throw ParseError(std::string(source_name) + ":" + std::to_string(line_no) + ": " +
                                     e.what(),
                                 std::string(line));
            }
        }
        if (end == content.size()) {
            break;
        }
        start = end + 1;
    }
    return records;
}

std::vector<json> read_jsonl_file(const std::filesystem::path& path)
{
    return parse_jsonl(read_text_file(path), path.string());
}

std::string to_jsonl(const std::vector<json>& records)
{
    std::string out;
    for (const auto& record : records) {
        out += record.dump();
        out += '\n';
    }
    return out;
}

std::string read_text_file(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw NotFoundError("cannot open " + path.string());
    }
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return buffer.str();
}

void write_text_file_atomic(const std::filesystem::path& path, std::string_view content)
{
    auto tmp = path;
    tmp += ".tmp";
    int fd = ::open(tmp.c_str(), O_WRONLY | O_CREAT | O_TRUNC, 0644);
    if (fd < 0) {
        throw Error("cannot write " + tmp.string());
    }
    std::size_t written = 0;
    while (written < content.size()) {
        auto n = ::write(fd, content.data() + written, content.size() - written);
        if (n < 0) {
            ::close(fd);
            throw Error("write failed for " + tmp.string());
        }
        written += static_cast<std::size_t>(n);
    }
    ::fsync(fd);
    ::close(fd);
    std::filesystem::rename(tmp, path);
}

json read_json_file(const std::filesystem::path& path)
{
    auto text = read_text_file(path);
    try {
        return json::parse(text);
    } catch (const json::parse_error& e) {
        throw ParseError(path.string() + ": " + e.what(), text);
    }
}

std::optional<std::string> optional_string(const json& j, const char* key)
{
    auto it = j.find(key);
    if (it == j.end() || it->is_null()) {
        return std::nullopt;
    }
    if (!it->is_string()) {
        throw ValidationError(std::string("field '") + key + "' must be a string");
    }
    return it->get<std::string>();
}

std::string required_string(const json& j, const char* key, std::string_view context)
{
    auto it = j.find(key);
    if (it == j.end() || !it->is_string()) {
        throw ValidationError(std::string(context) + ": missing string field '" + key + "'");
    }
    return it->get<std::string>();
}

}  // namespace regrel
