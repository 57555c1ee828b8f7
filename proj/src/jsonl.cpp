#include "juris/jsonl.hpp"

#include <fstream>
#include <sstream>

#include "juris/error.hpp"
#include "juris/text.hpp"

namespace juris::jsonl {

std::string read_file(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const std::filesystem::path& path, const std::string& contents)
{
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error(ErrorCode::IoError, "cannot write " + tmp.string());
        out << contents;
        if (!out) throw Error(ErrorCode::IoError, "short write to " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

std::vector<Line> read(const std::filesystem::path& path)
{
    std::string contents = read_file(path);
    std::vector<Line> out;
    std::size_t number = 0;
    for (std::string_view raw : text::split_lines(contents)) {
        ++number;
        std::string_view line = text::trim(raw);
        if (line.empty()) continue;
        try {
            out.push_back({number, nlohmann::json::parse(line)});
        } catch (const nlohmann::json::exception& e) {
            throw Error(ErrorCode::ParseError,
                        path.string() + ":" + std::to_string(number) + ": " + e.what());
        }
    }
    return out;
}

void write(const std::filesystem::path& path, const std::vector<nlohmann::ordered_json>& rows)
{
    std::string body;
    for (const auto& row : rows) {
        body += row.dump();
        body.push_back('\n');
    }
    write_file(path, body);
}

}  // namespace juris::jsonl
