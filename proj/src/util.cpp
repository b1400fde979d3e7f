#include "climagent/util.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <cctype>
#include <chrono>
#include <ctime>
#include <fstream>
#include <sstream>

#include "climagent/error.hpp"

namespace climagent {

std::string sha256_hex(std::string_view bytes) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr);
    static constexpr char hex[] = "0123456789abcdef";
    std::string out;
    out.reserve(len * 2);
    for (unsigned int i = 0; i < len; ++i) {
        out.push_back(hex[digest[i] >> 4]);
        out.push_back(hex[digest[i] & 0xF]);
    }
    return out;
}

std::uint64_t fnv1a64(std::string_view bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(Errc::parse_error, "cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file_atomic(const fs::path& path, std::string_view bytes) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) fail(Errc::persistence_failure, "cannot write " + tmp.string());
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!out) fail(Errc::persistence_failure, "short write to " + tmp.string());
    }
    std::error_code ec;
    fs::rename(tmp, path, ec);
    if (ec) fail(Errc::persistence_failure, "rename " + tmp.string() + ": " + ec.message());
}

void append_line(const fs::path& path, std::string_view line) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::app);
    if (!out) fail(Errc::persistence_failure, "cannot append to " + path.string());
    out << line << '\n';
    out.flush();
    if (!out) fail(Errc::persistence_failure, "append failed on " + path.string());
}

json read_json_file(const fs::path& path) {
    auto text = read_file(path);
    try {
        return json::parse(text);
    } catch (const json::parse_error& e) {
        fail(Errc::parse_error, path.string() + ": " + e.what());
    }
}

void write_json_file(const fs::path& path, const json& value) {
    write_file_atomic(path, value.dump(2) + "\n");
}

std::vector<json> read_json_lines(const fs::path& path) {
    std::ifstream in(path);
    if (!in) fail(Errc::parse_error, "cannot open " + path.string());
    std::vector<json> rows;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        try {
            rows.push_back(json::parse(line));
        } catch (const json::parse_error& e) {
            fail(Errc::parse_error,
                 path.string() + ":" + std::to_string(line_no) + ": " + e.what());
        }
    }
    return rows;
}

std::string now_iso8601() {
    auto now = std::chrono::system_clock::now();
    auto secs = std::chrono::system_clock::to_time_t(now);
    auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(now.time_since_epoch()) % 1000;
    std::tm tm{};
    gmtime_r(&secs, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%S", &tm);
    char out[48];
    std::snprintf(out, sizeof out, "%s.%03dZ", buf, static_cast<int>(ms.count()));
    return out;
}

std::string trim(std::string_view s) {
    auto begin = s.find_first_not_of(" \t\r\n");
    if (begin == std::string_view::npos) return {};
    auto end = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(begin, end - begin + 1));
}

std::string to_lower(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

bool contains(std::string_view haystack, std::string_view needle) {
    return haystack.find(needle) != std::string_view::npos;
}

std::optional<std::string> extract_fenced(std::string_view text,
                                          const std::vector<std::string>& langs) {
    std::size_t pos = 0;
    while (true) {
        auto open = text.find("```", pos);
        if (open == std::string_view::npos) return std::nullopt;
        auto eol = text.find('\n', open);
        if (eol == std::string_view::npos) return std::nullopt;
        auto info = trim(text.substr(open + 3, eol - open - 3));
        auto close = text.find("```", eol + 1);
        if (close == std::string_view::npos) return std::nullopt;
        bool accepted = langs.empty() ||
                        std::find(langs.begin(), langs.end(), to_lower(info)) != langs.end();
        if (accepted) return std::string(text.substr(eol + 1, close - eol - 1));
        pos = close + 3;
    }
}

bool path_within(const fs::path& root, const fs::path& p) {
    std::error_code ec;
    auto r = fs::weakly_canonical(root, ec);
    if (ec) return false;
    auto q = fs::weakly_canonical(p, ec);
    if (ec) return false;
    auto rel = q.lexically_relative(r);
    if (rel.empty()) return false;
    auto first = *rel.begin();
    return first != ".." && !rel.is_absolute();
}

}  // namespace climagent
