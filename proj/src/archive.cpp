#include "climagent/archive.hpp"

#include <algorithm>
#include <cstring>

#include "climagent/error.hpp"

namespace climagent::archive {

namespace {

constexpr std::size_t kBlock = 512;

void put_octal(char* field, std::size_t width, std::uint64_t value) {
    // width includes the terminating NUL
    std::string digits(width - 1, '0');
    for (std::size_t i = width - 1; i-- > 0 && value;) {
        digits[i] = char('0' + (value & 7));
        value >>= 3;
    }
    std::memcpy(field, digits.data(), width - 1);
    field[width - 1] = '\0';
}

std::uint64_t get_octal(const char* field, std::size_t width) {
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < width && field[i] >= '0' && field[i] <= '7'; ++i) v = v * 8 + std::uint64_t(field[i] - '0');
    return v;
}

void split_name(const std::string& name, char* name_field, char* prefix_field) {
    if (name.size() <= 100) {
        std::memcpy(name_field, name.data(), name.size());
        return;
    }
    // ustar: prefix (<=155) + '/' + name (<=100)
    for (auto pos = name.rfind('/'); pos != std::string::npos && pos > 0; pos = name.rfind('/', pos - 1)) {
        if (pos <= 155 && name.size() - pos - 1 <= 100) {
            std::memcpy(prefix_field, name.data(), pos);
            std::memcpy(name_field, name.data() + pos + 1, name.size() - pos - 1);
            return;
        }
    }
    fail(Errc::invalid_argument, "archive path too long: " + name);
}

}  // namespace

std::string make_tar(std::vector<Entry> entries) {
    std::sort(entries.begin(), entries.end(), [](const Entry& a, const Entry& b) { return a.name < b.name; });
    std::string out;
    for (const auto& e : entries) {
        if (e.name.empty() || e.name.front() == '/' || e.name.find("..") != std::string::npos)
            fail(Errc::invalid_argument, "bad archive path: " + e.name);
        char h[kBlock] = {};
        split_name(e.name, h, h + 345);
        put_octal(h + 100, 8, 0644);
        put_octal(h + 108, 8, 0);
        put_octal(h + 116, 8, 0);
        put_octal(h + 124, 12, e.bytes.size());
        put_octal(h + 136, 12, 0);
        h[156] = '0';
        std::memcpy(h + 257, "ustar", 6);
        std::memcpy(h + 263, "00", 2);
        std::memset(h + 148, ' ', 8);
        unsigned sum = 0;
        for (unsigned char c : h) sum += c;
        put_octal(h + 148, 7, sum);
        h[155] = ' ';
        out.append(h, kBlock);
        out += e.bytes;
        out.append((kBlock - e.bytes.size() % kBlock) % kBlock, '\0');
    }
    out.append(2 * kBlock, '\0');
    return out;
}

std::vector<Entry> read_tar(std::string_view bytes) {
    std::vector<Entry> out;
    std::size_t pos = 0;
    while (pos + kBlock <= bytes.size()) {
        const char* h = bytes.data() + pos;
        if (std::all_of(h, h + kBlock, [](char c) { return c == '\0'; })) break;
        std::string name(h, strnlen(h, 100));
        std::string prefix(h + 345, strnlen(h + 345, 155));
        if (!prefix.empty()) name = prefix + "/" + name;
        auto size = get_octal(h + 124, 12);
        pos += kBlock;
        if (pos + size > bytes.size()) fail(Errc::parse_error, "truncated archive entry " + name);
        if (h[156] == '0' || h[156] == '\0') out.push_back({name, std::string(bytes.substr(pos, size))});
        pos += (size + kBlock - 1) / kBlock * kBlock;
    }
    return out;
}

}  // namespace climagent::archive
