#include "rubriclearn/text.hpp"

#include "rubriclearn/error.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

namespace rubriclearn::text {

namespace {

bool is_continuation(unsigned char c) { return (c & 0xC0) == 0x80; }

std::size_t sequence_length(unsigned char lead) {
    if (lead < 0x80) return 1;
    if ((lead & 0xE0) == 0xC0) return 2;
    if ((lead & 0xF0) == 0xE0) return 3;
    if ((lead & 0xF8) == 0xF0) return 4;
    return 1;
}

// Length of the code point starting at `pos`; malformed sequences advance one byte.
std::size_t step(std::string_view s, std::size_t pos) {
    const std::size_t len = sequence_length(static_cast<unsigned char>(s[pos]));
    if (len == 1 || pos + len > s.size()) return 1;
    for (std::size_t i = 1; i < len; ++i) {
        if (!is_continuation(static_cast<unsigned char>(s[pos + i]))) return 1;
    }
    return len;
}

} // namespace

std::size_t codepoint_length(std::string_view utf8) {
    std::size_t count = 0;
    for (std::size_t pos = 0; pos < utf8.size(); pos += step(utf8, pos)) ++count;
    return count;
}

std::size_t codepoint_to_byte(std::string_view utf8, std::size_t cp_index) {
    std::size_t pos = 0;
    for (std::size_t i = 0; i < cp_index && pos < utf8.size(); ++i) pos += step(utf8, pos);
    return pos;
}

std::size_t byte_to_codepoint(std::string_view utf8, std::size_t byte_offset) {
    std::size_t count = 0;
    for (std::size_t pos = 0; pos < utf8.size() && pos < byte_offset; pos += step(utf8, pos)) {
        ++count;
    }
    return count;
}

std::uint64_t fnv1a64(std::string_view data, std::uint64_t seed) {
    std::uint64_t h = seed;
    for (unsigned char c : data) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::string hex64(std::uint64_t value) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(value));
    return buf;
}

std::string fixed(double value, int decimals) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", decimals, value);
    std::string out = buf;
    // "-0.00" reads as a sign error in reports.
    if (out.front() == '-' && out.find_first_not_of("-0.") == std::string::npos) out.erase(0, 1);
    return out;
}

std::string trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r\n");
    if (first == std::string_view::npos) return {};
    const auto last = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(first, last - first + 1));
}

bool starts_with(std::string_view s, std::string_view prefix) {
    return s.substr(0, prefix.size()) == prefix;
}

std::vector<std::string> split_lines(std::string_view s) {
    std::vector<std::string> lines;
    std::size_t start = 0;
    while (start <= s.size()) {
        const auto nl = s.find('\n', start);
        if (nl == std::string_view::npos) {
            if (start < s.size()) lines.emplace_back(s.substr(start));
            break;
        }
        lines.emplace_back(s.substr(start, nl - start));
        start = nl + 1;
    }
    return lines;
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file_atomic(const std::filesystem::path& path, std::string_view contents) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error("cannot write " + tmp.string());
        out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
        if (!out) throw Error("write failed for " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

} // namespace rubriclearn::text
