#pragma once

#include <charconv>
#include <cstdint>
#include <map>
#include <string>
#include <system_error>
#include <vector>

#include "hairmatte/errors.hpp"

namespace hairmatte {

// Shortest round-trip decimal form; identical input bits always give the
// identical string, which keeps emitted text files reproducible.
template <typename F>
std::string format_number(F v) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, ptr);
}

inline double parse_double(const std::string& s, const std::string& what) {
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    require(ec == std::errc() && ptr == s.data() + s.size(), ErrorKind::format,
            "cannot parse number \"" + s + "\" for " + what);
    return v;
}

inline long parse_long(const std::string& s, const std::string& what) {
    long v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    require(ec == std::errc() && ptr == s.data() + s.size(), ErrorKind::format,
            "cannot parse integer \"" + s + "\" for " + what);
    return v;
}

inline std::vector<std::string> split_lines(const std::string& text) {
    std::vector<std::string> lines;
    std::size_t start = 0;
    while (start <= text.size()) {
        std::size_t end = text.find('\n', start);
        if (end == std::string::npos) {
            if (start < text.size()) lines.push_back(text.substr(start));
            break;
        }
        lines.push_back(text.substr(start, end - start));
        start = end + 1;
    }
    return lines;
}

// key=value lines; blank lines and '#' comments are skipped
inline std::map<std::string, std::string> parse_kv(const std::string& text,
                                                   const std::string& what) {
    std::map<std::string, std::string> kv;
    for (const auto& line : split_lines(text)) {
        if (line.empty() || line[0] == '#') continue;
        const std::size_t eq = line.find('=');
        require(eq != std::string::npos, ErrorKind::format,
                "malformed line \"" + line + "\" in " + what + " (expected key=value)");
        kv[line.substr(0, eq)] = line.substr(eq + 1);
    }
    return kv;
}

}  // namespace hairmatte
