#ifndef XMR_UTIL_HPP
#define XMR_UTIL_HPP

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <exception>
#include <fstream>
#include <optional>
#include <string>
#include <string_view>
#include <system_error>
#include <thread>
#include <vector>

#include "error.hpp"

namespace xmr {

// Two-sided p-value of a standard-normal z statistic.
inline double two_sided_p(double z) { return std::erfc(std::fabs(z) / std::sqrt(2.0)); }

inline std::vector<std::string> split_ws(std::string_view line) {
    std::vector<std::string> out;
    std::size_t i = 0;
    while (i < line.size()) {
        while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
        std::size_t j = i;
        while (j < line.size() && line[j] != ' ' && line[j] != '\t' && line[j] != '\r') ++j;
        if (j > i) out.emplace_back(line.substr(i, j - i));
        i = j;
    }
    return out;
}

inline std::vector<std::string> split_on(std::string_view line, char delim) {
    std::vector<std::string> out;
    std::size_t start = 0;
    for (;;) {
        auto pos = line.find(delim, start);
        auto field = line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start);
        if (!field.empty() && field.back() == '\r') field.remove_suffix(1);
        out.emplace_back(field);
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return out;
}

inline std::optional<double> parse_double(std::string_view s) {
    if (!s.empty() && s.front() == '+') s.remove_prefix(1);
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size() || s.empty()) return std::nullopt;
    return v;
}

inline std::optional<long long> parse_int(std::string_view s) {
    long long v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size() || s.empty()) return std::nullopt;
    return v;
}

/// Shortest round-trip scientific representation with an upper-case exponent
/// and at least three mantissa decimals, e.g. -2.495E-02 or 0.000E+00.
inline std::string format_sci(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::scientific);
    std::string s(buf, res.ptr);
    auto e = s.find('e');
    std::string mant = s.substr(0, e);
    std::string expo = s.substr(e + 1);
    auto dot = mant.find('.');
    std::size_t decimals = dot == std::string::npos ? 0 : mant.size() - dot - 1;
    if (dot == std::string::npos) mant += '.';
    for (; decimals < 3; ++decimals) mant += '0';
    return mant + 'E' + expo;
}

/// Shortest round-trip decimal representation (general format).
inline std::string format_num(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

inline std::ifstream open_input(const std::string &path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::FileNotFound, "cannot open file [" + path + "] to read");
    return in;
}

// 64-bit FNV-1a; used to derive stable per-item seeds from names.
inline std::uint64_t fnv1a(std::string_view s, std::uint64_t h = 1469598103934665603ULL) {
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

inline std::uint64_t derive_seed(std::uint64_t base, std::string_view key) {
    std::uint64_t h = fnv1a(key, 1469598103934665603ULL ^ (base * 0x9E3779B97F4A7C15ULL));
    // splitmix64 finalizer
    h += 0x9E3779B97F4A7C15ULL;
    h = (h ^ (h >> 30)) * 0xBF58476D1CE4E5B9ULL;
    h = (h ^ (h >> 27)) * 0x94D049BB133111EBULL;
    return h ^ (h >> 31);
}

/// Runs body(i) for i in [0, count) on up to `jobs` threads. Each index is
/// handled by exactly one call; callers write into pre-sized slots so the
/// result order never depends on scheduling.
template <typename Body>
void parallel_for(std::size_t count, unsigned jobs, Body &&body) {
    jobs = std::max(1u, std::min<unsigned>(jobs, static_cast<unsigned>(std::max<std::size_t>(count, 1))));
    if (jobs == 1) {
        for (std::size_t i = 0; i < count; ++i) body(i);
        return;
    }
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(count);
    for (unsigned t = 0; t < jobs; ++t) {
        pool.emplace_back([&, t] {
            for (std::size_t i = t; i < count; i += jobs) {
                try {
                    body(i);
                } catch (...) {
                    errors[i] = std::current_exception();
                }
            }
        });
    }
    for (auto &th : pool) th.join();
    // the lowest failing index wins, independent of thread count
    for (auto &e : errors)
        if (e) std::rethrow_exception(e);
}

} // namespace xmr

#endif // XMR_UTIL_HPP
