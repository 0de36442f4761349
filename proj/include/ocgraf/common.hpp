#pragma once

#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>

namespace ocgraf {

// Deterministic 64-bit stream splitting: every consumer of randomness draws
// from an Rng made by rng_for(seed, "tag", salt). Never reuse a stream.
inline uint64_t fnv1a64(std::string_view s, uint64_t h = 1469598103934665603ull) {
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

inline uint64_t hash_combine(uint64_t a, uint64_t b) {
    a ^= b + 0x9e3779b97f4a7c15ull + (a << 6) + (a >> 2);
    return a;
}

using Rng = std::mt19937_64;

inline Rng rng_for(uint64_t seed, std::string_view tag, uint64_t salt = 0) {
    return Rng(hash_combine(hash_combine(seed, fnv1a64(tag)), salt));
}

enum class LogLevel { Debug = 0, Info = 1, Warn = 2 };

inline LogLevel& log_level() {
    static LogLevel lvl = [] {
        const char* env = std::getenv("OCGRAF_LOG");
        if (!env) return LogLevel::Warn;
        std::string_view v(env);
        if (v == "debug") return LogLevel::Debug;
        if (v == "info") return LogLevel::Info;
        return LogLevel::Warn;
    }();
    return lvl;
}

template <typename... Args>
void log_at(LogLevel lvl, const char* prefix, const char* fmt, Args... args) {
    if (lvl < log_level()) return;
    std::fprintf(stderr, "[%s] ", prefix);
    std::fprintf(stderr, fmt, args...);
    std::fprintf(stderr, "\n");
}

#define OCGRAF_DEBUG(...) ::ocgraf::log_at(::ocgraf::LogLevel::Debug, "debug", __VA_ARGS__)
#define OCGRAF_INFO(...) ::ocgraf::log_at(::ocgraf::LogLevel::Info, "info", __VA_ARGS__)
#define OCGRAF_WARN(...) ::ocgraf::log_at(::ocgraf::LogLevel::Warn, "warn", __VA_ARGS__)

struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace ocgraf
