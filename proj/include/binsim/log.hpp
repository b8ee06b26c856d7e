// Licensed under the terms of the Apache 2.0 license. See LICENSE in the project root.
#pragma once

#include <cstdio>
#include <cstdlib>
#include <cstring>

namespace binsim {

enum class LogLevel : int { Error = 0, Info = 1, Debug = 2 };

// Level comes from BINSIM_LOG={error|info|debug}; default info.
inline LogLevel log_level() {
    static const LogLevel level = [] {
        const char* env = std::getenv("BINSIM_LOG");
        if (env == nullptr) return LogLevel::Info;
        if (std::strcmp(env, "error") == 0) return LogLevel::Error;
        if (std::strcmp(env, "debug") == 0) return LogLevel::Debug;
        return LogLevel::Info;
    }();
    return level;
}

template <typename... Args>
void log_at(LogLevel lvl, const char* tag, const char* fmt, Args... args) {
    if (static_cast<int>(lvl) > static_cast<int>(log_level())) return;
    std::fprintf(stderr, "[%s] ", tag);
    std::fprintf(stderr, fmt, args...);
    std::fputc('\n', stderr);
}

template <typename... Args>
void log_error(const char* fmt, Args... args) {
    log_at(LogLevel::Error, "error", fmt, args...);
}
template <typename... Args>
void log_info(const char* fmt, Args... args) {
    log_at(LogLevel::Info, "info", fmt, args...);
}
template <typename... Args>
void log_debug(const char* fmt, Args... args) {
    log_at(LogLevel::Debug, "debug", fmt, args...);
}

}  // namespace binsim
