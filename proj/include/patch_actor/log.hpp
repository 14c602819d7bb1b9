#pragma once

#include <cstdio>
#include <cstdlib>
#include <cstring>

namespace patch_actor {

enum class LogLevel { Error = 0, Warn = 1, Info = 2, Debug = 3 };

/// Level comes from PATCH_ACTOR_LOG (error|warn|info|debug), default warn.
inline LogLevel log_level() {
    static const LogLevel level = [] {
        const char* env = std::getenv("PATCH_ACTOR_LOG");
        if (env == nullptr) return LogLevel::Warn;
        if (std::strcmp(env, "error") == 0) return LogLevel::Error;
        if (std::strcmp(env, "info") == 0) return LogLevel::Info;
        if (std::strcmp(env, "debug") == 0) return LogLevel::Debug;
        return LogLevel::Warn;
    }();
    return level;
}

template <typename... Args>
void log(LogLevel level, const char* fmt, Args... args) {
    if (level > log_level()) return;
    const char* tag = level == LogLevel::Error  ? "error"
                      : level == LogLevel::Warn ? "warn"
                      : level == LogLevel::Info ? "info"
                                                : "debug";
    std::fprintf(stderr, "[%s] ", tag);
    if constexpr (sizeof...(Args) == 0) {
        std::fputs(fmt, stderr);
    } else {
        std::fprintf(stderr, fmt, args...);
    }
    std::fputc('\n', stderr);
}

#define PA_LOG_ERROR(...) ::patch_actor::log(::patch_actor::LogLevel::Error, __VA_ARGS__)
#define PA_LOG_WARN(...) ::patch_actor::log(::patch_actor::LogLevel::Warn, __VA_ARGS__)
#define PA_LOG_INFO(...) ::patch_actor::log(::patch_actor::LogLevel::Info, __VA_ARGS__)
#define PA_LOG_DEBUG(...) ::patch_actor::log(::patch_actor::LogLevel::Debug, __VA_ARGS__)

} // namespace patch_actor
