#pragma once

#include <string_view>

#include "json.hpp"

namespace adapcr::log {

enum class Level { Debug = 0, Info = 1, Warn = 2, Error = 3, Off = 4 };

Level parse_level(std::string_view name);
void set_level(Level level);
Level level();

/// Writes {"ts", "level", "event", "fields"} as one line to stderr.
void event(Level level, std::string_view name, const nlohmann::json& fields = nlohmann::json::object());

inline void info(std::string_view name, const nlohmann::json& fields = nlohmann::json::object()) {
    event(Level::Info, name, fields);
}
inline void warn(std::string_view name, const nlohmann::json& fields = nlohmann::json::object()) {
    event(Level::Warn, name, fields);
}
inline void error(std::string_view name, const nlohmann::json& fields = nlohmann::json::object()) {
    event(Level::Error, name, fields);
}

}  // namespace adapcr::log
