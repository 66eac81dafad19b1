#include "adapcr/logging.hpp"

#include <atomic>
#include <chrono>
#include <iostream>
#include <mutex>

#include "adapcr/error.hpp"

namespace adapcr::log {
namespace {

std::atomic<Level> g_level{Level::Info};
std::mutex g_mutex;

const char* name_of(Level level) {
    switch (level) {
        case Level::Debug: return "debug";
        case Level::Info: return "info";
        case Level::Warn: return "warn";
        case Level::Error: return "error";
        case Level::Off: return "off";
    }
    return "info";
}

}  // namespace

Level parse_level(std::string_view name) {
    for (Level l : {Level::Debug, Level::Info, Level::Warn, Level::Error, Level::Off}) {
        if (name == name_of(l)) return l;
    }
    throw ConfigError("unknown log level: " + std::string(name));
}

void set_level(Level level) { g_level = level; }
Level level() { return g_level; }

void event(Level lvl, std::string_view name, const nlohmann::json& fields) {
    if (lvl < g_level.load() || g_level.load() == Level::Off) return;
    const auto now = std::chrono::system_clock::now().time_since_epoch();
    const double ts = std::chrono::duration<double>(now).count();
    const nlohmann::json line{{"ts", ts}, {"level", name_of(lvl)}, {"event", name}, {"fields", fields}};
    std::lock_guard lock(g_mutex);
    std::cerr << line.dump() << '\n';
}

}  // namespace adapcr::log
