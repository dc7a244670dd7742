#include "netfex/log.hpp"

#include <cstdlib>
#include <mutex>
#include <string>

#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

namespace netfex::log {
namespace {

std::shared_ptr<spdlog::logger> logger()
{
    static std::once_flag once;
    static std::shared_ptr<spdlog::logger> instance;
    std::call_once(once, [] {
        instance = spdlog::stderr_color_mt("netfex");
        instance->set_pattern("[%H:%M:%S.%e] [%^%l%$] %v");
        instance->set_level(spdlog::level::warn);
    });
    return instance;
}

} // namespace

void init_from_env()
{
    const char* env = std::getenv("NETFEX_LOG");
    if (env == nullptr) return;
    logger()->set_level(spdlog::level::from_str(env));
}

void debug(std::string_view msg) { logger()->debug("{}", msg); }
void info(std::string_view msg) { logger()->info("{}", msg); }
void warn(std::string_view msg) { logger()->warn("{}", msg); }
void error(std::string_view msg) { logger()->error("{}", msg); }

} // namespace netfex::log
