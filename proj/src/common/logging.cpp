#include "lorekt/common/logging.hpp"

#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

namespace lorekt {

std::shared_ptr<spdlog::logger> logger() {
  static std::shared_ptr<spdlog::logger> instance = [] {
    auto l = spdlog::stderr_color_mt("lorekt");
    l->set_pattern("[%H:%M:%S] [%^%l%$] %v");
    return l;
  }();
  return instance;
}

}  // namespace lorekt
