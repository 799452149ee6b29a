#pragma once

#include <spdlog/logger.h>

#include <memory>

namespace lorekt {

// Shared stderr logger; stdout is reserved for machine-readable output.
std::shared_ptr<spdlog::logger> logger();

}  // namespace lorekt
