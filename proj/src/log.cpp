#include "tefb/log.hpp"

#include <spdlog/spdlog.h>

#include <cstdlib>

namespace tefb {

void init_logging() {
  const char* v = std::getenv("TEFB_LOG");
  spdlog::set_level(v ? spdlog::level::from_str(v) : spdlog::level::warn);
  spdlog::set_pattern("[%l] %v");
}

}  // namespace tefb
