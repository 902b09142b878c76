#pragma once

namespace tefb {

/// Sets the spdlog level from TEFB_LOG (trace|debug|info|warn|error|off); default warn.
void init_logging();

}  // namespace tefb
