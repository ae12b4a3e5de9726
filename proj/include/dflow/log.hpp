#pragma once

#include <string_view>

namespace dflow {

// Warnings go to stderr unless silenced (tests silence them).
void set_warnings_enabled(bool enabled);
bool warnings_enabled();
void log_warning(std::string_view message);

}  // namespace dflow
